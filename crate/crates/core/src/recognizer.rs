//! Chart-based (Earley) recognizer for any [`Grammar`].
//!
//! Works over whitespace-separated words. A named token matches the words of
//! its surface text (possibly several); a placeholder terminal matches one
//! word of its lexical class (identifier, integer, decimal, quoted string)
//! or a `<Category>` slot marker. Nullable nonterminals are handled by
//! advancing over them at prediction time.
//!
//! This is deliberately independent of the generator: it sees only rule
//! bodies, never classification or bandit state.

use std::collections::HashSet;

use crate::grammar::{Grammar, NtId, PlaceholderCategory, Symbol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Item {
    nt: u32,
    alt: u32,
    dot: u32,
    origin: u32,
}

pub struct Recognizer<'g> {
    grammar: &'g Grammar,
    nullable: Vec<bool>,
    surfaces: Vec<Vec<String>>,
}

impl<'g> Recognizer<'g> {
    pub fn new(grammar: &'g Grammar) -> Self {
        let n = grammar.nonterminal_count();
        let mut nullable = vec![false; n];
        let mut changed = true;
        while changed {
            changed = false;
            for (i, rule) in grammar.rules().iter().enumerate() {
                if nullable[i] {
                    continue;
                }
                if rule.alternatives.iter().any(|a| {
                    a.symbols.iter().all(|s| match s {
                        Symbol::NonTerminal(nt) => nullable[nt.index()],
                        _ => false,
                    })
                }) {
                    nullable[i] = true;
                    changed = true;
                }
            }
        }
        let surfaces = grammar
            .tokens()
            .iter()
            .map(|t| t.surface.split_whitespace().map(str::to_string).collect())
            .collect();
        Recognizer {
            grammar,
            nullable,
            surfaces,
        }
    }

    pub fn recognizes(&self, start: NtId, text: &str) -> bool {
        let words: Vec<&str> = text.split_whitespace().collect();
        self.recognizes_words(start, &words)
    }

    pub fn recognizes_words(&self, start: NtId, words: &[&str]) -> bool {
        let n = words.len();
        let mut sets: Vec<Vec<Item>> = vec![Vec::new(); n + 1];
        let mut seen: Vec<HashSet<Item>> = vec![HashSet::new(); n + 1];

        let push =
            |sets: &mut Vec<Vec<Item>>, seen: &mut Vec<HashSet<Item>>, pos: usize, item: Item| {
                if seen[pos].insert(item) {
                    sets[pos].push(item);
                }
            };

        for alt in 0..self.grammar.rule(start).alternatives.len() {
            push(
                &mut sets,
                &mut seen,
                0,
                Item {
                    nt: start.0,
                    alt: alt as u32,
                    dot: 0,
                    origin: 0,
                },
            );
        }

        for pos in 0..=n {
            let mut k = 0;
            while k < sets[pos].len() {
                let item = sets[pos][k];
                k += 1;
                let symbols =
                    &self.grammar.rules()[item.nt as usize].alternatives[item.alt as usize].symbols;
                match symbols.get(item.dot as usize) {
                    None => {
                        // complete
                        let origin = item.origin as usize;
                        let mut j = 0;
                        while j < sets[origin].len() {
                            let parent = sets[origin][j];
                            j += 1;
                            let psyms = &self.grammar.rules()[parent.nt as usize].alternatives
                                [parent.alt as usize]
                                .symbols;
                            if psyms.get(parent.dot as usize)
                                == Some(&Symbol::NonTerminal(NtId(item.nt)))
                            {
                                push(
                                    &mut sets,
                                    &mut seen,
                                    pos,
                                    Item {
                                        dot: parent.dot + 1,
                                        ..parent
                                    },
                                );
                            }
                        }
                    }
                    Some(Symbol::NonTerminal(nt)) => {
                        for alt in 0..self.grammar.rule(*nt).alternatives.len() {
                            push(
                                &mut sets,
                                &mut seen,
                                pos,
                                Item {
                                    nt: nt.0,
                                    alt: alt as u32,
                                    dot: 0,
                                    origin: pos as u32,
                                },
                            );
                        }
                        if self.nullable[nt.index()] {
                            push(
                                &mut sets,
                                &mut seen,
                                pos,
                                Item {
                                    dot: item.dot + 1,
                                    ..item
                                },
                            );
                        }
                    }
                    Some(sym) => {
                        if let Some(len) = self.match_terminal(*sym, &words[pos..]) {
                            push(
                                &mut sets,
                                &mut seen,
                                pos + len,
                                Item {
                                    dot: item.dot + 1,
                                    ..item
                                },
                            );
                        }
                    }
                }
            }
        }

        sets[n].iter().any(|it| {
            it.nt == start.0
                && it.origin == 0
                && it.dot as usize
                    == self.grammar.rules()[it.nt as usize].alternatives[it.alt as usize]
                        .symbols
                        .len()
        })
    }

    fn match_terminal(&self, sym: Symbol, rest: &[&str]) -> Option<usize> {
        match sym {
            Symbol::Token(t) => {
                let surface = &self.surfaces[t.index()];
                (rest.len() >= surface.len() && surface.iter().zip(rest).all(|(a, b)| a == b))
                    .then_some(surface.len())
            }
            Symbol::Placeholder(p) => {
                let word = rest.first()?;
                let category = self.grammar.placeholder(p).category;
                (slot_marker(word) == Some(category) || lexical_match(category, word)).then_some(1)
            }
            Symbol::NonTerminal(_) => None,
        }
    }
}

fn slot_marker(word: &str) -> Option<PlaceholderCategory> {
    word.strip_prefix('<')?.strip_suffix('>')?.parse().ok()
}

/// Whether `word` belongs to the lexical class of a placeholder category.
pub fn lexical_match(category: PlaceholderCategory, word: &str) -> bool {
    use PlaceholderCategory::*;
    match category {
        NewTable | ExistingTable | NewColumn | ExistingColumn | NewIndex | ExistingIndex
        | Identifier => is_identifier(word),
        IntConst => is_integer(word),
        FloatConst => {
            let unsigned = word.strip_prefix('-').unwrap_or(word);
            match unsigned.split_once('.') {
                Some((a, b)) => is_digits(a) && is_digits(b),
                None => false,
            }
        }
        StringConst => is_quoted(word),
    }
}

fn is_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn is_integer(s: &str) -> bool {
    is_digits(s.strip_prefix('-').unwrap_or(s))
}

fn is_identifier(s: &str) -> bool {
    let mut bytes = s.bytes();
    matches!(bytes.next(), Some(b) if b.is_ascii_alphabetic() || b == b'_')
        && bytes.all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

fn is_quoted(s: &str) -> bool {
    let Some(inner) = s.strip_prefix('\'').and_then(|r| r.strip_suffix('\'')) else {
        return false;
    };
    if s.len() < 2 {
        return false;
    }
    // every quote inside must be doubled
    let mut chars = inner.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\'' && chars.next() != Some('\'') {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{load_grammar, IngestConfig};

    fn grammar(text: &str, tokens: &str, ph: &str) -> Grammar {
        load_grammar(
            text,
            tokens,
            &IngestConfig {
                placeholders: Some(ph.into()),
                start_symbol: None,
            },
        )
        .unwrap()
    }

    #[test]
    fn ambiguous_expressions() {
        let g = grammar("e: e '+' e | e '*' e | '(' e ')' | N ;", "", "N IntConst\n");
        let r = Recognizer::new(&g);
        assert!(r.recognizes(g.start(), "1 + 2 * -3"));
        assert!(r.recognizes(g.start(), "( 1 + 2 ) * 3"));
        assert!(!r.recognizes(g.start(), "1 +"));
        assert!(!r.recognizes(g.start(), "( 1"));
        assert!(!r.recognizes(g.start(), ""));
        assert!(r.recognizes(g.start(), "<IntConst> * <IntConst>"));
        assert!(!r.recognizes(g.start(), "<StringConst>"));
    }

    #[test]
    fn nullable_and_multiword_tokens() {
        let g = grammar(
            "s: opt NN opt2 X ;\nopt: | 'a' ;\nopt2: opt opt ;",
            "NN\tNOT NULL\n",
            "X StringConst\n",
        );
        let r = Recognizer::new(&g);
        assert!(r.recognizes(g.start(), "NOT NULL 'it''s'"));
        assert!(r.recognizes(g.start(), "a NOT NULL a a ''"));
        assert!(!r.recognizes(g.start(), "NOT 'x'"));
        assert!(!r.recognizes(g.start(), "NOT NULL 'it's'"));
        assert!(!r.recognizes(g.start(), "NOT NULL a a a 'x'"));
    }

    #[test]
    fn epsilon_start() {
        let g = grammar("s: | 'x' s ;", "", "");
        let r = Recognizer::new(&g);
        assert!(r.recognizes(g.start(), ""));
        assert!(r.recognizes(g.start(), "x x x"));
        assert!(!r.recognizes(g.start(), "y"));
    }

    #[test]
    fn lexical_classes() {
        use PlaceholderCategory::*;
        assert!(lexical_match(ExistingTable, "t0"));
        assert!(!lexical_match(ExistingTable, "0t"));
        assert!(lexical_match(IntConst, "-2147483648"));
        assert!(!lexical_match(IntConst, "1.5"));
        assert!(lexical_match(FloatConst, "-0.25"));
        assert!(!lexical_match(FloatConst, "1."));
        assert!(lexical_match(StringConst, "''''"));
        assert!(!lexical_match(StringConst, "'"));
    }
}
