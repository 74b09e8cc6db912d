//! In-memory rule graph built from a yacc/bison-style grammar file.
//!
//! A [`Grammar`] is assembled from three text inputs: the rule file itself,
//! a token map (`TERMINAL<TAB>surface text`), and an optional placeholder
//! declaration file (`TERMINAL Category`). Symbols are classified purely by
//! where they are defined, never by letter case.

mod config;
mod parse;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use config::{parse_placeholders, parse_token_map};

/// Index of a nonterminal inside a [`Grammar`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NtId(pub u32);

/// Index of a terminal token (named or literal) inside a [`Grammar`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenId(pub u32);

/// Index of a placeholder terminal inside a [`Grammar`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlaceholderId(pub u32);

impl NtId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl PlaceholderId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One `|`-separated alternative, addressed as `nonterminal[index]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AltId {
    pub nt: NtId,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    NonTerminal(NtId),
    /// Named token from the token map, or a quoted literal.
    Token(TokenId),
    Placeholder(PlaceholderId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    NonTerminal,
    TerminalToken,
    Placeholder,
    Literal,
}

/// Argument or constant slot category, filled in by the instantiator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlaceholderCategory {
    NewTable,
    ExistingTable,
    NewColumn,
    ExistingColumn,
    NewIndex,
    ExistingIndex,
    IntConst,
    FloatConst,
    StringConst,
    Identifier,
}

impl PlaceholderCategory {
    pub const ALL: [PlaceholderCategory; 10] = [
        PlaceholderCategory::NewTable,
        PlaceholderCategory::ExistingTable,
        PlaceholderCategory::NewColumn,
        PlaceholderCategory::ExistingColumn,
        PlaceholderCategory::NewIndex,
        PlaceholderCategory::ExistingIndex,
        PlaceholderCategory::IntConst,
        PlaceholderCategory::FloatConst,
        PlaceholderCategory::StringConst,
        PlaceholderCategory::Identifier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlaceholderCategory::NewTable => "NewTable",
            PlaceholderCategory::ExistingTable => "ExistingTable",
            PlaceholderCategory::NewColumn => "NewColumn",
            PlaceholderCategory::ExistingColumn => "ExistingColumn",
            PlaceholderCategory::NewIndex => "NewIndex",
            PlaceholderCategory::ExistingIndex => "ExistingIndex",
            PlaceholderCategory::IntConst => "IntConst",
            PlaceholderCategory::FloatConst => "FloatConst",
            PlaceholderCategory::StringConst => "StringConst",
            PlaceholderCategory::Identifier => "Identifier",
        }
    }
}

impl fmt::Display for PlaceholderCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlaceholderCategory {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlaceholderCategory::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or(())
    }
}

/// User-supplied classification override.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ManualLabel {
    Simple,
    Complex,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alternative {
    pub symbols: Vec<Symbol>,
    pub manual_label: Option<ManualLabel>,
    pub excluded: bool,
}

impl Alternative {
    pub fn new(symbols: Vec<Symbol>) -> Self {
        Alternative {
            symbols,
            manual_label: None,
            excluded: false,
        }
    }

    /// Nonterminals referenced by this alternative, in order, with repeats.
    pub fn nonterminals(&self) -> impl Iterator<Item = NtId> + '_ {
        self.symbols.iter().filter_map(|s| match s {
            Symbol::NonTerminal(nt) => Some(*nt),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub name: String,
    pub alternatives: Vec<Alternative>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub name: String,
    pub surface: String,
    pub literal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaceholderDecl {
    pub name: String,
    pub category: PlaceholderCategory,
}

/// Inputs to [`load_grammar`] besides the rule and token-map texts.
#[derive(Debug, Clone, Default)]
pub struct IngestConfig {
    /// Contents of a placeholder declaration file.
    pub placeholders: Option<String>,
    /// Overrides `%start` and the first-rule default.
    pub start_symbol: Option<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unresolved symbol `{name}`")]
    UnresolvedSymbol { name: String, line: usize },
    #[error("grammar cannot derive a finite string from start symbol `{0}`")]
    NonTerminatingGrammar(String),
    #[error("line {line}: unknown rule reference `{reference}`")]
    UnknownRuleReference { reference: String, line: usize },
    #[error("every alternative of `{0}` is excluded but it is still referenced")]
    AllAlternativesExcluded(String),
}

/// The parsed rule graph. Immutable once loaded; share freely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    rules: Vec<Rule>,
    rule_index: HashMap<String, NtId>,
    tokens: Vec<Token>,
    placeholders: Vec<PlaceholderDecl>,
    start: NtId,
}

/// Parse grammar text plus token-map text into a validated [`Grammar`].
pub fn load_grammar(
    grammar_text: &str,
    token_map_text: &str,
    config: &IngestConfig,
) -> Result<Grammar, GrammarError> {
    let parsed = parse::parse_rules(grammar_text)?;
    let token_map = parse_token_map(token_map_text)?;
    let placeholders = match &config.placeholders {
        Some(text) => parse_placeholders(text)?,
        None => Vec::new(),
    };
    let start = config
        .start_symbol
        .clone()
        .or(parsed.start.clone())
        .or_else(|| parsed.rules.first().map(|r| r.name.clone()));
    let grammar = parse::resolve(parsed, &token_map, &placeholders, start)?;
    grammar.check_termination()?;
    Ok(grammar)
}

impl Grammar {
    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, nt: NtId) -> &Rule {
        &self.rules[nt.index()]
    }

    pub fn alternative(&self, alt: AltId) -> &Alternative {
        &self.rules[alt.nt.index()].alternatives[alt.index]
    }

    pub fn nonterminal_count(&self) -> usize {
        self.rules.len()
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = NtId> {
        (0..self.rules.len() as u32).map(NtId)
    }

    /// Every alternative of every rule, in source order.
    pub fn alt_ids(&self) -> impl Iterator<Item = AltId> + '_ {
        self.rules.iter().enumerate().flat_map(|(i, r)| {
            (0..r.alternatives.len()).map(move |index| AltId {
                nt: NtId(i as u32),
                index,
            })
        })
    }

    /// Indices of alternatives not excluded by the rule config.
    pub fn usable_alternatives(&self, nt: NtId) -> impl Iterator<Item = usize> + '_ {
        self.rules[nt.index()]
            .alternatives
            .iter()
            .enumerate()
            .filter(|(_, a)| !a.excluded)
            .map(|(i, _)| i)
    }

    pub fn lookup(&self, name: &str) -> Option<NtId> {
        self.rule_index.get(name).copied()
    }

    pub fn name(&self, nt: NtId) -> &str {
        &self.rules[nt.index()].name
    }

    pub fn start(&self) -> NtId {
        self.start
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> &Token {
        &self.tokens[id.index()]
    }

    pub fn placeholders(&self) -> &[PlaceholderDecl] {
        &self.placeholders
    }

    pub fn placeholder(&self, id: PlaceholderId) -> &PlaceholderDecl {
        &self.placeholders[id.index()]
    }

    pub fn symbol_kind(&self, symbol: Symbol) -> SymbolKind {
        match symbol {
            Symbol::NonTerminal(_) => SymbolKind::NonTerminal,
            Symbol::Token(t) if self.token(t).literal => SymbolKind::Literal,
            Symbol::Token(_) => SymbolKind::TerminalToken,
            Symbol::Placeholder(_) => SymbolKind::Placeholder,
        }
    }

    pub fn symbol_name(&self, symbol: Symbol) -> String {
        match symbol {
            Symbol::NonTerminal(nt) => self.name(nt).to_string(),
            Symbol::Token(t) => {
                let tok = self.token(t);
                if tok.literal {
                    quote_literal(&tok.surface)
                } else {
                    tok.name.clone()
                }
            }
            Symbol::Placeholder(p) => self.placeholder(p).name.clone(),
        }
    }

    /// Set of nonterminals that can derive a finite terminal string using
    /// only non-excluded alternatives.
    pub fn productive(&self) -> Vec<bool> {
        let mut productive = vec![false; self.rules.len()];
        let mut changed = true;
        while changed {
            changed = false;
            for (i, rule) in self.rules.iter().enumerate() {
                if productive[i] {
                    continue;
                }
                let ok = rule
                    .alternatives
                    .iter()
                    .filter(|a| !a.excluded)
                    .any(|a| a.nonterminals().all(|nt| productive[nt.index()]));
                if ok {
                    productive[i] = true;
                    changed = true;
                }
            }
        }
        productive
    }

    fn check_termination(&self) -> Result<(), GrammarError> {
        if self.productive()[self.start.index()] {
            Ok(())
        } else {
            Err(GrammarError::NonTerminatingGrammar(
                self.name(self.start).to_string(),
            ))
        }
    }

    /// Apply a rule config (manual labels and exclusions).
    pub fn apply_rule_config(&self, rule_config_text: &str) -> Result<Grammar, GrammarError> {
        config::apply_rule_config(self, rule_config_text)
    }

    pub(crate) fn alternative_mut(&mut self, alt: AltId) -> &mut Alternative {
        &mut self.rules[alt.nt.index()].alternatives[alt.index]
    }

    /// Canonical yacc text: `%start`, then one rule per block. Reloading it
    /// with [`Grammar::token_map_text`] and [`Grammar::placeholder_text`]
    /// reproduces the same rule graph.
    pub fn to_yacc_text(&self) -> String {
        let mut out = format!("%start {}\n%%\n", self.name(self.start));
        for rule in &self.rules {
            out.push_str(&rule.name);
            out.push_str(":\n");
            for (i, alt) in rule.alternatives.iter().enumerate() {
                out.push_str(if i == 0 { "    " } else { "  | " });
                if alt.symbols.is_empty() {
                    out.push_str("%empty");
                } else {
                    let names: Vec<String> =
                        alt.symbols.iter().map(|s| self.symbol_name(*s)).collect();
                    out.push_str(&names.join(" "));
                }
                out.push('\n');
            }
            out.push_str("  ;\n\n");
        }
        out
    }

    pub fn token_map_text(&self) -> String {
        self.tokens
            .iter()
            .filter(|t| !t.literal)
            .map(|t| format!("{}\t{}\n", t.name, t.surface))
            .collect()
    }

    pub fn placeholder_text(&self) -> String {
        self.placeholders
            .iter()
            .map(|p| format!("{} {}\n", p.name, p.category))
            .collect()
    }
}

fn quote_literal(surface: &str) -> String {
    let mut out = String::with_capacity(surface.len() + 2);
    let quote = if surface.chars().count() == 1 {
        '\''
    } else {
        '"'
    };
    out.push(quote);
    for c in surface.chars() {
        if c == quote || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push(quote);
    out
}
