//! Lexer and parser for the supported yacc/bison subset.
//!
//! Accepted: an optional declarations section ending in `%%` (only `%start`
//! is honored, `%{ ... %}` blocks are skipped), rules of the form
//! `name : alt | alt ;` with an optional trailing `;`, quoted literals,
//! `%empty`, `%prec TOKEN`, brace actions with nesting, and C comments.
//! Anything after a second `%%` is ignored.

use std::collections::HashMap;

use super::{
    Alternative, Grammar, GrammarError, NtId, PlaceholderDecl, PlaceholderId, Rule, Symbol, Token,
    TokenId,
};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Literal(String),
    Colon,
    Pipe,
    Semi,
    Empty,
    Prec,
}

#[derive(Debug)]
pub(super) struct RawSymbol {
    name: String,
    literal: bool,
    line: usize,
}

#[derive(Debug)]
pub(super) struct RawRule {
    pub(super) name: String,
    line: usize,
    alternatives: Vec<Vec<RawSymbol>>,
}

#[derive(Debug, Default)]
pub(super) struct ParsedRules {
    pub(super) start: Option<String>,
    pub(super) rules: Vec<RawRule>,
}

fn parse_err(line: usize, message: impl Into<String>) -> GrammarError {
    GrammarError::Parse {
        line,
        message: message.into(),
    }
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
    line: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str, first_line: usize) -> Self {
        Lexer {
            chars: src.char_indices().peekable(),
            src,
            line: first_line,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
        }
        Some(c)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next().map(|(_, c)| c)
    }

    fn skip_ws_and_comments(&mut self) -> Result<(), GrammarError> {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('/') if self.peek2() == Some('*') => {
                    let start = self.line;
                    self.bump();
                    self.bump();
                    let mut prev = '\0';
                    loop {
                        match self.bump() {
                            Some('/') if prev == '*' => break,
                            Some(c) => prev = c,
                            None => return Err(parse_err(start, "unterminated comment")),
                        }
                    }
                }
                Some('/') if self.peek2() == Some('/') => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn quoted(&mut self, quote: char) -> Result<String, GrammarError> {
        let start = self.line;
        let mut out = String::new();
        loop {
            match self.bump() {
                Some('\\') => match self.bump() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some(c) => out.push(c),
                    None => return Err(parse_err(start, "unterminated literal")),
                },
                Some(c) if c == quote => return Ok(out),
                Some('\n') | None => return Err(parse_err(start, "unterminated literal")),
                Some(c) => out.push(c),
            }
        }
    }

    /// Skip a brace action; the opening brace has been consumed.
    fn skip_action(&mut self) -> Result<(), GrammarError> {
        let start = self.line;
        let mut depth = 1usize;
        while depth > 0 {
            match self.peek() {
                None => return Err(parse_err(start, "unterminated action block")),
                Some('/') if matches!(self.peek2(), Some('*') | Some('/')) => {
                    self.skip_ws_and_comments()?;
                }
                Some(q @ ('\'' | '"')) => {
                    self.bump();
                    // Character and string constants inside C code may hold braces.
                    loop {
                        match self.bump() {
                            Some('\\') => {
                                self.bump();
                            }
                            Some(c) if c == q => break,
                            Some(_) => {}
                            None => return Err(parse_err(start, "unterminated action block")),
                        }
                    }
                }
                Some('{') => {
                    self.bump();
                    depth += 1;
                }
                Some('}') => {
                    self.bump();
                    depth -= 1;
                }
                Some(_) => {
                    self.bump();
                }
            }
        }
        Ok(())
    }

    fn next_token(&mut self) -> Result<Option<(Tok, usize)>, GrammarError> {
        loop {
            self.skip_ws_and_comments()?;
            let line = self.line;
            let Some(&(pos, c)) = self.chars.peek() else {
                return Ok(None);
            };
            let tok = match c {
                ':' => {
                    self.bump();
                    Tok::Colon
                }
                '|' => {
                    self.bump();
                    Tok::Pipe
                }
                ';' => {
                    self.bump();
                    Tok::Semi
                }
                '{' => {
                    self.bump();
                    self.skip_action()?;
                    continue;
                }
                '\'' | '"' => {
                    self.bump();
                    let text = self.quoted(c)?;
                    if text.is_empty() || text.chars().any(char::is_whitespace) {
                        return Err(parse_err(
                            line,
                            "literal must be non-empty and contain no whitespace",
                        ));
                    }
                    Tok::Literal(text)
                }
                '%' => {
                    self.bump();
                    let word = self.word(pos + 1);
                    match word.as_str() {
                        "empty" => Tok::Empty,
                        "prec" => Tok::Prec,
                        other => {
                            return Err(parse_err(
                                line,
                                format!("unsupported directive `%{other}` in rules"),
                            ))
                        }
                    }
                }
                c if c.is_alphabetic() || c == '_' || c == '.' => Tok::Ident(self.word(pos)),
                c => return Err(parse_err(line, format!("unexpected character `{c}`"))),
            };
            return Ok(Some((tok, line)));
        }
    }

    fn word(&mut self, start: usize) -> String {
        let mut end = start;
        while let Some(&(p, c)) = self.chars.peek() {
            if c.is_alphanumeric() || c == '_' || c == '.' {
                end = p + c.len_utf8();
                self.bump();
            } else {
                break;
            }
        }
        self.src[start..end].to_string()
    }
}

/// Split the file into declaration and rule sections and parse the rules.
pub(super) fn parse_rules(text: &str) -> Result<ParsedRules, GrammarError> {
    let mut start = None;
    let (rules_src, first_line) = match split_sections(text) {
        Some((decls, rules, first_line)) => {
            start = parse_declarations(decls)?;
            (rules, first_line)
        }
        None => (text, 1),
    };

    let mut lexer = Lexer::new(rules_src, first_line);
    let mut toks = Vec::new();
    while let Some(t) = lexer.next_token()? {
        toks.push(t);
    }

    let mut rules: Vec<RawRule> = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let (name, line) = match &toks[i] {
            (Tok::Ident(n), line) => (n.clone(), *line),
            (t, line) => return Err(parse_err(*line, format!("expected rule name, found {t:?}"))),
        };
        match toks.get(i + 1) {
            Some((Tok::Colon, _)) => {}
            _ => return Err(parse_err(line, format!("expected `:` after `{name}`"))),
        }
        i += 2;
        let mut alternatives = Vec::new();
        let mut current: Vec<RawSymbol> = Vec::new();
        loop {
            match toks.get(i) {
                None => {
                    alternatives.push(std::mem::take(&mut current));
                    break;
                }
                Some((Tok::Semi, _)) => {
                    alternatives.push(std::mem::take(&mut current));
                    i += 1;
                    break;
                }
                Some((Tok::Pipe, _)) => {
                    alternatives.push(std::mem::take(&mut current));
                    i += 1;
                }
                Some((Tok::Ident(_), _)) if matches!(toks.get(i + 1), Some((Tok::Colon, _))) => {
                    // next rule begins; the trailing `;` was omitted
                    alternatives.push(std::mem::take(&mut current));
                    break;
                }
                Some((Tok::Ident(n), l)) => {
                    current.push(RawSymbol {
                        name: n.clone(),
                        literal: false,
                        line: *l,
                    });
                    i += 1;
                }
                Some((Tok::Literal(s), l)) => {
                    current.push(RawSymbol {
                        name: s.clone(),
                        literal: true,
                        line: *l,
                    });
                    i += 1;
                }
                Some((Tok::Empty, _)) => i += 1,
                Some((Tok::Prec, l)) => match toks.get(i + 1) {
                    Some((Tok::Ident(_), _)) | Some((Tok::Literal(_), _)) => i += 2,
                    _ => return Err(parse_err(*l, "`%prec` must be followed by a token")),
                },
                Some((Tok::Colon, l)) => return Err(parse_err(*l, "unexpected `:`")),
            }
        }
        if let Some(existing) = rules.iter_mut().find(|r| r.name == name) {
            // bison allows a rule to be split over several definitions
            existing.alternatives.extend(alternatives);
        } else {
            rules.push(RawRule {
                name,
                line,
                alternatives,
            });
        }
    }
    if rules.is_empty() {
        return Err(parse_err(first_line, "grammar defines no rules"));
    }
    Ok(ParsedRules { start, rules })
}

/// Returns (declarations, rules, first line of rules) when a `%%` line exists.
fn split_sections(text: &str) -> Option<(&str, &str, usize)> {
    let mut offset = 0;
    let mut separators = Vec::new();
    for (lineno, line) in text.split_inclusive('\n').enumerate() {
        if line.trim_end() == "%%" {
            separators.push((offset, offset + line.len(), lineno + 1));
        }
        offset += line.len();
    }
    let &(decl_end, rules_start, sep_line) = separators.first()?;
    let rules_end = separators.get(1).map(|s| s.0).unwrap_or(text.len());
    Some((
        &text[..decl_end],
        &text[rules_start..rules_end],
        sep_line + 1,
    ))
}

fn parse_declarations(decls: &str) -> Result<Option<String>, GrammarError> {
    let mut start = None;
    let mut in_prologue = false;
    for (i, line) in decls.lines().enumerate() {
        let trimmed = line.trim();
        if in_prologue {
            if trimmed.starts_with("%}") {
                in_prologue = false;
            }
            continue;
        }
        if trimmed.starts_with("%{") {
            in_prologue = !trimmed.contains("%}");
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("%start") {
            let name = rest.split_whitespace().next();
            match name {
                Some(n) => start = Some(n.to_string()),
                None => return Err(parse_err(i + 1, "`%start` needs a symbol")),
            }
        }
    }
    if in_prologue {
        return Err(parse_err(decls.lines().count(), "unterminated `%{` block"));
    }
    Ok(start)
}

/// Classify every raw symbol and intern tokens.
pub(super) fn resolve(
    parsed: ParsedRules,
    token_map: &[(String, String)],
    placeholders: &[PlaceholderDecl],
    start: Option<String>,
) -> Result<Grammar, GrammarError> {
    let rule_index: HashMap<String, NtId> = parsed
        .rules
        .iter()
        .enumerate()
        .map(|(i, r)| (r.name.clone(), NtId(i as u32)))
        .collect();
    let token_lookup: HashMap<&str, &str> = token_map
        .iter()
        .map(|(n, s)| (n.as_str(), s.as_str()))
        .collect();
    let placeholder_lookup: HashMap<&str, usize> = placeholders
        .iter()
        .enumerate()
        .map(|(i, p)| (p.name.as_str(), i))
        .collect();

    let mut tokens: Vec<Token> = Vec::new();
    let mut named_tokens: HashMap<String, TokenId> = HashMap::new();
    let mut literal_tokens: HashMap<String, TokenId> = HashMap::new();
    let mut used_placeholders: Vec<PlaceholderDecl> = Vec::new();
    let mut placeholder_ids: HashMap<usize, PlaceholderId> = HashMap::new();

    let mut rules = Vec::with_capacity(parsed.rules.len());
    for raw in &parsed.rules {
        let mut alternatives = Vec::with_capacity(raw.alternatives.len());
        for raw_alt in &raw.alternatives {
            let mut symbols = Vec::with_capacity(raw_alt.len());
            for sym in raw_alt {
                let resolved = if sym.literal {
                    let id = *literal_tokens.entry(sym.name.clone()).or_insert_with(|| {
                        tokens.push(Token {
                            name: sym.name.clone(),
                            surface: sym.name.clone(),
                            literal: true,
                        });
                        TokenId(tokens.len() as u32 - 1)
                    });
                    Symbol::Token(id)
                } else if let Some(nt) = rule_index.get(&sym.name) {
                    Symbol::NonTerminal(*nt)
                } else if let Some(&decl) = placeholder_lookup.get(sym.name.as_str()) {
                    let id = *placeholder_ids.entry(decl).or_insert_with(|| {
                        used_placeholders.push(placeholders[decl].clone());
                        PlaceholderId(used_placeholders.len() as u32 - 1)
                    });
                    Symbol::Placeholder(id)
                } else if let Some(surface) = token_lookup.get(sym.name.as_str()) {
                    let id = *named_tokens.entry(sym.name.clone()).or_insert_with(|| {
                        tokens.push(Token {
                            name: sym.name.clone(),
                            surface: surface.to_string(),
                            literal: false,
                        });
                        TokenId(tokens.len() as u32 - 1)
                    });
                    Symbol::Token(id)
                } else {
                    return Err(GrammarError::UnresolvedSymbol {
                        name: sym.name.clone(),
                        line: sym.line,
                    });
                };
                symbols.push(resolved);
            }
            alternatives.push(Alternative::new(symbols));
        }
        rules.push(Rule {
            name: raw.name.clone(),
            alternatives,
        });
    }

    let start_name = start.unwrap_or_else(|| parsed.rules[0].name.clone());
    let start = *rule_index
        .get(&start_name)
        .ok_or_else(|| GrammarError::UnresolvedSymbol {
            name: start_name.clone(),
            line: parsed.rules[0].line,
        })?;

    Ok(Grammar {
        rules,
        rule_index,
        tokens,
        placeholders: used_placeholders,
        start,
    })
}
