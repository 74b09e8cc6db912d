//! Side files: token map, placeholder declarations, rule config.

use std::collections::HashSet;

use super::{AltId, Grammar, GrammarError, ManualLabel, PlaceholderCategory, PlaceholderDecl};

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
}

/// Parse `TERMINAL<TAB>surface text` lines. Blank lines and `#` comments are
/// skipped; a terminal may be listed only once.
pub fn parse_token_map(text: &str) -> Result<Vec<(String, String)>, GrammarError> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut seen = HashSet::new();
    for (line, raw) in content_lines(text) {
        let Some((name, surface)) = raw.split_once('\t') else {
            return Err(GrammarError::Parse {
                line,
                message: "token map entries are `TERMINAL<TAB>surface`".into(),
            });
        };
        let name = name.trim();
        let surface = surface.trim();
        if name.is_empty() || surface.is_empty() {
            return Err(GrammarError::Parse {
                line,
                message: "empty terminal name or surface text".into(),
            });
        }
        if !seen.insert(name.to_string()) {
            return Err(GrammarError::Parse {
                line,
                message: format!("terminal `{name}` mapped more than once"),
            });
        }
        out.push((
            name.to_string(),
            surface.split_whitespace().collect::<Vec<_>>().join(" "),
        ));
    }
    Ok(out)
}

/// Parse `TERMINAL Category` lines.
pub fn parse_placeholders(text: &str) -> Result<Vec<PlaceholderDecl>, GrammarError> {
    let mut out: Vec<PlaceholderDecl> = Vec::new();
    for (line, raw) in content_lines(text) {
        let mut parts = raw.split_whitespace();
        let (Some(name), Some(cat), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(GrammarError::Parse {
                line,
                message: "placeholder entries are `TERMINAL Category`".into(),
            });
        };
        let category: PlaceholderCategory = cat.parse().map_err(|_| GrammarError::Parse {
            line,
            message: format!("unknown placeholder category `{cat}`"),
        })?;
        if out.iter().any(|p| p.name == name) {
            return Err(GrammarError::Parse {
                line,
                message: format!("placeholder `{name}` declared more than once"),
            });
        }
        out.push(PlaceholderDecl {
            name: name.to_string(),
            category,
        });
    }
    Ok(out)
}

enum Target {
    Alt(AltId),
    Whole(super::NtId),
}

fn parse_reference(g: &Grammar, reference: &str, line: usize) -> Result<Target, GrammarError> {
    let unknown = || GrammarError::UnknownRuleReference {
        reference: reference.to_string(),
        line,
    };
    match reference.split_once('[') {
        Some((name, rest)) => {
            let index: usize = rest
                .strip_suffix(']')
                .and_then(|n| n.parse().ok())
                .ok_or_else(unknown)?;
            let nt = g.lookup(name).ok_or_else(unknown)?;
            if index >= g.rule(nt).alternatives.len() {
                return Err(unknown());
            }
            Ok(Target::Alt(AltId { nt, index }))
        }
        None => g.lookup(reference).map(Target::Whole).ok_or_else(unknown),
    }
}

pub(super) fn apply_rule_config(g: &Grammar, text: &str) -> Result<Grammar, GrammarError> {
    let mut out = g.clone();
    for (line, raw) in content_lines(text) {
        let words: Vec<&str> = raw.split_whitespace().collect();
        match words.as_slice() {
            ["label", reference, label] => {
                let label = match label.to_ascii_lowercase().as_str() {
                    "simple" => ManualLabel::Simple,
                    "complex" => ManualLabel::Complex,
                    _ => {
                        return Err(GrammarError::Parse {
                            line,
                            message: format!("label must be simple or complex, got `{label}`"),
                        })
                    }
                };
                match parse_reference(g, reference, line)? {
                    Target::Alt(alt) => out.alternative_mut(alt).manual_label = Some(label),
                    Target::Whole(nt) => {
                        for a in &mut out.rules[nt.index()].alternatives {
                            a.manual_label = Some(label);
                        }
                    }
                }
            }
            ["exclude", reference] => match parse_reference(g, reference, line)? {
                Target::Alt(alt) => out.alternative_mut(alt).excluded = true,
                Target::Whole(nt) => {
                    for a in &mut out.rules[nt.index()].alternatives {
                        a.excluded = true;
                    }
                }
            },
            _ => {
                return Err(GrammarError::Parse {
                    line,
                    message: "expected `label <ref> simple|complex` or `exclude <ref>`".into(),
                })
            }
        }
    }

    let empty: Vec<bool> = out
        .rules
        .iter()
        .map(|r| r.alternatives.iter().all(|a| a.excluded))
        .collect();
    if empty[out.start.index()] {
        return Err(GrammarError::AllAlternativesExcluded(
            out.name(out.start).to_string(),
        ));
    }
    for rule in &out.rules {
        for alt in rule.alternatives.iter().filter(|a| !a.excluded) {
            if let Some(nt) = alt.nonterminals().find(|nt| empty[nt.index()]) {
                return Err(GrammarError::AllAlternativesExcluded(
                    out.name(nt).to_string(),
                ));
            }
        }
    }
    out.check_termination()?;
    Ok(out)
}
