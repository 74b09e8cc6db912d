//! Embedded instrumented target: a small SQL engine with branch probes and
//! three planted faults, plus the grammar that describes its dialect.

use std::io::{self, BufRead, Write};
use std::path::Path;

use super::{
    write_map_file, CoverageMap, Crash, CrashKind, ExecStatus, StatementResult, TargetAdapter,
    TargetError,
};
use crate::grammar::{load_grammar, Grammar, GrammarError, IngestConfig};

pub mod exec;
pub mod sql;

pub use exec::{BUG_DELETE_EXPR_UNIQUE, BUG_MIXED_INLINE_INDEX, BUG_RIGHT_JOIN_COLLATE_NULL};

pub const GRAMMAR: &str = include_str!("../../../grammars/toy.y");
pub const TOKENS: &str = include_str!("../../../grammars/toy.tok");
pub const PLACEHOLDERS: &str = include_str!("../../../grammars/toy.ph");
pub const RULES: &str = include_str!("../../../grammars/toy.rules");

/// The toy dialect grammar with its rule configuration applied.
pub fn toy_grammar() -> Grammar {
    try_toy_grammar().expect("bundled toy grammar loads")
}

fn try_toy_grammar() -> Result<Grammar, GrammarError> {
    let g = load_grammar(
        GRAMMAR,
        TOKENS,
        &IngestConfig {
            placeholders: Some(PLACEHOLDERS.to_string()),
            start_symbol: None,
        },
    )?;
    g.apply_rule_config(RULES)
}

#[derive(Debug)]
pub struct ToyTarget {
    db: exec::Database,
    map_size: usize,
}

impl Default for ToyTarget {
    fn default() -> Self {
        Self::new(super::DEFAULT_MAP_SIZE)
    }
}

impl ToyTarget {
    pub fn new(map_size: usize) -> Self {
        ToyTarget {
            db: exec::Database::new(),
            map_size,
        }
    }

    pub fn database(&self) -> &exec::Database {
        &self.db
    }
}

impl TargetAdapter for ToyTarget {
    fn map_size(&self) -> usize {
        self.map_size
    }

    fn run_statement(
        &mut self,
        statement: &str,
        map: &mut CoverageMap,
    ) -> Result<StatementResult, TargetError> {
        let mut probe = exec::Probe::new(map);
        let stmt = match sql::parse(statement) {
            Ok(s) => s,
            Err(_) => {
                probe.hit(exec::P_STMT + exec::KIND_UNPARSED * 3 + 2);
                return Ok(StatementResult::Done(ExecStatus::SyntaxError));
            }
        };
        Ok(match self.db.execute(&stmt, &mut probe) {
            Ok(()) => StatementResult::Done(ExecStatus::Ok),
            Err(exec::Fault::Semantic(_)) => StatementResult::Done(ExecStatus::SemanticError),
            Err(exec::Fault::Crash(code)) => StatementResult::Crashed(Crash {
                kind: CrashKind::Crash,
                code,
            }),
            Err(exec::Fault::Assert(code)) => StatementResult::Crashed(Crash {
                kind: CrashKind::Assertion,
                code,
            }),
        })
    }

    fn reset(&mut self) -> Result<(), TargetError> {
        self.db = exec::Database::new();
        Ok(())
    }
}

/// Line-protocol end marker between sequences.
pub const END_OF_SEQUENCE: &str = ";;END";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServeEnd {
    Eof,
    Crashed(Crash),
}

/// Speak the external-target protocol on `input`/`output`: one statement per
/// line, map file rewritten after each, then a status line. Returns at end of
/// input or at the first crash, before any status line is written for it.
pub fn serve<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    map_path: &Path,
    map_size: usize,
) -> io::Result<ServeEnd> {
    let mut target = ToyTarget::new(map_size);
    let mut map =
        CoverageMap::new(map_size).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    for line in input.lines() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line == END_OF_SEQUENCE {
            let _ = target.reset();
            continue;
        }
        map.clear();
        let r = target
            .run_statement(line, &mut map)
            .map_err(|e| io::Error::other(e.to_string()))?;
        write_map_file(map_path, &map)?;
        match r {
            StatementResult::Done(s) => {
                writeln!(output, "{}", s.wire())?;
                output.flush()?;
            }
            StatementResult::Crashed(c) => return Ok(ServeEnd::Crashed(c)),
        }
    }
    Ok(ServeEnd::Eof)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::{execute_sequence, VirginMap};

    #[test]
    fn bundled_grammar_loads() {
        let g = toy_grammar();
        assert_eq!(g.name(g.start()), "stmt");
        let stmt = g.rule(g.start());
        assert!(stmt.alternatives[5].excluded);
    }

    #[test]
    fn sequence_stops_at_crash_and_resets() {
        let mut t = ToyTarget::default();
        let mut v = VirginMap::new(t.map_size());
        let stmts: Vec<String> = [
            "CREATE TABLE t0 ( c0 INT , INDEX i0 ( c0 , ( ABS ( c0 ) ) DESC ) )",
            "SELECT 1",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let out = execute_sequence(&mut t, &stmts, &mut v).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(
            out[0].crash,
            Some(Crash {
                kind: CrashKind::Crash,
                code: BUG_MIXED_INLINE_INDEX
            })
        );

        let stmts: Vec<String> = [
            "CREATE TABLE t0 ( c0 INT )",
            "SELECT c0 FROM t0",
            "SELECT",
            "SELECT c0 FROM t0",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let out = execute_sequence(&mut t, &stmts, &mut v).unwrap();
        let st: Vec<_> = out.iter().map(|o| o.status).collect();
        assert_eq!(
            st,
            vec![
                Some(ExecStatus::Ok),
                Some(ExecStatus::Ok),
                Some(ExecStatus::SyntaxError),
                Some(ExecStatus::Ok)
            ]
        );
        assert!(out[0].new_coverage);
        assert!(!out[3].new_coverage);
        assert_eq!(t.database().table_count(), 0);
    }

    #[test]
    fn protocol_server() {
        let dir = tempfile::tempdir().unwrap();
        let map_path = dir.path().join("map");
        let input = "CREATE TABLE t0 ( c0 INT )\nSELECT c9 FROM t0\n;;END\nSELECT c0 FROM t0\nbogus\nDELETE FROM t0\n";
        let mut out = Vec::new();
        let end = serve(input.as_bytes(), &mut out, &map_path, 1 << 12).unwrap();
        assert_eq!(end, ServeEnd::Eof);
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "OK\nSEM_ERR\nSEM_ERR\nSYN_ERR\nSEM_ERR\n"
        );
        assert_eq!(std::fs::metadata(&map_path).unwrap().len(), 1 << 12);

        let input =
            "CREATE TABLE t0 ( c0 INT , INDEX i0 ( c0 , ( ABS ( c0 ) ) DESC ) )\nSELECT 1\n";
        let mut out = Vec::new();
        let end = serve(input.as_bytes(), &mut out, &map_path, 1 << 12).unwrap();
        assert!(matches!(end, ServeEnd::Crashed(c) if c.code == BUG_MIXED_INLINE_INDEX));
        assert!(out.is_empty());
    }
}
