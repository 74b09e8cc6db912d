//! Crash reproducer files.
//!
//! ```text
//! -- gtf 0.1.0
//! -- grammar-sha256: 3f1a...
//! -- seed: 7 worker: 0 sequence: 12 sequence-seed: 991
//! -- statement-seeds: 1,2,3
//! -- types: create_table_stmt,insert_stmt,select_stmt
//! -- crash-key: crash 1000 create_table_stmt
//! CREATE TABLE t0 ( c0 INT )
//! ...
//! ;;END
//! ```

use std::fmt;
use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::coverage::toy::END_OF_SEQUENCE;
use crate::coverage::{Crash, CrashKind};
use crate::grammar::Grammar;

pub const TOOL_VERSION: &str = concat!("gtf ", env!("CARGO_PKG_VERSION"));

/// Deduplication key of a fault.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CrashKey {
    pub kind: CrashKind,
    pub code: u32,
    pub statement_type: String,
}

impl CrashKey {
    pub fn new(crash: Crash, statement_type: &str) -> Self {
        CrashKey {
            kind: crash.kind,
            code: crash.code,
            statement_type: statement_type.to_string(),
        }
    }

    pub fn file_stem(&self) -> String {
        format!("{}-{}-{}", self.kind, self.code, self.statement_type)
    }
}

impl fmt::Display for CrashKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.kind, self.code, self.statement_type)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed PoC: {0}")]
pub struct PocParseError(pub String);

impl FromStr for CrashKey {
    type Err = PocParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut it = s.split_whitespace();
        let (Some(kind), Some(code), Some(ty), None) = (it.next(), it.next(), it.next(), it.next())
        else {
            return Err(PocParseError(format!("bad crash key {s:?}")));
        };
        let kind = match kind {
            "crash" => CrashKind::Crash,
            "assertion" => CrashKind::Assertion,
            _ => return Err(PocParseError(format!("bad crash kind {kind:?}"))),
        };
        let code = code
            .parse()
            .map_err(|_| PocParseError(format!("bad crash code {code:?}")))?;
        Ok(CrashKey {
            kind,
            code,
            statement_type: ty.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poc {
    pub tool: String,
    pub grammar_hash: String,
    pub campaign_seed: u64,
    pub worker: usize,
    pub sequence: u64,
    pub sequence_seed: u64,
    pub statement_seeds: Vec<u64>,
    /// Statement nonterminal of each statement.
    pub types: Vec<String>,
    pub key: CrashKey,
    pub statements: Vec<String>,
}

/// SHA-256 over the canonical grammar, token map and placeholder texts.
pub fn grammar_hash(grammar: &Grammar) -> String {
    let mut h = Sha256::new();
    h.update(grammar.to_yacc_text());
    h.update([0]);
    h.update(grammar.token_map_text());
    h.update([0]);
    h.update(grammar.placeholder_text());
    hex::encode(h.finalize())
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl Poc {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s += &format!("-- {}\n", self.tool);
        s += &format!("-- grammar-sha256: {}\n", self.grammar_hash);
        s += &format!(
            "-- seed: {} worker: {} sequence: {} sequence-seed: {}\n",
            self.campaign_seed, self.worker, self.sequence, self.sequence_seed
        );
        s += &format!("-- statement-seeds: {}\n", join(&self.statement_seeds));
        s += &format!("-- types: {}\n", join(&self.types));
        s += &format!("-- crash-key: {}\n", self.key);
        for st in &self.statements {
            s += st;
            s.push('\n');
        }
        s += END_OF_SEQUENCE;
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self, PocParseError> {
        let err = |m: &str| PocParseError(m.to_string());
        let mut poc = Poc {
            tool: String::new(),
            grammar_hash: String::new(),
            campaign_seed: 0,
            worker: 0,
            sequence: 0,
            sequence_seed: 0,
            statement_seeds: Vec::new(),
            types: Vec::new(),
            key: CrashKey {
                kind: CrashKind::Crash,
                code: 0,
                statement_type: String::new(),
            },
            statements: Vec::new(),
        };
        let mut have_key = false;
        let mut ended = false;
        let num = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| PocParseError(format!("bad number {s:?}")))
        };
        for line in text.lines() {
            if ended {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(err("content after end marker"));
            }
            if let Some(h) = line.strip_prefix("-- ") {
                if let Some(v) = h.strip_prefix("grammar-sha256: ") {
                    poc.grammar_hash = v.trim().to_string();
                } else if let Some(v) = h.strip_prefix("seed: ") {
                    let w: Vec<&str> = v.split_whitespace().collect();
                    if w.len() != 7
                        || w[1] != "worker:"
                        || w[3] != "sequence:"
                        || w[5] != "sequence-seed:"
                    {
                        return Err(err("bad seed line"));
                    }
                    poc.campaign_seed = num(w[0])?;
                    poc.worker = num(w[2])? as usize;
                    poc.sequence = num(w[4])?;
                    poc.sequence_seed = num(w[6])?;
                } else if let Some(v) = h.strip_prefix("statement-seeds:") {
                    poc.statement_seeds = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(num)
                        .collect::<Result<_, _>>()?;
                } else if let Some(v) = h.strip_prefix("types:") {
                    poc.types = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect();
                } else if let Some(v) = h.strip_prefix("crash-key: ") {
                    poc.key = v.parse()?;
                    have_key = true;
                } else if poc.tool.is_empty() {
                    poc.tool = h.trim().to_string();
                }
            } else if line == END_OF_SEQUENCE {
                ended = true;
            } else {
                poc.statements.push(line.to_string());
            }
        }
        if !have_key {
            return Err(err("missing crash-key header"));
        }
        if !ended {
            return Err(err("missing end marker"));
        }
        if poc.types.len() != poc.statements.len() {
            return Err(err("types header does not match statement count"));
        }
        Ok(poc)
    }

    /// Write under `dir` named by the crash key. Returns `None` when a PoC
    /// for the same key already exists.
    pub fn write_new(&self, dir: &Path) -> io::Result<Option<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.sql", self.key.file_stem()));
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                f.write_all(self.to_text().as_bytes())?;
                Ok(Some(path))
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Ok(None),
            Err(e) => Err(e),
        }
    }
}
