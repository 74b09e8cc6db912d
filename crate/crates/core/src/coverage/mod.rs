//! Target-side coverage: hit-count maps, bucketed novelty detection, and the
//! adapter through which statement sequences are executed.

use std::fmt;
use std::io;
use std::path::Path;

pub mod process;
pub mod toy;

pub const DEFAULT_MAP_SIZE: usize = 1 << 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("coverage map size {0} is not a nonzero power of two")]
pub struct BadMapSize(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("coverage map size mismatch: expected {expected}, got {got}")]
pub struct SizeMismatch {
    pub expected: usize,
    pub got: usize,
}

/// Per-statement hit counters, one byte per slot, saturating at 255.
///
/// Slots written through [`CoverageMap::hit`] are tracked so that clearing
/// and novelty checks only touch what was written.
#[derive(Clone, PartialEq, Eq)]
pub struct CoverageMap {
    bytes: Vec<u8>,
    touched: Vec<u32>,
    /// False once the bytes were replaced wholesale; forces full scans.
    tracked: bool,
}

impl fmt::Debug for CoverageMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoverageMap")
            .field("len", &self.bytes.len())
            .field("nonzero", &self.nonzero().count())
            .finish()
    }
}

impl CoverageMap {
    pub fn new(size: usize) -> Result<Self, BadMapSize> {
        if size == 0 || !size.is_power_of_two() {
            return Err(BadMapSize(size));
        }
        Ok(CoverageMap {
            bytes: vec![0; size],
            touched: Vec::new(),
            tracked: true,
        })
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, BadMapSize> {
        if bytes.is_empty() || !bytes.len().is_power_of_two() {
            return Err(BadMapSize(bytes.len()));
        }
        Ok(CoverageMap {
            bytes,
            touched: Vec::new(),
            tracked: false,
        })
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nonzero().next().is_none()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn get(&self, slot: usize) -> u8 {
        self.bytes[slot]
    }

    pub fn hit(&mut self, slot: usize) {
        let b = &mut self.bytes[slot];
        if *b == 0 && self.tracked {
            self.touched.push(slot as u32);
        }
        *b = b.saturating_add(1);
    }

    /// Overwrite the whole map, e.g. with bytes read back from a target.
    pub fn load(&mut self, bytes: &[u8]) -> Result<(), SizeMismatch> {
        if bytes.len() != self.bytes.len() {
            return Err(SizeMismatch {
                expected: self.bytes.len(),
                got: bytes.len(),
            });
        }
        self.bytes.copy_from_slice(bytes);
        self.touched.clear();
        self.tracked = false;
        Ok(())
    }

    pub fn clear(&mut self) {
        if self.tracked {
            for &s in &self.touched {
                self.bytes[s as usize] = 0;
            }
        } else {
            self.bytes.fill(0);
            self.tracked = true;
        }
        self.touched.clear();
    }

    /// Nonzero slots in ascending order.
    pub fn nonzero(&self) -> Box<dyn Iterator<Item = (usize, u8)> + '_> {
        if self.tracked {
            let mut slots = self.touched.clone();
            slots.sort_unstable();
            Box::new(
                slots
                    .into_iter()
                    .map(|s| (s as usize, self.bytes[s as usize])),
            )
        } else {
            Box::new(
                self.bytes
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| **b != 0)
                    .map(|(i, b)| (i, *b)),
            )
        }
    }

    /// Sparse copy of the nonzero counters.
    pub fn snapshot(&self) -> CoverageSnapshot {
        CoverageSnapshot {
            size: self.len(),
            hits: self.nonzero().map(|(s, c)| (s as u32, c)).collect(),
        }
    }
}

/// Sparse hit counts of one statement.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoverageSnapshot {
    pub size: usize,
    pub hits: Vec<(u32, u8)>,
}

impl CoverageSnapshot {
    pub fn to_map(&self) -> CoverageMap {
        let mut bytes = vec![0; self.size];
        for &(s, c) in &self.hits {
            bytes[s as usize] = c;
        }
        CoverageMap::from_bytes(bytes).expect("snapshot of a valid map")
    }
}

const fn bucket_table() -> [u8; 256] {
    let mut t = [0u8; 256];
    let mut i = 1;
    while i < 256 {
        t[i] = match i {
            1 => 1,
            2 => 2,
            3 => 4,
            4..=7 => 8,
            8..=15 => 16,
            16..=31 => 32,
            32..=127 => 64,
            _ => 128,
        };
        i += 1;
    }
    t
}

static BUCKETS: [u8; 256] = bucket_table();

/// Hit-count class bit for a raw counter (0 for no hits).
pub fn bucket(count: u8) -> u8 {
    BUCKETS[count as usize]
}

/// Replace every counter with its class bit.
pub fn classify_hits(map: &CoverageMap) -> Vec<u8> {
    map.as_bytes().iter().map(|&c| bucket(c)).collect()
}

/// Union of every class bit seen so far, per slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirginMap {
    seen: Vec<u8>,
    tuples: u64,
}

impl VirginMap {
    pub fn new(size: usize) -> Self {
        VirginMap {
            seen: vec![0; size],
            tuples: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples == 0
    }

    /// Number of distinct (slot, class) pairs observed.
    pub fn tuple_count(&self) -> u64 {
        self.tuples
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.seen
    }

    /// True iff the map shows a class bit not seen before in some slot;
    /// the new bits are merged in.
    pub fn has_new_bits(&mut self, map: &CoverageMap) -> Result<bool, SizeMismatch> {
        if map.len() != self.seen.len() {
            return Err(SizeMismatch {
                expected: self.seen.len(),
                got: map.len(),
            });
        }
        let mut new = false;
        if map.tracked {
            for &s in &map.touched {
                new |= self.merge_slot(s as usize, bucket(map.bytes[s as usize]));
            }
        } else {
            for (i, &c) in map.bytes.iter().enumerate() {
                if c != 0 {
                    new |= self.merge_slot(i, bucket(c));
                }
            }
        }
        Ok(new)
    }

    fn merge_slot(&mut self, slot: usize, bits: u8) -> bool {
        let fresh = bits & !self.seen[slot];
        if fresh == 0 {
            return false;
        }
        self.seen[slot] |= fresh;
        self.tuples += fresh.count_ones() as u64;
        true
    }

    /// Fold another virgin map in (bitwise union).
    pub fn merge(&mut self, other: &VirginMap) -> Result<bool, SizeMismatch> {
        if other.len() != self.len() {
            return Err(SizeMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        let mut new = false;
        for (i, &b) in other.seen.iter().enumerate() {
            if b != 0 {
                new |= self.merge_slot(i, b);
            }
        }
        Ok(new)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CrashKind {
    Crash,
    Assertion,
}

impl fmt::Display for CrashKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CrashKind::Crash => "crash",
            CrashKind::Assertion => "assertion",
        })
    }
}

/// A fault reported by the target. `code` is the faulting probe id for the
/// embedded target and the terminating signal for external ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Crash {
    pub kind: CrashKind,
    pub code: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExecStatus {
    Ok,
    SemanticError,
    SyntaxError,
}

impl ExecStatus {
    pub fn wire(self) -> &'static str {
        match self {
            ExecStatus::Ok => "OK",
            ExecStatus::SemanticError => "SEM_ERR",
            ExecStatus::SyntaxError => "SYN_ERR",
        }
    }

    pub fn from_wire(s: &str) -> Option<Self> {
        match s {
            "OK" => Some(ExecStatus::Ok),
            "SEM_ERR" => Some(ExecStatus::SemanticError),
            "SYN_ERR" => Some(ExecStatus::SyntaxError),
            _ => None,
        }
    }
}

/// What a target reports for one statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatementResult {
    Done(ExecStatus),
    Crashed(Crash),
}

#[derive(Debug, thiserror::Error)]
pub enum TargetError {
    #[error("target did not answer within {0:?}")]
    TargetUnresponsive(std::time::Duration),
    #[error("target protocol error: {0}")]
    ProtocolError(String),
    #[error("target I/O: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Size(#[from] SizeMismatch),
}

/// A system under test that runs one statement at a time and fills a
/// coverage map per statement.
pub trait TargetAdapter {
    fn map_size(&self) -> usize;

    /// Execute one statement. `map` is cleared by the caller beforehand.
    fn run_statement(
        &mut self,
        statement: &str,
        map: &mut CoverageMap,
    ) -> Result<StatementResult, TargetError>;

    /// Discard all state created by the current sequence.
    fn reset(&mut self) -> Result<(), TargetError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecOutcome {
    /// `None` when the statement crashed the target.
    pub status: Option<ExecStatus>,
    pub new_coverage: bool,
    pub crash: Option<Crash>,
    pub coverage: CoverageSnapshot,
}

/// Run `statements` in order against a fresh target state, stopping at the
/// first crash, and reset the target afterwards. Novelty is judged against
/// and merged into `virgin`.
pub fn execute_sequence<T: TargetAdapter + ?Sized>(
    target: &mut T,
    statements: &[String],
    virgin: &mut VirginMap,
) -> Result<Vec<ExecOutcome>, TargetError> {
    let mut map = CoverageMap::new(target.map_size())
        .map_err(|e| TargetError::ProtocolError(e.to_string()))?;
    let mut out = Vec::with_capacity(statements.len());
    for stmt in statements {
        map.clear();
        let r = match target.run_statement(stmt, &mut map) {
            Ok(r) => r,
            Err(e) => {
                let _ = target.reset();
                return Err(e);
            }
        };
        let new_coverage = virgin.has_new_bits(&map)?;
        let (status, crash) = match r {
            StatementResult::Done(s) => (Some(s), None),
            StatementResult::Crashed(c) => (None, Some(c)),
        };
        out.push(ExecOutcome {
            status,
            new_coverage,
            crash,
            coverage: map.snapshot(),
        });
        if crash.is_some() {
            break;
        }
    }
    target.reset()?;
    Ok(out)
}

/// Write a map as raw bytes (the external protocol's file format).
pub fn write_map_file(path: &Path, map: &CoverageMap) -> io::Result<()> {
    std::fs::write(path, map.as_bytes())
}

pub fn read_map_file(path: &Path, expected_size: usize) -> Result<CoverageMap, TargetError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() != expected_size {
        return Err(SizeMismatch {
            expected: expected_size,
            got: bytes.len(),
        }
        .into());
    }
    CoverageMap::from_bytes(bytes).map_err(|e| TargetError::ProtocolError(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_boundaries() {
        let cases = [
            (0, 0),
            (1, 1),
            (2, 2),
            (3, 4),
            (4, 8),
            (7, 8),
            (8, 16),
            (15, 16),
            (16, 32),
            (31, 32),
            (32, 64),
            (127, 64),
            (128, 128),
            (255, 128),
        ];
        for (c, b) in cases {
            assert_eq!(bucket(c), b, "count {c}");
        }
    }

    #[test]
    fn counters_saturate() {
        let mut m = CoverageMap::new(8).unwrap();
        for _ in 0..300 {
            m.hit(3);
        }
        assert_eq!(m.get(3), 255);
        m.clear();
        assert!(m.is_empty());
        assert!(CoverageMap::new(12).is_err());
    }

    #[test]
    fn novelty_by_class() {
        let mut v = VirginMap::new(16);
        let mut m = CoverageMap::new(16).unwrap();
        m.hit(1);
        assert!(v.has_new_bits(&m).unwrap());
        assert!(!v.has_new_bits(&m).unwrap());
        m.hit(1);
        assert!(v.has_new_bits(&m).unwrap());
        assert_eq!(v.tuple_count(), 2);
        let mut loaded = CoverageMap::new(16).unwrap();
        loaded.load(m.as_bytes()).unwrap();
        assert!(!v.has_new_bits(&loaded).unwrap());
        let small = CoverageMap::new(8).unwrap();
        assert!(v.has_new_bits(&small).is_err());
    }

    #[test]
    fn merge_is_union() {
        let mut a = VirginMap::new(8);
        let mut b = VirginMap::new(8);
        let mut m = CoverageMap::new(8).unwrap();
        m.hit(0);
        a.has_new_bits(&m).unwrap();
        m.clear();
        m.hit(5);
        b.has_new_bits(&m).unwrap();
        assert!(a.merge(&b).unwrap());
        assert!(!a.merge(&b).unwrap());
        assert_eq!(a.tuple_count(), 2);
    }

    #[test]
    fn map_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map");
        let mut m = CoverageMap::new(DEFAULT_MAP_SIZE).unwrap();
        m.hit(0);
        m.hit(DEFAULT_MAP_SIZE - 1);
        m.hit(DEFAULT_MAP_SIZE - 1);
        write_map_file(&path, &m).unwrap();
        assert_eq!(
            std::fs::metadata(&path).unwrap().len(),
            DEFAULT_MAP_SIZE as u64
        );
        let back = read_map_file(&path, DEFAULT_MAP_SIZE).unwrap();
        assert_eq!(back.as_bytes(), m.as_bytes());
        assert!(read_map_file(&path, 1 << 10).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let mut m = CoverageMap::new(64).unwrap();
        m.hit(9);
        m.hit(2);
        let s = m.snapshot();
        assert_eq!(s.hits, vec![(2, 1), (9, 1)]);
        assert_eq!(s.to_map().as_bytes(), m.as_bytes());
    }
}
