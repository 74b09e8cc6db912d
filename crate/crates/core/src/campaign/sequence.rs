//! Statement sequence policy and the queue of interesting trees.

use std::collections::VecDeque;
use std::fmt;
use std::time::Duration;

use rand::Rng;

use crate::grammar::{Grammar, NtId};
use crate::tree::DerivationTree;

use super::config::{SequenceCounts, StatementRoots};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SlotKind {
    CreateTable,
    Insert,
    CreateIndex,
    Random,
    Select,
}

impl fmt::Display for SlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SlotKind::CreateTable => "create_table",
            SlotKind::Insert => "insert",
            SlotKind::CreateIndex => "create_index",
            SlotKind::Random => "random",
            SlotKind::Select => "select",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SequenceError {
    #[error("statement kind {kind} maps to {name:?}, which is not a nonterminal of the grammar")]
    MissingStartSymbol { kind: SlotKind, name: String },
}

/// Resolved sequence layout: slot kinds in order, each with its root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequencePolicy {
    slots: Vec<(SlotKind, NtId)>,
    random_root: NtId,
}

impl SequencePolicy {
    pub fn resolve(
        grammar: &Grammar,
        counts: &SequenceCounts,
        roots: &StatementRoots,
    ) -> Result<Self, SequenceError> {
        let find = |kind: SlotKind, name: &str| {
            grammar
                .lookup(name)
                .ok_or_else(|| SequenceError::MissingStartSymbol {
                    kind,
                    name: name.to_string(),
                })
        };
        let random_root = match &roots.random {
            Some(n) => find(SlotKind::Random, n)?,
            None => grammar.start(),
        };
        let layout = [
            (
                SlotKind::CreateTable,
                counts.create_table,
                roots.create_table.as_str(),
            ),
            (SlotKind::Insert, counts.insert, roots.insert.as_str()),
            (
                SlotKind::CreateIndex,
                counts.create_index,
                roots.create_index.as_str(),
            ),
            (SlotKind::Random, counts.random, ""),
            (SlotKind::Select, counts.select, roots.select.as_str()),
        ];
        let mut slots = Vec::new();
        for (kind, n, name) in layout {
            if n == 0 {
                continue;
            }
            let root = if kind == SlotKind::Random {
                random_root
            } else {
                find(kind, name)?
            };
            slots.extend(std::iter::repeat_n((kind, root), n));
        }
        Ok(SequencePolicy { slots, random_root })
    }

    pub fn slots(&self) -> &[(SlotKind, NtId)] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn random_root(&self) -> NtId {
        self.random_root
    }
}

/// An interesting tree: produced new coverage when it ran.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueEntry {
    pub tree: DerivationTree,
    /// Statement nonterminal the tree is rooted at.
    pub root: NtId,
    pub discovered: Duration,
    /// Seed that produced the tree.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Queue {
    entries: VecDeque<QueueEntry>,
    cap: usize,
    evicted: u64,
}

impl Queue {
    pub fn new(cap: usize) -> Self {
        Queue {
            entries: VecDeque::new(),
            cap: cap.max(1),
            evicted: 0,
        }
    }

    pub fn push(&mut self, entry: QueueEntry) {
        if self.entries.len() == self.cap {
            self.entries.pop_front();
            self.evicted += 1;
        }
        self.entries.push_back(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn evicted(&self) -> u64 {
        self.evicted
    }

    pub fn get(&self, i: usize) -> &QueueEntry {
        &self.entries[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &QueueEntry> {
        self.entries.iter()
    }

    /// Number of entries a slot of this root may mutate. `None` accepts any.
    fn compatible_count(&self, root: Option<NtId>) -> usize {
        match root {
            None => self.entries.len(),
            Some(r) => self.entries.iter().filter(|e| e.root == r).count(),
        }
    }

    fn nth_compatible(&self, root: Option<NtId>, k: usize) -> usize {
        match root {
            None => k,
            Some(r) => self
                .entries
                .iter()
                .enumerate()
                .filter(|(_, e)| e.root == r)
                .nth(k)
                .map(|(i, _)| i)
                .expect("k below compatible count"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanSource {
    Generate,
    /// Mutate the queue entry at this position.
    Mutate(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Plan {
    pub kind: SlotKind,
    pub root: NtId,
    pub source: PlanSource,
    /// Whether a type-compatible entry existed (the slot was eligible).
    pub eligible: bool,
}

/// Lay out one sequence. A slot mutates a uniformly chosen type-compatible
/// queue entry with probability `mutation_prob` when one exists; random
/// slots accept entries of any type.
pub fn build_sequence<R: Rng + ?Sized>(
    policy: &SequencePolicy,
    queue: &Queue,
    mutation_prob: f64,
    rng: &mut R,
) -> Vec<Plan> {
    policy
        .slots
        .iter()
        .map(|&(kind, root)| {
            let filter = (kind != SlotKind::Random).then_some(root);
            let n = queue.compatible_count(filter);
            let eligible = n > 0;
            let source = if eligible && rng.gen_bool(mutation_prob) {
                PlanSource::Mutate(queue.nth_compatible(filter, rng.gen_range(0..n)))
            } else {
                PlanSource::Generate
            };
            Plan {
                kind,
                root,
                source,
                eligible,
            }
        })
        .collect()
}
