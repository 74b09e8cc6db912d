//! Static rule analysis: Simple/Normal/Complex classification by guaranteed
//! termination depth, and grammar-edge enumeration.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::grammar::{AltId, Grammar, ManualLabel, NtId};
use crate::tree::{Child, DerivationNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleLabel {
    Simple,
    Normal,
    Complex,
}

impl fmt::Display for RuleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleLabel::Simple => "Simple",
            RuleLabel::Normal => "Normal",
            RuleLabel::Complex => "Complex",
        })
    }
}

/// Guaranteed-termination depth: the deepest derivation an alternative or
/// nonterminal can force, counted in expansion steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GDepth {
    Finite(u32),
    Infinite,
}

impl GDepth {
    pub fn is_finite(self) -> bool {
        matches!(self, GDepth::Finite(_))
    }
}

impl fmt::Display for GDepth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GDepth::Finite(d) => write!(f, "{d}"),
            GDepth::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AltClass {
    pub label: RuleLabel,
    pub gdepth: GDepth,
    pub recursive: bool,
}

#[derive(Debug, Clone)]
pub struct RuleClassification {
    alts: Vec<Vec<AltClass>>,
    nt_depth: Vec<GDepth>,
    reach: Vec<Vec<bool>>,
}

impl RuleClassification {
    pub fn get(&self, alt: AltId) -> AltClass {
        self.alts[alt.nt.index()][alt.index]
    }

    pub fn alternatives(&self, nt: NtId) -> &[AltClass] {
        &self.alts[nt.index()]
    }

    pub fn nonterminal_depth(&self, nt: NtId) -> GDepth {
        self.nt_depth[nt.index()]
    }

    /// Whether `to` is reachable from `from` (zero or more steps).
    pub fn reaches(&self, from: NtId, to: NtId) -> bool {
        self.reach[from.index()][to.index()]
    }

    /// Groups of mutually reachable nonterminals that form at least one cycle.
    pub fn cycles(&self, grammar: &Grammar) -> Vec<Vec<NtId>> {
        let n = self.reach.len();
        let mut assigned = vec![false; n];
        let mut out = Vec::new();
        for a in 0..n {
            if assigned[a] {
                continue;
            }
            let group: Vec<NtId> = (a..n)
                .filter(|&b| self.reach[a][b] && self.reach[b][a])
                .map(|b| NtId(b as u32))
                .collect();
            for nt in &group {
                assigned[nt.index()] = true;
            }
            let self_loop = grammar.usable_alternatives(NtId(a as u32)).any(|i| {
                grammar.rules()[a].alternatives[i]
                    .nonterminals()
                    .any(|c| c.index() == a)
            });
            if group.len() > 1 || self_loop {
                out.push(group);
            }
        }
        out
    }

    /// `nonterminal,index,label,gdepth,recursive` with a header row.
    pub fn to_csv(&self, grammar: &Grammar) -> String {
        let mut out = String::from("nonterminal,index,label,gdepth,recursive\n");
        for alt in grammar.alt_ids() {
            let c = self.get(alt);
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                grammar.name(alt.nt),
                alt.index,
                c.label,
                c.gdepth,
                c.recursive
            );
        }
        out
    }

    /// Human-readable summary for the `analyze` subcommand.
    pub fn report(&self, grammar: &Grammar) -> String {
        let mut out = String::new();
        let mut counts: HashMap<RuleLabel, usize> = HashMap::new();
        let mut excluded = 0;
        for alt in grammar.alt_ids() {
            if grammar.alternative(alt).excluded {
                excluded += 1;
                continue;
            }
            *counts.entry(self.get(alt).label).or_default() += 1;
        }
        let edges = enumerate_edges(grammar);
        let cycles = self.cycles(grammar);
        let _ = writeln!(out, "nonterminals: {}", grammar.nonterminal_count());
        let _ = writeln!(
            out,
            "alternatives: {} (simple {}, normal {}, complex {}, excluded {})",
            grammar.alt_ids().count(),
            counts.get(&RuleLabel::Simple).unwrap_or(&0),
            counts.get(&RuleLabel::Normal).unwrap_or(&0),
            counts.get(&RuleLabel::Complex).unwrap_or(&0),
            excluded
        );
        let _ = writeln!(out, "grammar edges: {}", edges.len());
        let _ = writeln!(out, "cycles: {}", cycles.len());
        for cycle in cycles {
            let names: Vec<&str> = cycle.iter().map(|nt| grammar.name(*nt)).collect();
            let _ = writeln!(out, "  {{{}}}", names.join(", "));
        }
        out
    }
}

/// Compute labels, guaranteed-termination depths and recursion flags.
///
/// Depth is a least fixpoint: an alternative without nonterminals has depth
/// 1, otherwise 1 + the deepest referenced nonterminal; a nonterminal takes
/// the max over its non-excluded alternatives. Anything left unresolved sits
/// on or above a cycle and is infinite.
pub fn classify(grammar: &Grammar) -> RuleClassification {
    let n = grammar.nonterminal_count();

    let mut nt_depth: Vec<Option<u32>> = vec![None; n];
    loop {
        let mut changed = false;
        for nt in grammar.nonterminals() {
            if nt_depth[nt.index()].is_some() {
                continue;
            }
            let mut deepest = 0u32;
            let mut resolved = true;
            let mut any = false;
            for i in grammar.usable_alternatives(nt) {
                any = true;
                match alt_depth(
                    grammar.alternative(AltId { nt, index: i }).nonterminals(),
                    &nt_depth,
                ) {
                    Some(d) => deepest = deepest.max(d),
                    None => {
                        resolved = false;
                        break;
                    }
                }
            }
            if resolved && any {
                nt_depth[nt.index()] = Some(deepest);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let reach = reachability(grammar);

    let alts = grammar
        .nonterminals()
        .map(|nt| {
            grammar
                .rule(nt)
                .alternatives
                .iter()
                .map(|alt| {
                    let gdepth = match alt_depth(alt.nonterminals(), &nt_depth) {
                        Some(d) => GDepth::Finite(d),
                        None => GDepth::Infinite,
                    };
                    let recursive = alt.nonterminals().any(|c| reach[c.index()][nt.index()]);
                    let label = match alt.manual_label {
                        Some(ManualLabel::Simple) => RuleLabel::Simple,
                        Some(ManualLabel::Complex) => RuleLabel::Complex,
                        None if recursive || gdepth == GDepth::Infinite => RuleLabel::Complex,
                        None if gdepth <= GDepth::Finite(2) => RuleLabel::Simple,
                        None => RuleLabel::Normal,
                    };
                    AltClass {
                        label,
                        gdepth,
                        recursive,
                    }
                })
                .collect()
        })
        .collect();

    RuleClassification {
        alts,
        nt_depth: nt_depth
            .into_iter()
            .map(|d| d.map_or(GDepth::Infinite, GDepth::Finite))
            .collect(),
        reach,
    }
}

fn alt_depth(mut children: impl Iterator<Item = NtId>, nt_depth: &[Option<u32>]) -> Option<u32> {
    children.try_fold(1u32, |acc, c| nt_depth[c.index()].map(|d| acc.max(d + 1)))
}

fn reachability(grammar: &Grammar) -> Vec<Vec<bool>> {
    let n = grammar.nonterminal_count();
    let successors: Vec<Vec<NtId>> = grammar
        .nonterminals()
        .map(|nt| {
            let mut s: Vec<NtId> = grammar
                .usable_alternatives(nt)
                .flat_map(|i| grammar.rule(nt).alternatives[i].nonterminals())
                .collect();
            s.sort();
            s.dedup();
            s
        })
        .collect();
    (0..n)
        .map(|from| {
            let mut seen = vec![false; n];
            let mut stack = vec![from];
            seen[from] = true;
            while let Some(cur) = stack.pop() {
                for next in &successors[cur] {
                    if !seen[next.index()] {
                        seen[next.index()] = true;
                        stack.push(next.index());
                    }
                }
            }
            seen
        })
        .collect()
}

/// Ordered (parent, referenced nonterminal) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GrammarEdge {
    pub parent: NtId,
    pub child: NtId,
}

/// Every edge over non-excluded alternatives, deduplicated per pair.
pub fn enumerate_edges(grammar: &Grammar) -> BTreeSet<GrammarEdge> {
    grammar
        .nonterminals()
        .flat_map(|parent| {
            grammar
                .usable_alternatives(parent)
                .flat_map(move |i| grammar.rule(parent).alternatives[i].nonterminals())
                .map(move |child| GrammarEdge { parent, child })
        })
        .collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("edge {0:?} is not a static grammar edge")]
pub struct UnknownEdge(pub GrammarEdge);

/// Grammar edges traversed so far against the static upper bound.
#[derive(Debug, Clone)]
pub struct EdgeCoverage {
    edges: Vec<GrammarEdge>,
    index: HashMap<GrammarEdge, usize>,
    /// Edge ids contributed by each alternative when it is committed.
    alt_edges: Vec<Vec<Vec<usize>>>,
    covered: Vec<bool>,
    covered_count: usize,
}

impl EdgeCoverage {
    pub fn new(grammar: &Grammar) -> Self {
        let edges: Vec<GrammarEdge> = enumerate_edges(grammar).into_iter().collect();
        let index: HashMap<GrammarEdge, usize> =
            edges.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let alt_edges = grammar
            .nonterminals()
            .map(|parent| {
                grammar
                    .rule(parent)
                    .alternatives
                    .iter()
                    .map(|alt| {
                        if alt.excluded {
                            return Vec::new();
                        }
                        let mut ids: Vec<usize> = alt
                            .nonterminals()
                            .map(|child| index[&GrammarEdge { parent, child }])
                            .collect();
                        ids.sort_unstable();
                        ids.dedup();
                        ids
                    })
                    .collect()
            })
            .collect();
        let covered = vec![false; edges.len()];
        EdgeCoverage {
            edges,
            index,
            alt_edges,
            covered,
            covered_count: 0,
        }
    }

    /// Mark an edge as traversed. Returns whether it was new.
    pub fn record_edge_traversal(&mut self, edge: GrammarEdge) -> Result<bool, UnknownEdge> {
        let &i = self.index.get(&edge).ok_or(UnknownEdge(edge))?;
        Ok(self.mark(i))
    }

    fn mark(&mut self, i: usize) -> bool {
        if self.covered[i] {
            false
        } else {
            self.covered[i] = true;
            self.covered_count += 1;
            true
        }
    }

    /// Record every parent/child pair in a derivation tree.
    pub fn record_tree(&mut self, root: &DerivationNode) {
        let EdgeCoverage {
            alt_edges,
            covered,
            covered_count,
            ..
        } = self;
        let mut stack = vec![root];
        while let Some(node) = stack.pop() {
            if let Some(ids) = alt_edges
                .get(node.nonterminal.index())
                .and_then(|a| a.get(node.alternative))
            {
                for &id in ids {
                    if !covered[id] {
                        covered[id] = true;
                        *covered_count += 1;
                    }
                }
            }
            for child in &node.children {
                if let Child::Node(n) = child {
                    stack.push(n);
                }
            }
        }
    }

    pub fn total(&self) -> usize {
        self.edges.len()
    }

    pub fn covered_count(&self) -> usize {
        self.covered_count
    }

    pub fn ratio(&self) -> f64 {
        if self.edges.is_empty() {
            1.0
        } else {
            self.covered_count as f64 / self.edges.len() as f64
        }
    }

    pub fn is_covered(&self, edge: GrammarEdge) -> bool {
        self.index.get(&edge).is_some_and(|&i| self.covered[i])
    }

    pub fn covered(&self) -> impl Iterator<Item = GrammarEdge> + '_ {
        self.edges
            .iter()
            .zip(&self.covered)
            .filter(|(_, c)| **c)
            .map(|(e, _)| *e)
    }

    /// Union another worker's coverage into this one.
    pub fn merge(&mut self, other: &EdgeCoverage) {
        for (i, c) in other.covered.iter().enumerate() {
            if *c && i < self.covered.len() {
                self.mark(i);
            }
        }
    }
}
