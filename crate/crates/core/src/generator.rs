//! Randomized rule traversal.
//!
//! Below the depth threshold every non-excluded alternative is a candidate
//! and the bandit picks one. From the threshold on, candidates shrink to the
//! best available class (Simple, else Normal, else Complex) and the bandit
//! picks within that class. Depth is derivation-tree depth from the root.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{EdgeCoverage, RuleClassification, RuleLabel};
use crate::campaign::bandit::{select_arm, BanditTable};
use crate::grammar::{Grammar, NtId, PlaceholderId, Symbol, TokenId};
use crate::tree::{Child, DerivationNode, DerivationTree};

/// Consecutive depth-cap failures tolerated before giving up.
pub const MAX_GENERATION_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenPolicy {
    pub depth_threshold: u32,
    pub hard_depth_cap: u32,
    /// Probability of exploiting the best-known arm.
    pub epsilon: f64,
    pub rng_seed: u64,
}

impl Default for GenPolicy {
    fn default() -> Self {
        GenPolicy {
            depth_threshold: 15,
            hard_depth_cap: 40,
            epsilon: 0.5,
            rng_seed: 0,
        }
    }
}

impl GenPolicy {
    pub fn with_seed(self, rng_seed: u64) -> Self {
        GenPolicy { rng_seed, ..self }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.depth_threshold == 0 || self.depth_threshold >= self.hard_depth_cap {
            return Err(GenError::InvalidPolicy(format!(
                "need 0 < depth_threshold ({}) < hard_depth_cap ({})",
                self.depth_threshold, self.hard_depth_cap
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(GenError::InvalidPolicy(format!(
                "epsilon {} outside [0, 1]",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("derivation reached the hard depth cap of {0}")]
    DepthCapExceeded(u32),
    #[error("generation hit the depth cap {0} times in a row")]
    GenerationStuck(usize),
    #[error("nonterminal `{0}` has no usable alternatives")]
    NoUsableAlternative(String),
    #[error("invalid generation policy: {0}")]
    InvalidPolicy(String),
}

/// Grammar plus precomputed candidate sets. Cheap to share read-only.
#[derive(Debug, Clone)]
pub struct Generator<'g> {
    grammar: &'g Grammar,
    usable: Vec<Vec<usize>>,
    prioritized: Vec<Vec<usize>>,
}

impl<'g> Generator<'g> {
    pub fn new(grammar: &'g Grammar, classification: &RuleClassification) -> Self {
        let usable: Vec<Vec<usize>> = grammar
            .nonterminals()
            .map(|nt| grammar.usable_alternatives(nt).collect())
            .collect();
        let prioritized = grammar
            .nonterminals()
            .map(|nt| {
                let classes = classification.alternatives(nt);
                let of = |label: RuleLabel| -> Vec<usize> {
                    usable[nt.index()]
                        .iter()
                        .copied()
                        .filter(|&i| classes[i].label == label)
                        .collect()
                };
                [RuleLabel::Simple, RuleLabel::Normal, RuleLabel::Complex]
                    .into_iter()
                    .map(of)
                    .find(|v| !v.is_empty())
                    .unwrap_or_default()
            })
            .collect();
        Generator {
            grammar,
            usable,
            prioritized,
        }
    }

    pub fn grammar(&self) -> &'g Grammar {
        self.grammar
    }

    /// Alternatives eligible at `depth` under `policy`.
    pub fn candidates(&self, nt: NtId, depth: u32, policy: &GenPolicy) -> &[usize] {
        if depth < policy.depth_threshold {
            &self.usable[nt.index()]
        } else {
            &self.prioritized[nt.index()]
        }
    }

    /// One generation attempt from `start`, seeded by `policy.rng_seed`.
    /// Edges of the returned tree are recorded into `edge_cov`.
    pub fn generate(
        &self,
        start: NtId,
        policy: &GenPolicy,
        bandit: &BanditTable,
        edge_cov: &mut EdgeCoverage,
    ) -> Result<DerivationTree, GenError> {
        let mut rng = ChaCha8Rng::seed_from_u64(policy.rng_seed);
        let tree = self.expand(start, 0, None, policy, bandit, &mut rng)?;
        edge_cov.record_tree(&tree);
        Ok(tree)
    }

    /// Retry [`Generator::generate`] with fresh seeds derived from the policy
    /// seed on depth-cap failures, up to [`MAX_GENERATION_ATTEMPTS`].
    pub fn generate_with_retry(
        &self,
        start: NtId,
        policy: &GenPolicy,
        bandit: &BanditTable,
        edge_cov: &mut EdgeCoverage,
    ) -> Result<DerivationTree, GenError> {
        let mut seeds = ChaCha8Rng::seed_from_u64(policy.rng_seed);
        let mut seed = policy.rng_seed;
        for _ in 0..MAX_GENERATION_ATTEMPTS {
            match self.generate(start, &policy.with_seed(seed), bandit, edge_cov) {
                Err(GenError::DepthCapExceeded(_)) => seed = seeds.gen(),
                other => return other,
            }
        }
        Err(GenError::GenerationStuck(MAX_GENERATION_ATTEMPTS))
    }

    /// Expand `nt` as a node at `depth`. `forced` fixes the alternative of
    /// this node only (used for targeted mutation).
    pub fn expand<R: Rng + ?Sized>(
        &self,
        nt: NtId,
        depth: u32,
        forced: Option<usize>,
        policy: &GenPolicy,
        bandit: &BanditTable,
        rng: &mut R,
    ) -> Result<DerivationNode, GenError> {
        if depth >= policy.hard_depth_cap {
            return Err(GenError::DepthCapExceeded(policy.hard_depth_cap));
        }
        let alternative = match forced {
            Some(i) => i,
            None => select_arm(
                bandit,
                nt,
                self.candidates(nt, depth, policy),
                policy.epsilon,
                rng,
            )
            .map_err(|_| GenError::NoUsableAlternative(self.grammar.name(nt).to_string()))?,
        };
        let symbols = &self.grammar.rule(nt).alternatives[alternative].symbols;
        let mut children = Vec::with_capacity(symbols.len());
        for sym in symbols {
            children.push(match *sym {
                Symbol::NonTerminal(c) => {
                    Child::Node(self.expand(c, depth + 1, None, policy, bandit, rng)?)
                }
                Symbol::Token(t) => Child::Token(t),
                Symbol::Placeholder(p) => Child::Placeholder(p),
            });
        }
        Ok(DerivationNode {
            nonterminal: nt,
            alternative,
            children,
            depth,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("derivation tree is incomplete: {0}")]
pub struct IncompleteTree(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplatePart {
    Token(TokenId),
    Slot(PlaceholderId),
}

/// A rendered statement with unfilled placeholder slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Template {
    pub parts: Vec<TemplatePart>,
}

impl Template {
    /// Surface form: tokens separated by single spaces, slots as
    /// `<Category>` markers.
    pub fn to_text(&self, grammar: &Grammar) -> String {
        let mut out = String::new();
        for (i, part) in self.parts.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            match part {
                TemplatePart::Token(t) => out.push_str(&grammar.token(*t).surface),
                TemplatePart::Slot(p) => {
                    let _ = write!(out, "<{}>", grammar.placeholder(*p).category);
                }
            }
        }
        out
    }
}

/// Left-to-right leaf concatenation of a complete tree.
pub fn render(tree: &DerivationTree, grammar: &Grammar) -> Result<Template, IncompleteTree> {
    tree.check(grammar).map_err(IncompleteTree)?;
    Ok(Template {
        parts: tree
            .leaves()
            .into_iter()
            .map(|leaf| match leaf {
                crate::tree::Leaf::Token(t) => TemplatePart::Token(t),
                crate::tree::Leaf::Placeholder(p) => TemplatePart::Slot(p),
            })
            .collect(),
    })
}
