//! Coverage-guided grammar-rule traversal fuzzing.
//!
//! The pipeline: [`grammar`] loads a yacc-style rule file, [`analysis`]
//! classifies alternatives and enumerates grammar edges, [`generator`] and
//! [`mutator`] build derivation trees, [`instantiate`] fills argument slots,
//! [`coverage`] runs statements against a target and detects new branch
//! coverage, and [`campaign`] ties it together with an ε-greedy bandit.

pub mod analysis;
pub mod campaign;
pub mod coverage;
pub mod generator;
pub mod grammar;
pub mod instantiate;
pub mod mutator;
pub mod recognizer;
pub mod tree;

pub use analysis::{
    classify, enumerate_edges, EdgeCoverage, GDepth, GrammarEdge, RuleClassification, RuleLabel,
};
pub use campaign::bandit::{select_arm, BanditTable};
pub use campaign::{
    replay, run_campaign, CampaignConfig, CampaignError, CampaignStats, CrashKey, Poc,
    ReplayOutcome, StatsRow,
};
pub use coverage::{
    execute_sequence, CoverageMap, Crash, CrashKind, ExecOutcome, ExecStatus, TargetAdapter,
    TargetError, VirginMap,
};
pub use generator::{render, GenError, GenPolicy, Generator, Template};
pub use grammar::{load_grammar, Grammar, GrammarError, IngestConfig, PlaceholderCategory};
pub use instantiate::{reset_registry, Instantiator, SchemaRegistry};
pub use mutator::mutate;
pub use tree::{DerivationNode, DerivationTree};
