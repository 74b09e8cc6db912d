//! Campaign configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coverage::toy;
use crate::coverage::DEFAULT_MAP_SIZE;
use crate::generator::GenPolicy;
use crate::grammar::{load_grammar, Grammar, IngestConfig};

use super::CampaignError;

/// Number of statements of each kind per sequence, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceCounts {
    pub create_table: usize,
    pub insert: usize,
    pub create_index: usize,
    pub random: usize,
    pub select: usize,
}

impl Default for SequenceCounts {
    fn default() -> Self {
        SequenceCounts {
            create_table: 3,
            insert: 3,
            create_index: 2,
            random: 10,
            select: 10,
        }
    }
}

/// Nonterminal that roots each statement kind. `random` defaults to the
/// grammar's start symbol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatementRoots {
    pub create_table: String,
    pub insert: String,
    pub create_index: String,
    pub select: String,
    pub random: Option<String>,
}

impl Default for StatementRoots {
    fn default() -> Self {
        StatementRoots {
            create_table: "create_table_stmt".into(),
            insert: "insert_stmt".into(),
            create_index: "create_index_stmt".into(),
            select: "select_stmt".into(),
            random: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    /// Grammar file; the bundled toy grammar when absent.
    pub grammar: Option<PathBuf>,
    pub tokens: Option<PathBuf>,
    pub placeholders: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub start_symbol: Option<String>,
    /// External target command; the embedded toy target when absent.
    pub target_cmd: Option<String>,
    pub target_timeout_secs: f64,
    pub map_size: usize,
    pub epsilon: f64,
    pub depth_threshold: u32,
    pub hard_depth_cap: u32,
    pub mutation_prob: f64,
    pub workers: usize,
    pub budget_secs: Option<f64>,
    pub max_sequences: Option<u64>,
    pub no_coverage: bool,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub stats_interval_secs: f64,
    pub queue_cap: usize,
    pub sequence: SequenceCounts,
    pub statements: StatementRoots,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        let policy = GenPolicy::default();
        CampaignConfig {
            grammar: None,
            tokens: None,
            placeholders: None,
            rules: None,
            start_symbol: None,
            target_cmd: None,
            target_timeout_secs: 5.0,
            map_size: DEFAULT_MAP_SIZE,
            epsilon: policy.epsilon,
            depth_threshold: policy.depth_threshold,
            hard_depth_cap: policy.hard_depth_cap,
            mutation_prob: 0.5,
            workers: 1,
            budget_secs: Some(60.0),
            max_sequences: None,
            no_coverage: false,
            seed: 0,
            output_dir: PathBuf::from("gtf-out"),
            stats_interval_secs: 5.0,
            queue_cap: 4096,
            sequence: SequenceCounts::default(),
            statements: StatementRoots::default(),
        }
    }
}

/// Every accepted key with its default, one per line (for `--help`).
pub const CONFIG_KEYS: &str = "\
grammar              grammar file (default: bundled toy grammar)
tokens               token map file, TERMINAL<TAB>surface
placeholders         placeholder file, TERMINAL Category
rules                rule config file (label/exclude lines)
start_symbol         start nonterminal override
target_cmd           external target command (default: embedded toy target)
target_timeout_secs  per-statement timeout, default 5
map_size             coverage map bytes, power of two, default 262144
epsilon              probability of exploiting the best arm, default 0.5
depth_threshold      depth where Simple/Normal/Complex priority starts, default 15
hard_depth_cap       depth where generation gives up, default 40
mutation_prob        per-slot chance to mutate a queue entry, default 0.5
workers              independent worker threads, default 1
budget_secs          wall-clock budget, default 60
max_sequences        stop after this many sequences per worker
no_coverage          ignore coverage feedback, default false
seed                 campaign seed, default 0
output_dir           stats.csv and poc/ go here, default gtf-out
stats_interval_secs  stats row cadence, default 5
queue_cap            queue size before FIFO eviction, default 4096
[sequence]           create_table=3 insert=3 create_index=2 random=10 select=10
[statements]         create_table, insert, create_index, select, random: root nonterminals
";

impl CampaignConfig {
    /// A file that sets `max_sequences` without `budget_secs` is bounded by
    /// sequences alone; the default time budget only fills in when neither
    /// is given.
    pub fn from_toml(text: &str) -> Result<Self, CampaignError> {
        let err = |e: toml::de::Error| CampaignError::Config(e.to_string());
        let table: toml::Table = toml::from_str(text).map_err(err)?;
        let only_sequences =
            table.contains_key("max_sequences") && !table.contains_key("budget_secs");
        let mut config: Self = table.try_into().map_err(err)?;
        if only_sequences {
            config.budget_secs = None;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, CampaignError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CampaignError::Input(path.to_path_buf(), e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn policy(&self) -> GenPolicy {
        GenPolicy {
            depth_threshold: self.depth_threshold,
            hard_depth_cap: self.hard_depth_cap,
            epsilon: self.epsilon,
            rng_seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let bad = |m: &str| Err(CampaignError::Config(m.to_string()));
        if self.map_size == 0 || !self.map_size.is_power_of_two() {
            return bad("map_size must be a power of two");
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return bad("mutation_prob must be within [0, 1]");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.stats_interval_secs <= 0.0 || self.target_timeout_secs <= 0.0 {
            return bad("intervals must be positive");
        }
        if self.queue_cap == 0 {
            return bad("queue_cap must be at least 1");
        }
        if self.budget_secs.is_none() && self.max_sequences.is_none() {
            return bad("one of budget_secs or max_sequences is required");
        }
        if self.tokens.is_some() && self.grammar.is_none() {
            return bad("tokens given without grammar");
        }
        self.policy()
            .validate()
            .map_err(|e| CampaignError::Config(e.to_string()))
    }

    /// Load the configured grammar, or the bundled toy grammar.
    pub fn load_grammar(&self) -> Result<Grammar, CampaignError> {
        let read = |p: &PathBuf| {
            std::fs::read_to_string(p).map_err(|e| CampaignError::Input(p.clone(), e))
        };
        let (grammar, tokens, placeholders, rules) = match &self.grammar {
            None => (
                toy::GRAMMAR.to_string(),
                toy::TOKENS.to_string(),
                Some(toy::PLACEHOLDERS.to_string()),
                Some(toy::RULES.to_string()),
            ),
            Some(g) => (
                read(g)?,
                self.tokens
                    .as_ref()
                    .map(read)
                    .transpose()?
                    .unwrap_or_default(),
                self.placeholders.as_ref().map(read).transpose()?,
                self.rules.as_ref().map(read).transpose()?,
            ),
        };
        let g = load_grammar(
            &grammar,
            &tokens,
            &IngestConfig {
                placeholders,
                start_symbol: self.start_symbol.clone(),
            },
        )?;
        match rules {
            Some(r) => Ok(g.apply_rule_config(&r)?),
            None => Ok(g),
        }
    }
}
