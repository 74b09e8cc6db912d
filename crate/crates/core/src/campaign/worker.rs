//! One fuzzing worker: owns its bandit table, queue, virgin map and target.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::EdgeCoverage;
use crate::coverage::{execute_sequence, CrashKind, ExecStatus, TargetAdapter, VirginMap};
use crate::generator::{render, GenPolicy, Generator};
use crate::grammar::{Grammar, NtId};
use crate::instantiate::{reset_registry, Instantiator};
use crate::mutator::mutate;
use crate::tree::{Child, DerivationTree};

use super::bandit::BanditTable;
use super::poc::{CrashKey, Poc, TOOL_VERSION};
use super::sequence::{build_sequence, PlanSource, Queue, QueueEntry, SequencePolicy};
use super::CampaignError;

/// Consecutive failed sequences tolerated before the campaign gives up.
pub const MAX_TARGET_FAILURES: u32 = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkerCounters {
    pub sequences: u64,
    pub statements: u64,
    pub valid: u64,
    pub sem_errors: u64,
    pub syn_errors: u64,
    pub gen_failures: u64,
    /// Slots where a compatible queue entry existed.
    pub eligible_slots: u64,
    pub mutated_slots: u64,
    pub target_errors: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrashRecord {
    pub key: CrashKey,
    pub worker: usize,
    pub found_at: Duration,
    /// Where the PoC landed, if this worker wrote it.
    pub poc: Option<PathBuf>,
}

/// Point-in-time view of a worker, sent to the supervisor.
#[derive(Debug, Clone)]
pub struct WorkerSnapshot {
    pub worker: usize,
    pub counters: WorkerCounters,
    pub edges: EdgeCoverage,
    pub virgin: VirginMap,
    pub crashes: Vec<CrashRecord>,
    pub queue_len: usize,
}

/// What one executed statement fed back into the learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatementEvent {
    pub root: NtId,
    /// Distinct arms committed in the statement's tree.
    pub arms: usize,
    pub new_coverage: bool,
    pub crashed: bool,
}

/// Result of executing one sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SequenceReport {
    pub statements: Vec<String>,
    /// One per executed statement, in order.
    pub events: Vec<StatementEvent>,
    pub new_crashes: Vec<CrashKey>,
    pub new_coverage: usize,
    pub target_error: Option<String>,
}

pub struct Worker<'g> {
    index: usize,
    grammar: &'g Grammar,
    generator: Generator<'g>,
    policy: GenPolicy,
    sequence_policy: SequencePolicy,
    mutation_prob: f64,
    no_coverage: bool,
    bandit: BanditTable,
    edges: EdgeCoverage,
    queue: Queue,
    virgin: VirginMap,
    target: Box<dyn TargetAdapter + Send + 'g>,
    instantiator: Instantiator,
    rng: ChaCha8Rng,
    campaign_seed: u64,
    grammar_hash: String,
    poc_dir: Option<PathBuf>,
    started: Instant,
    counters: WorkerCounters,
    crashes: BTreeMap<CrashKey, CrashRecord>,
    failures_in_a_row: u32,
}

pub struct WorkerSetup<'g> {
    pub index: usize,
    pub generator: Generator<'g>,
    pub policy: GenPolicy,
    pub sequence_policy: SequencePolicy,
    pub mutation_prob: f64,
    pub no_coverage: bool,
    pub queue_cap: usize,
    pub target: Box<dyn TargetAdapter + Send + 'g>,
    pub seed: u64,
    pub campaign_seed: u64,
    pub grammar_hash: String,
    pub poc_dir: Option<PathBuf>,
    pub started: Instant,
}

impl<'g> Worker<'g> {
    pub fn new(setup: WorkerSetup<'g>) -> Self {
        let grammar = setup.generator.grammar();
        let map_size = setup.target.map_size();
        Worker {
            index: setup.index,
            grammar,
            generator: setup.generator,
            policy: setup.policy,
            sequence_policy: setup.sequence_policy,
            mutation_prob: setup.mutation_prob,
            no_coverage: setup.no_coverage,
            bandit: BanditTable::new(grammar),
            edges: EdgeCoverage::new(grammar),
            queue: Queue::new(setup.queue_cap),
            virgin: VirginMap::new(map_size),
            target: setup.target,
            instantiator: Instantiator::default(),
            rng: ChaCha8Rng::seed_from_u64(setup.seed),
            campaign_seed: setup.campaign_seed,
            grammar_hash: setup.grammar_hash,
            poc_dir: setup.poc_dir,
            started: setup.started,
            counters: WorkerCounters::default(),
            crashes: BTreeMap::new(),
            failures_in_a_row: 0,
        }
    }

    pub fn counters(&self) -> WorkerCounters {
        self.counters
    }

    pub fn bandit(&self) -> &BanditTable {
        &self.bandit
    }

    pub fn queue(&self) -> &Queue {
        &self.queue
    }

    pub fn virgin(&self) -> &VirginMap {
        &self.virgin
    }

    pub fn edges(&self) -> &EdgeCoverage {
        &self.edges
    }

    pub fn crashes(&self) -> impl Iterator<Item = &CrashRecord> {
        self.crashes.values()
    }

    pub fn snapshot(&self) -> WorkerSnapshot {
        WorkerSnapshot {
            worker: self.index,
            counters: self.counters,
            edges: self.edges.clone(),
            virgin: self.virgin.clone(),
            crashes: self.crashes.values().cloned().collect(),
            queue_len: self.queue.len(),
        }
    }

    /// Strip unit productions of the random-slot root so queue entries are
    /// tagged by the statement they actually are.
    fn statement_tree(&self, mut tree: DerivationTree) -> DerivationTree {
        let random_root = self.sequence_policy.random_root();
        while tree.nonterminal == random_root && tree.children.len() == 1 {
            let Some(Child::Node(inner)) = tree.children.pop() else {
                break;
            };
            if inner.nonterminal == random_root {
                tree = inner;
                continue;
            }
            let mut inner = inner;
            inner.rebase(0);
            return inner;
        }
        tree
    }

    fn grow(&mut self, root: NtId, source: PlanSource, seed: u64) -> Option<DerivationTree> {
        let policy = self.policy.with_seed(seed);
        if let PlanSource::Mutate(i) = source {
            let base = &self.queue.get(i).tree;
            if let Ok(t) = mutate(
                base,
                &self.generator,
                &policy,
                &self.bandit,
                &mut self.edges,
                seed,
            ) {
                return Some(t);
            }
        }
        match self
            .generator
            .generate_with_retry(root, &policy, &self.bandit, &mut self.edges)
        {
            Ok(t) => Some(t),
            Err(_) => {
                self.counters.gen_failures += 1;
                None
            }
        }
    }

    /// Build, run and learn from one sequence.
    pub fn run_sequence(&mut self) -> Result<SequenceReport, CampaignError> {
        let sequence_no = self.counters.sequences;
        self.counters.sequences += 1;
        let sequence_seed: u64 = self.rng.gen();
        let mut rng = ChaCha8Rng::seed_from_u64(sequence_seed);
        let plans = build_sequence(
            &self.sequence_policy,
            &self.queue,
            self.mutation_prob,
            &mut rng,
        );

        let mut trees = Vec::with_capacity(plans.len());
        let mut seeds = Vec::with_capacity(plans.len());
        for plan in &plans {
            let seed: u64 = rng.gen();
            self.counters.eligible_slots += plan.eligible as u64;
            self.counters.mutated_slots += matches!(plan.source, PlanSource::Mutate(_)) as u64;
            if let Some(t) = self.grow(plan.root, plan.source, seed) {
                trees.push(self.statement_tree(t));
                seeds.push(seed);
            }
        }

        let mut registry = reset_registry();
        let statements: Vec<String> = trees
            .iter()
            .zip(&seeds)
            .map(|(t, &seed)| {
                let template = render(t, self.grammar).expect("generated trees are complete");
                self.instantiator
                    .instantiate(&template, self.grammar, &mut registry, seed)
            })
            .collect();

        let outcomes = match execute_sequence(self.target.as_mut(), &statements, &mut self.virgin) {
            Ok(o) => o,
            Err(e) => {
                self.counters.target_errors += 1;
                self.failures_in_a_row += 1;
                if self.failures_in_a_row >= MAX_TARGET_FAILURES {
                    return Err(CampaignError::TargetAborted(e.to_string()));
                }
                return Ok(SequenceReport {
                    statements,
                    target_error: Some(e.to_string()),
                    ..Default::default()
                });
            }
        };
        self.failures_in_a_row = 0;

        let mut report = SequenceReport {
            statements,
            ..Default::default()
        };
        let elapsed = self.started.elapsed();
        for (i, out) in outcomes.iter().enumerate() {
            self.counters.statements += 1;
            match out.status {
                Some(ExecStatus::Ok) => self.counters.valid += 1,
                Some(ExecStatus::SemanticError) => self.counters.sem_errors += 1,
                Some(ExecStatus::SyntaxError) => self.counters.syn_errors += 1,
                None => {}
            }
            let tree = &trees[i];
            if !self.no_coverage {
                self.bandit.reward_rules(tree, out.new_coverage);
                // Crashing trees are kept as PoCs, not as seeds: mutating them
                // mostly re-crashes and truncates every later sequence.
                if out.new_coverage && out.crash.is_none() {
                    self.queue.push(QueueEntry {
                        tree: tree.clone(),
                        root: tree.nonterminal,
                        discovered: elapsed,
                        seed: seeds[i],
                    });
                }
            }
            report.events.push(StatementEvent {
                root: tree.nonterminal,
                arms: tree.arms().len(),
                new_coverage: out.new_coverage,
                crashed: out.crash.is_some(),
            });
            report.new_coverage += out.new_coverage as usize;
            if let Some(crash) = out.crash {
                let key = CrashKey::new(crash, self.grammar.name(tree.nonterminal));
                if !self.crashes.contains_key(&key) {
                    let poc = Poc {
                        tool: TOOL_VERSION.to_string(),
                        grammar_hash: self.grammar_hash.clone(),
                        campaign_seed: self.campaign_seed,
                        worker: self.index,
                        sequence: sequence_no,
                        sequence_seed,
                        statement_seeds: seeds[..=i].to_vec(),
                        types: trees[..=i]
                            .iter()
                            .map(|t| self.grammar.name(t.nonterminal).to_string())
                            .collect(),
                        key: key.clone(),
                        statements: report.statements[..=i].to_vec(),
                    };
                    let path = match &self.poc_dir {
                        Some(dir) => poc.write_new(dir).map_err(CampaignError::Output)?,
                        None => None,
                    };
                    self.crashes.insert(
                        key.clone(),
                        CrashRecord {
                            key: key.clone(),
                            worker: self.index,
                            found_at: elapsed,
                            poc: path,
                        },
                    );
                    report.new_crashes.push(key);
                }
            }
        }
        Ok(report)
    }

    /// Distinct crash keys of each kind found so far.
    pub fn crash_counts(&self) -> (usize, usize) {
        count_kinds(self.crashes.keys())
    }
}

pub(crate) fn count_kinds<'a>(keys: impl Iterator<Item = &'a CrashKey>) -> (usize, usize) {
    keys.fold((0, 0), |(c, a), k| match k.kind {
        CrashKind::Crash => (c + 1, a),
        CrashKind::Assertion => (c, a + 1),
    })
}
