//! Campaign orchestration: workers, the supervisor that merges their stats,
//! and PoC replay.

pub mod bandit;
pub mod config;
pub mod poc;
pub mod sequence;
pub mod worker;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::time::{Duration, Instant};

use crate::analysis::{classify, EdgeCoverage};
use crate::coverage::process::ProcessTarget;
use crate::coverage::toy::ToyTarget;
use crate::coverage::{execute_sequence, ExecStatus, TargetAdapter, TargetError, VirginMap};
use crate::generator::Generator;
use crate::grammar::GrammarError;

pub use config::{CampaignConfig, SequenceCounts, StatementRoots, CONFIG_KEYS};
pub use poc::{grammar_hash, CrashKey, Poc, PocParseError};
pub use sequence::{SequenceError, SequencePolicy, SlotKind};
pub use worker::{
    CrashRecord, SequenceReport, StatementEvent, Worker, WorkerCounters, WorkerSetup,
    WorkerSnapshot,
};

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Input(PathBuf, io::Error),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error("writing output: {0}")]
    Output(io::Error),
    #[error("target failed {n} sequences in a row, last error: {0}", n = worker::MAX_TARGET_FAILURES)]
    TargetAborted(String),
    #[error(transparent)]
    Target(#[from] TargetError),
}

pub const STATS_HEADER: &str =
    "elapsed_s,stmts,valid_pct,edges_covered,edges_total,cov_tuples,crashes,asserts";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsRow {
    pub elapsed_s: f64,
    pub stmts: u64,
    pub valid_pct: f64,
    pub edges_covered: usize,
    pub edges_total: usize,
    pub cov_tuples: u64,
    pub crashes: usize,
    pub asserts: usize,
}

impl StatsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{:.1},{},{:.2},{},{},{},{},{}",
            self.elapsed_s,
            self.stmts,
            self.valid_pct,
            self.edges_covered,
            self.edges_total,
            self.cov_tuples,
            self.crashes,
            self.asserts
        )
    }
}

/// Merged result of all workers.
#[derive(Debug, Clone)]
pub struct CampaignStats {
    pub rows: Vec<StatsRow>,
    pub counters: WorkerCounters,
    pub edges: EdgeCoverage,
    pub virgin: VirginMap,
    pub crashes: Vec<CrashRecord>,
    pub queue_len: usize,
    pub elapsed: Duration,
}

impl CampaignStats {
    pub fn last(&self) -> &StatsRow {
        self.rows.last().expect("at least the final row")
    }

    pub fn crash_keys(&self) -> impl Iterator<Item = &CrashKey> {
        self.crashes.iter().map(|c| &c.key)
    }

    pub fn has_crash_code(&self, code: u32) -> bool {
        self.crashes.iter().any(|c| c.key.code == code)
    }
}

/// Target for worker `index`: the external command when configured,
/// otherwise the embedded toy target.
pub fn make_target(
    config: &CampaignConfig,
    index: usize,
) -> Result<Box<dyn TargetAdapter + Send>, CampaignError> {
    match &config.target_cmd {
        None => Ok(Box::new(ToyTarget::new(config.map_size))),
        Some(cmd) => {
            std::fs::create_dir_all(&config.output_dir).map_err(CampaignError::Output)?;
            let map_path = config.output_dir.join(format!("map-{index}"));
            let t = ProcessTarget::new(cmd, map_path, config.map_size)?
                .with_timeout(Duration::from_secs_f64(config.target_timeout_secs));
            Ok(Box::new(t))
        }
    }
}

pub fn worker_seed(campaign_seed: u64, index: usize) -> u64 {
    campaign_seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn merge(
    snaps: &[Option<WorkerSnapshot>],
    edges_base: &EdgeCoverage,
    map_size: usize,
) -> CampaignStats {
    let mut counters = WorkerCounters::default();
    let mut edges = edges_base.clone();
    let mut virgin = VirginMap::new(map_size);
    let mut crashes: Vec<CrashRecord> = Vec::new();
    let mut queue_len = 0;
    for s in snaps.iter().flatten() {
        let c = &s.counters;
        counters.sequences += c.sequences;
        counters.statements += c.statements;
        counters.valid += c.valid;
        counters.sem_errors += c.sem_errors;
        counters.syn_errors += c.syn_errors;
        counters.gen_failures += c.gen_failures;
        counters.eligible_slots += c.eligible_slots;
        counters.mutated_slots += c.mutated_slots;
        counters.target_errors += c.target_errors;
        edges.merge(&s.edges);
        virgin.merge(&s.virgin).expect("workers share the map size");
        for r in &s.crashes {
            match crashes.iter_mut().find(|x| x.key == r.key) {
                Some(x) if r.found_at < x.found_at => *x = r.clone(),
                Some(_) => {}
                None => crashes.push(r.clone()),
            }
        }
        queue_len += s.queue_len;
    }
    crashes.sort_by(|a, b| a.key.cmp(&b.key));
    CampaignStats {
        rows: Vec::new(),
        counters,
        edges,
        virgin,
        crashes,
        queue_len,
        elapsed: Duration::ZERO,
    }
}

fn row(stats: &CampaignStats, elapsed: Duration) -> StatsRow {
    let c = &stats.counters;
    let (crashes, asserts) = worker::count_kinds(stats.crash_keys());
    StatsRow {
        elapsed_s: elapsed.as_secs_f64(),
        stmts: c.statements,
        valid_pct: if c.statements == 0 {
            0.0
        } else {
            100.0 * c.valid as f64 / c.statements as f64
        },
        edges_covered: stats.edges.covered_count(),
        edges_total: stats.edges.total(),
        cov_tuples: stats.virgin.tuple_count(),
        crashes,
        asserts,
    }
}

/// Run a full campaign. Writes `stats.csv` and `poc/` under the output dir.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignStats, CampaignError> {
    config.validate()?;
    let grammar = config.load_grammar()?;
    let classification = classify(&grammar);
    let generator = Generator::new(&grammar, &classification);
    let sequence_policy = SequencePolicy::resolve(&grammar, &config.sequence, &config.statements)?;
    let hash = grammar_hash(&grammar);

    std::fs::create_dir_all(&config.output_dir).map_err(CampaignError::Output)?;
    let poc_dir = config.output_dir.join("poc");
    let stats_path = config.output_dir.join("stats.csv");
    let mut csv = BufWriter::new(File::create(&stats_path).map_err(CampaignError::Output)?);
    writeln!(csv, "{STATS_HEADER}").map_err(CampaignError::Output)?;

    let mut targets = Vec::with_capacity(config.workers);
    for w in 0..config.workers {
        targets.push(make_target(config, w)?);
    }

    let interval = Duration::from_secs_f64(config.stats_interval_secs);
    let budget = config.budget_secs.map(Duration::from_secs_f64);
    let started = Instant::now();
    let stop = AtomicBool::new(false);
    let edges_base = crate::analysis::EdgeCoverage::new(&grammar);

    let (results, mut stats, rows) = std::thread::scope(|s| {
        let (tx, rx) = mpsc::channel::<WorkerSnapshot>();
        let mut handles = Vec::new();
        for (w, target) in targets.into_iter().enumerate() {
            let tx = tx.clone();
            let setup = WorkerSetup {
                index: w,
                generator: generator.clone(),
                policy: config.policy(),
                sequence_policy: sequence_policy.clone(),
                mutation_prob: config.mutation_prob,
                no_coverage: config.no_coverage,
                queue_cap: config.queue_cap,
                target,
                seed: worker_seed(config.seed, w),
                campaign_seed: config.seed,
                grammar_hash: hash.clone(),
                poc_dir: Some(poc_dir.clone()),
                started,
            };
            let stop = &stop;
            handles.push(s.spawn(move || -> Result<(), CampaignError> {
                let mut worker = Worker::new(setup);
                let mut last_sent = Instant::now();
                let result = loop {
                    if stop.load(Ordering::Relaxed)
                        || budget.is_some_and(|b| started.elapsed() >= b)
                        || config
                            .max_sequences
                            .is_some_and(|m| worker.counters().sequences >= m)
                    {
                        break Ok(());
                    }
                    if let Err(e) = worker.run_sequence() {
                        stop.store(true, Ordering::Relaxed);
                        break Err(e);
                    }
                    // Quarter interval so each stats row sees fresh snapshots.
                    if last_sent.elapsed() >= interval / 4 {
                        let _ = tx.send(worker.snapshot());
                        last_sent = Instant::now();
                    }
                };
                let _ = tx.send(worker.snapshot());
                result
            }));
        }
        drop(tx);

        let mut latest: Vec<Option<WorkerSnapshot>> = vec![None; config.workers];
        let mut rows = Vec::new();
        let mut next_tick = started + interval;
        let mut write_err = None;
        loop {
            let wait = next_tick.saturating_duration_since(Instant::now());
            match rx.recv_timeout(wait) {
                Ok(snap) => {
                    let w = snap.worker;
                    latest[w] = Some(snap);
                }
                Err(RecvTimeoutError::Timeout) => {
                    let r = row(
                        &merge(&latest, &edges_base, config.map_size),
                        started.elapsed(),
                    );
                    if let Err(e) = writeln!(csv, "{}", r.to_csv()).and_then(|_| csv.flush()) {
                        write_err.get_or_insert(e);
                    }
                    rows.push(r);
                    next_tick += interval;
                }
                Err(RecvTimeoutError::Disconnected) => break,
            }
        }
        let results: Vec<Result<(), CampaignError>> = handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect();
        let mut stats = merge(&latest, &edges_base, config.map_size);
        stats.elapsed = started.elapsed();
        let r = row(&stats, stats.elapsed);
        if let Err(e) = writeln!(csv, "{}", r.to_csv()).and_then(|_| csv.flush()) {
            write_err.get_or_insert(e);
        }
        rows.push(r);
        (
            results
                .into_iter()
                .chain(write_err.map(|e| Err(CampaignError::Output(e))))
                .collect::<Vec<_>>(),
            stats,
            rows,
        )
    });
    stats.rows = rows;
    for r in results {
        r?;
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayOutcome {
    /// Crash raised by the last executed statement, keyed by its recorded type.
    pub observed: Option<CrashKey>,
    pub statuses: Vec<Option<ExecStatus>>,
}

impl ReplayOutcome {
    pub fn matches(&self, key: &CrashKey) -> bool {
        self.observed.as_ref() == Some(key)
    }
}

/// Re-execute a PoC's statements on a fresh target state.
pub fn replay<T: TargetAdapter + ?Sized>(
    poc: &Poc,
    target: &mut T,
) -> Result<ReplayOutcome, TargetError> {
    target.reset()?;
    let mut virgin = VirginMap::new(target.map_size());
    let outcomes = execute_sequence(target, &poc.statements, &mut virgin)?;
    let observed = outcomes.iter().enumerate().find_map(|(i, o)| {
        o.crash
            .map(|c| CrashKey::new(c, poc.types.get(i).map(String::as_str).unwrap_or("?")))
    });
    Ok(ReplayOutcome {
        observed,
        statuses: outcomes.iter().map(|o| o.status).collect(),
    })
}
