//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! `GTF_ACCEPT_ONLY=1,4` limits the run to the listed criteria and
//! `GTF_ACCEPT_BUDGET_SECS` shortens the paired campaigns of 5 and 6 (the
//! line then says so).

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gtf_core::analysis::RuleClassification;
use gtf_core::campaign::sequence::{build_sequence, PlanSource, SlotKind};
use gtf_core::campaign::{CampaignConfig, SequencePolicy};
use gtf_core::coverage::process::ProcessTarget;
use gtf_core::coverage::toy::{
    toy_grammar, ToyTarget, BUG_DELETE_EXPR_UNIQUE, BUG_MIXED_INLINE_INDEX,
    BUG_RIGHT_JOIN_COLLATE_NULL,
};
use gtf_core::coverage::{
    bucket, read_map_file, write_map_file, StatementResult, DEFAULT_MAP_SIZE,
};
use gtf_core::grammar::{AltId, NtId};
use gtf_core::recognizer::Recognizer;
use gtf_core::{
    classify, load_grammar, mutate, render, reset_registry, run_campaign, select_arm, BanditTable,
    CampaignStats, CoverageMap, EdgeCoverage, GDepth, GenPolicy, Generator, Grammar, IngestConfig,
    Instantiator, RuleLabel, TargetAdapter, VirginMap,
};

use common::{check_against_oracle, random_grammar_text, OracleTally};

const GTF: &str = env!("CARGO_BIN_EXE_gtf");
const CAMPAIGN_SECS: f64 = 600.0;
const PAIRS: u64 = 10;

type Outcome = (bool, String);

struct Toy {
    grammar: Grammar,
    classes: RuleClassification,
}

impl Toy {
    fn new() -> Self {
        let grammar = toy_grammar();
        let classes = classify(&grammar);
        Toy { grammar, classes }
    }
}

fn syntactic_soundness() -> Outcome {
    let started = Instant::now();
    let toy = Toy::new();
    let g = &toy.grammar;
    let generator = Generator::new(g, &toy.classes);
    let bandit = BanditTable::new(g);
    let mut edges = EdgeCoverage::new(g);
    let recognizer = Recognizer::new(g);
    let inst = Instantiator::default();
    let n = 10_000u64;
    let (mut generated, mut mutated) = (0u64, 0u64);
    let mut first_bad = None;
    let mut check = |text: String, ok: &mut u64| {
        if recognizer.recognizes(g.start(), &text) {
            *ok += 1;
        } else if first_bad.is_none() {
            first_bad = Some(text);
        }
    };
    let mut mutation_seed = n;
    for seed in 0..n {
        let policy = GenPolicy {
            rng_seed: seed,
            ..GenPolicy::default()
        };
        let tree = generator
            .generate_with_retry(g.start(), &policy, &bandit, &mut edges)
            .expect("generation");
        let text = inst.instantiate(&render(&tree, g).unwrap(), g, &mut reset_registry(), seed);
        check(text, &mut generated);
        // regrow until one mutation sticks; depth-cap failures are retried
        let child = loop {
            mutation_seed += 1;
            let p = policy.with_seed(mutation_seed);
            if let Ok(t) = mutate(&tree, &generator, &p, &bandit, &mut edges, mutation_seed) {
                break t;
            }
        };
        let text = inst.instantiate(
            &render(&child, g).unwrap(),
            g,
            &mut reset_registry(),
            mutation_seed,
        );
        check(text, &mut mutated);
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = generated == n && mutated == n && secs < 120.0;
    let mut detail = format!(
        "generated {generated}/{n}, mutated {mutated}/{n} re-parse, {secs:.1}s (limit 120s)"
    );
    if let Some(bad) = first_bad {
        detail += &format!("; first rejected: {bad}");
    }
    (pass, detail)
}

fn classification_oracle() -> Outcome {
    let started = Instant::now();
    let mut tally = OracleTally::default();
    let mut failures = Vec::new();
    for seed in 0..500u64 {
        let text = random_grammar_text(&mut ChaCha8Rng::seed_from_u64(seed));
        let g = match load_grammar(&text, "", &IngestConfig::default()) {
            Ok(g) => g,
            Err(e) => {
                failures.push(format!("grammar {seed} failed to load: {e}"));
                continue;
            }
        };
        if let Err(e) = check_against_oracle(&g, &classify(&g), &mut tally) {
            failures.push(format!("grammar {seed}: {e}"));
        }
    }

    let alt = |g: &Grammar, name: &str, index: usize| AltId {
        nt: g.lookup(name).unwrap(),
        index,
    };
    let nj = load_grammar(
        common::NATURAL_JOIN,
        common::NATURAL_JOIN_TOKENS,
        &IngestConfig::default(),
    )
    .unwrap();
    let c = classify(&nj);
    let a = c.get(alt(&nj, "natural_join_type", 0));
    if (a.label, a.gdepth) != (RuleLabel::Simple, GDepth::Finite(2)) {
        failures.push(format!(
            "natural_join_type: {} gdepth {}",
            a.label, a.gdepth
        ));
    }
    let pr = load_grammar(
        common::PRIORITIZATION,
        common::PRIORITIZATION_TOKENS,
        &IngestConfig::default(),
    )
    .unwrap();
    let c = classify(&pr);
    for i in 0..2 {
        let j = c.get(alt(&pr, "joined_table", i));
        if j.label != RuleLabel::Complex {
            failures.push(format!("joined_table[{i}]: {}", j.label));
        }
    }
    let tr = c.get(alt(&pr, "table_reference", 0));
    if tr.label != RuleLabel::Normal {
        failures.push(format!("table_reference -> table_factor: {}", tr.label));
    }

    let secs = started.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 60.0;
    let mut detail = format!(
        "500 grammars, {} alternatives match the cap-{} oracle ({} beyond the cap), 3 listing fixtures, {secs:.1}s (limit 60s)",
        tally.alternatives,
        common::ORACLE_CAP,
        tally.beyond_cap
    );
    if let Some(f) = failures.first() {
        detail += &format!("; {} failures, first: {f}", failures.len());
    }
    (pass, detail)
}

fn edge_saturation() -> Outcome {
    let toy = Toy::new();
    let mut worker = common::toy_worker(&toy.grammar, &toy.classes, 1, false);
    let started = Instant::now();
    let limit = Duration::from_secs(60);
    while worker.edges().ratio() < 0.99 && started.elapsed() < limit {
        if let Err(e) = worker.run_sequence() {
            return (false, format!("worker failed: {e}"));
        }
    }
    let e = worker.edges();
    let pass = e.ratio() >= 0.99;
    (
        pass,
        format!(
            "{}/{} edges ({:.1}%) after {} sequences, {:.1}s (limit 60s)",
            e.covered_count(),
            e.total(),
            100.0 * e.ratio(),
            worker.counters().sequences,
            started.elapsed().as_secs_f64()
        ),
    )
}

fn epsilon_greedy() -> Outcome {
    let g = load_grammar("s: 'a' | 'b' ;", "", &IngestConfig::default()).unwrap();
    let mut b = BanditTable::new(&g);
    *b.arm_mut(AltId {
        nt: NtId(0),
        index: 0,
    }) = gtf_core::campaign::bandit::Arm {
        trials: 10,
        reward: 10,
    };
    *b.arm_mut(AltId {
        nt: NtId(0),
        index: 1,
    }) = gtf_core::campaign::bandit::Arm {
        trials: 10,
        reward: 0,
    };
    let freq = |epsilon: f64, seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws = 10_000;
        let best = (0..draws)
            .filter(|_| select_arm(&b, NtId(0), &[0, 1], epsilon, &mut rng).unwrap() == 0)
            .count();
        best as f64 / draws as f64
    };
    let (half, one, zero) = (freq(0.5, 1), freq(1.0, 2), freq(0.0, 3));
    let pass = (half - 0.75).abs() <= 0.02 && one == 1.0 && (zero - 0.5).abs() <= 0.02;
    (
        pass,
        format!(
            "best-arm frequency: eps 0.5 -> {half:.4}, eps 1.0 -> {one:.4}, eps 0.0 -> {zero:.4}"
        ),
    )
}

/// Upper tail of Binomial(n, 1/2) at `wins`.
fn sign_test_p(wins: u64, n: u64) -> f64 {
    let choose = |n: u64, k: u64| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    (wins..=n).map(|k| choose(n, k)).sum::<f64>() / 2f64.powi(n as i32)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

fn planted_keys(s: &CampaignStats) -> usize {
    [
        BUG_MIXED_INLINE_INDEX,
        BUG_RIGHT_JOIN_COLLATE_NULL,
        BUG_DELETE_EXPR_UNIQUE,
    ]
    .iter()
    .filter(|&&c| s.has_crash_code(c))
    .count()
}

struct Paired {
    full: Vec<CampaignStats>,
    nocov: Vec<CampaignStats>,
    dirs: Vec<PathBuf>,
    budget: f64,
    overridden: bool,
    errors: Vec<String>,
}

/// All 2 x PAIRS campaigns at once, one worker each, seeds 1..=PAIRS.
fn paired_campaigns(root: &Path) -> Paired {
    let (budget, overridden) = match std::env::var("GTF_ACCEPT_BUDGET_SECS")
        .ok()
        .and_then(|v| v.parse().ok())
    {
        Some(b) => (b, true),
        None => (CAMPAIGN_SECS, false),
    };
    let mut jobs = Vec::new();
    for seed in 1..=PAIRS {
        for no_coverage in [false, true] {
            let dir = root.join(format!(
                "{}-{seed}",
                if no_coverage { "nocov" } else { "full" }
            ));
            let config = CampaignConfig {
                seed,
                no_coverage,
                budget_secs: Some(budget),
                output_dir: dir.clone(),
                ..Default::default()
            };
            jobs.push((
                seed,
                no_coverage,
                dir,
                std::thread::spawn(move || run_campaign(&config)),
            ));
        }
    }
    let mut out = Paired {
        full: Vec::new(),
        nocov: Vec::new(),
        dirs: Vec::new(),
        budget,
        overridden,
        errors: Vec::new(),
    };
    for (seed, no_coverage, dir, handle) in jobs {
        match handle.join().expect("campaign thread") {
            Ok(s) if no_coverage => out.nocov.push(s),
            Ok(s) => out.full.push(s),
            Err(e) => out
                .errors
                .push(format!("seed {seed} no_coverage={no_coverage}: {e}")),
        }
        out.dirs.push(dir);
    }
    out
}

fn budget_note(p: &Paired) -> String {
    let per_run = p.budget / (2 * PAIRS) as f64;
    let mut s = format!(
        "{} concurrent runs of {:.0}s wall (~{per_run:.0}s CPU each on one core)",
        2 * PAIRS,
        p.budget
    );
    if p.overridden {
        s += ", budget overridden by GTF_ACCEPT_BUDGET_SECS";
    }
    s
}

fn ablation(p: &Paired) -> Outcome {
    if !p.errors.is_empty() || p.full.len() != p.nocov.len() {
        return (false, format!("campaign errors: {:?}", p.errors));
    }
    let full_cov: Vec<f64> = p.full.iter().map(|s| s.last().cov_tuples as f64).collect();
    let nocov_cov: Vec<f64> = p.nocov.iter().map(|s| s.last().cov_tuples as f64).collect();
    let wins = full_cov
        .iter()
        .zip(&nocov_cov)
        .filter(|(f, n)| f > n)
        .count() as u64;
    let ties = full_cov
        .iter()
        .zip(&nocov_cov)
        .filter(|(f, n)| f == n)
        .count() as u64;
    let n = PAIRS - ties;
    let p_value = sign_test_p(wins, n);
    let (mf, mn) = (median(full_cov), median(nocov_cov));
    let full_keys: Vec<f64> = p.full.iter().map(|s| planted_keys(s) as f64).collect();
    let nocov_keys: Vec<f64> = p.nocov.iter().map(|s| planted_keys(s) as f64).collect();
    let (kf, kn) = (median(full_keys), median(nocov_keys));
    let pass = mf > mn && p_value < 0.05 && kf >= kn;
    (
        pass,
        format!(
            "median tuples full {mf:.0} vs no-coverage {mn:.0}, full wins {wins}/{n} (sign test p={p_value:.4}), \
             median planted-bug keys {kf} vs {kn}; {}",
            budget_note(p)
        ),
    )
}

fn bug_finding(p: &Paired) -> Outcome {
    if !p.errors.is_empty() {
        return (false, format!("campaign errors: {:?}", p.errors));
    }
    let complete = p.full.iter().filter(|s| planted_keys(s) == 3).count();
    let mut replayed = 0;
    let mut mismatches = Vec::new();
    for dir in &p.dirs {
        let Ok(entries) = std::fs::read_dir(dir.join("poc")) else {
            continue;
        };
        for entry in entries {
            let path = entry.unwrap().path();
            let out = Command::new(GTF)
                .arg("replay")
                .arg(&path)
                .output()
                .expect("gtf replay runs");
            if out.status.code() == Some(0) {
                replayed += 1;
            } else {
                mismatches.push(format!(
                    "{}: {}",
                    path.display(),
                    String::from_utf8_lossy(&out.stdout).trim()
                ));
            }
        }
    }
    let slowest = p
        .full
        .iter()
        .filter(|s| planted_keys(s) == 3)
        .filter_map(|s| s.crashes.iter().map(|c| c.found_at).max())
        .max()
        .unwrap_or_default();
    let pass = complete >= 8 && mismatches.is_empty() && replayed > 0;
    let mut detail = format!(
        "all 3 planted bugs in {complete}/{PAIRS} full-mode runs (need 8), last one at {:.0}s wall; \
         {replayed} PoCs replay with exit 0; {}",
        slowest.as_secs_f64(),
        budget_note(p)
    );
    if let Some(m) = mismatches.first() {
        detail += &format!("; {} replay failures, first: {m}", mismatches.len());
    }
    (pass, detail)
}

fn sequence_policy() -> Outcome {
    let toy = Toy::new();
    let g = &toy.grammar;
    let config = CampaignConfig::default();
    let policy = SequencePolicy::resolve(g, &config.sequence, &config.statements).unwrap();
    let mut layout = Vec::new();
    for &(kind, _) in policy.slots() {
        match layout.last_mut() {
            Some((k, n)) if *k == kind => *n += 1,
            _ => layout.push((kind, 1)),
        }
    }
    let counts: Vec<usize> = layout.iter().map(|x| x.1).collect();
    let mut problems = Vec::new();
    if counts != [3, 3, 2, 10, 10] || policy.len() != 28 {
        problems.push(format!("layout {layout:?}"));
    }

    let mut worker = common::toy_worker(g, &toy.classes, 21, false);
    let mut full_length = 0;
    while worker.counters().eligible_slots < 1000 {
        let gen_before = worker.counters().gen_failures;
        let report = worker.run_sequence().unwrap();
        let skipped = (worker.counters().gen_failures - gen_before) as usize;
        let crashed = report.events.last().is_some_and(|e| e.crashed);
        if !crashed && skipped == 0 {
            if report.events.len() != 28 {
                problems.push(format!("sequence of {} statements", report.events.len()));
            }
            full_length += 1;
        }
        if skipped == 0 {
            for (ev, &(kind, root)) in report.events.iter().zip(policy.slots()) {
                if kind != SlotKind::Random && ev.root != root {
                    problems.push(format!("{kind} slot ran {}", g.name(ev.root)));
                }
            }
        }
    }
    let c = worker.counters();
    let rate = c.mutated_slots as f64 / c.eligible_slots as f64;
    if (rate - 0.5).abs() > 0.05 {
        problems.push(format!("mutation rate {rate:.3}"));
    }

    // plans drawn against the worker's real queue only mutate compatible entries
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut plans = 0;
    for _ in 0..200 {
        for plan in build_sequence(&policy, worker.queue(), config.mutation_prob, &mut rng) {
            plans += 1;
            match plan.source {
                PlanSource::Mutate(i) => {
                    if !plan.eligible
                        || (plan.kind != SlotKind::Random
                            && worker.queue().get(i).root != plan.root)
                    {
                        problems.push(format!(
                            "{} slot mutates {}",
                            plan.kind,
                            g.name(worker.queue().get(i).root)
                        ));
                    }
                }
                PlanSource::Generate => {}
            }
        }
    }
    problems.dedup();
    let pass = problems.is_empty();
    let mut detail = format!(
        "layout {counts:?}, {full_length} uncut sequences of 28, mutation rate {rate:.3} over {} eligible slots, \
         {plans} plans type-checked",
        c.eligible_slots
    );
    if let Some(p) = problems.first() {
        detail += &format!("; {} problems, first: {p}", problems.len());
    }
    (pass, detail)
}

fn coverage_bookkeeping() -> Outcome {
    let mut problems = Vec::new();
    let mut v = VirginMap::new(64);
    let map = |count: u8| {
        let mut m = CoverageMap::new(64).unwrap();
        for _ in 0..count {
            m.hit(5);
        }
        m
    };
    let steps = [(1u8, true, 0b001u8), (1, false, 0b001), (3, true, 0b101)];
    for (count, want_new, want_bits) in steps {
        let new = v.has_new_bits(&map(count)).unwrap();
        let mut expected = vec![0u8; 64];
        expected[5] = want_bits;
        if new != want_new || v.as_bytes() != expected.as_slice() {
            problems.push(format!(
                "slot 5 count {count}: new {new}, bits {:#010b}",
                v.as_bytes()[5]
            ));
        }
    }
    for (count, class) in [(0u8, 0u8), (1, 1), (5, 8), (255, 128)] {
        if bucket(count) != class {
            problems.push(format!("bucket({count}) = {}", bucket(count)));
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let bytes: Vec<u8> = (0..DEFAULT_MAP_SIZE).map(|_| rng.gen()).collect();
    let path = dir.path().join("map");
    write_map_file(&path, &CoverageMap::from_bytes(bytes.clone()).unwrap()).unwrap();
    if read_map_file(&path, DEFAULT_MAP_SIZE).unwrap().as_bytes() != bytes.as_slice() {
        problems.push("raw map file round trip differs".into());
    }

    // the same statements through the in-process toy and over the protocol
    let statements = [
        "CREATE TABLE t0 ( c0 INT , c1 TEXT )",
        "INSERT INTO t0 VALUES ( 1 , 'a' ) , ( 2 , 'b' )",
        "CREATE INDEX i0 ON t0 ( c1 )",
        "SELECT c0 FROM t0 WHERE c0 > 1",
        "SELECT c9 FROM t9",
    ];
    let mut local = ToyTarget::new(DEFAULT_MAP_SIZE);
    let mut remote = ProcessTarget::new(
        &format!("{GTF} toy-target"),
        dir.path().join("proto"),
        DEFAULT_MAP_SIZE,
    )
    .unwrap();
    let mut identical = 0;
    for s in statements {
        let mut a = CoverageMap::new(DEFAULT_MAP_SIZE).unwrap();
        let mut b = CoverageMap::new(DEFAULT_MAP_SIZE).unwrap();
        let ra: StatementResult = local.run_statement(s, &mut a).unwrap();
        let rb = remote.run_statement(s, &mut b).unwrap();
        if ra == rb && a.as_bytes() == b.as_bytes() {
            identical += 1;
        } else {
            problems.push(format!("{s}: {ra:?} vs {rb:?}"));
        }
    }
    let pass = problems.is_empty();
    let mut detail = format!(
        "3 has_new_bits steps and 4 bucket lookups bit-exact, {DEFAULT_MAP_SIZE}-byte file round trip, \
         {identical}/{} protocol maps byte-identical to in-process",
        statements.len()
    );
    if let Some(p) = problems.first() {
        detail += &format!("; first problem: {p}");
    }
    (pass, detail)
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("GTF_ACCEPT_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut run = |n: u32, name: &'static str, f: &dyn Fn() -> Outcome| {
        if wanted(n) {
            let r = f();
            println!("{} {n} {name}: {}", if r.0 { "PASS" } else { "FAIL" }, r.1);
            results.push((n, name, r));
        }
    };
    run(1, "syntactic soundness", &syntactic_soundness);
    run(2, "classification oracle", &classification_oracle);
    run(3, "grammar-edge saturation", &edge_saturation);
    run(4, "epsilon-greedy behaviour", &epsilon_greedy);
    run(7, "sequence policy", &sequence_policy);
    run(8, "coverage bookkeeping", &coverage_bookkeeping);
    if wanted(5) || wanted(6) {
        let root = tempfile::tempdir().unwrap();
        let paired = paired_campaigns(root.path());
        run(5, "ablation", &|| ablation(&paired));
        run(6, "planted bugs", &|| bug_finding(&paired));
    }
    let failed = results.iter().filter(|r| !r.2 .0).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
