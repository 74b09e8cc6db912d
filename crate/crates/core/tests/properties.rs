mod common;

use std::collections::BTreeSet;

use gtf_core::analysis::RuleClassification;
use gtf_core::coverage::toy::toy_grammar;
use gtf_core::grammar::{AltId, Symbol};
use gtf_core::recognizer::Recognizer;
use gtf_core::{
    classify, enumerate_edges, load_grammar, mutate, render, reset_registry, BanditTable,
    CoverageMap, DerivationTree, EdgeCoverage, GDepth, GenPolicy, Generator, Grammar, IngestConfig,
    Instantiator, RuleLabel, VirginMap,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{check_against_oracle, random_grammar_text, OracleTally};

fn load(text: &str) -> Grammar {
    load_grammar(text, "", &IngestConfig::default()).unwrap_or_else(|e| panic!("{e}\n{text}"))
}

fn random_grammar(seed: u64) -> (String, Grammar) {
    let text = random_grammar_text(&mut ChaCha8Rng::seed_from_u64(seed));
    let g = load(&text);
    (text, g)
}

/// Same rules, alternatives of every rule shuffled.
fn shuffle_alternatives(text: &str, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    text.lines()
        .map(|line| {
            let (lhs, rest) = line.split_once(": ").unwrap();
            let mut bodies: Vec<&str> = rest.strip_suffix(" ;").unwrap().split(" | ").collect();
            bodies.shuffle(&mut rng);
            format!("{lhs}: {} ;\n", bodies.join(" | "))
        })
        .collect()
}

fn named_edges(g: &Grammar) -> BTreeSet<(String, String)> {
    enumerate_edges(g)
        .iter()
        .map(|e| (g.name(e.parent).to_string(), g.name(e.child).to_string()))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn grammar_text_round_trips(seed in any::<u64>()) {
        let (_, g) = random_grammar(seed);
        let again = load(&g.to_yacc_text());
        prop_assert_eq!(again.to_yacc_text(), g.to_yacc_text());
        prop_assert_eq!(again, g);
    }

    #[test]
    fn classification_matches_brute_force(seed in any::<u64>()) {
        let (text, g) = random_grammar(seed);
        let c = classify(&g);
        let mut tally = OracleTally::default();
        if let Err(e) = check_against_oracle(&g, &c, &mut tally) {
            return Err(TestCaseError::fail(format!("{e}\n{text}")));
        }
    }

    #[test]
    fn terminal_only_alternatives_are_simple(seed in any::<u64>()) {
        let (_, g) = random_grammar(seed);
        let c = classify(&g);
        for nt in g.nonterminals() {
            for (i, alt) in g.rule(nt).alternatives.iter().enumerate() {
                if alt.nonterminals().next().is_none() {
                    let a = c.get(AltId { nt, index: i });
                    prop_assert_eq!((a.gdepth, a.label), (GDepth::Finite(1), RuleLabel::Simple));
                }
            }
        }
    }

    #[test]
    fn cycle_alternatives_are_complex(seed in any::<u64>()) {
        let (_, g) = random_grammar(seed);
        let c = classify(&g);
        check_cycles_complex(&g, &c)?;
    }

    #[test]
    fn edges_ignore_alternative_order(seed in any::<u64>(), shuffle in any::<u64>()) {
        let (text, g) = random_grammar(seed);
        let h = load(&shuffle_alternatives(&text, shuffle));
        prop_assert_eq!(named_edges(&g), named_edges(&h));
    }

    #[test]
    fn has_new_bits_is_monotone(maps in prop::collection::vec(prop::collection::vec((0usize..64, 1u8..=255), 0..12), 1..20)) {
        let mut virgin = VirginMap::new(64);
        let mut last = 0;
        for hits in maps {
            let mut m = CoverageMap::new(64).unwrap();
            for (slot, n) in hits {
                for _ in 0..n {
                    m.hit(slot);
                }
            }
            let before = virgin.clone();
            let new = virgin.has_new_bits(&m).unwrap();
            prop_assert!(virgin.tuple_count() >= last);
            prop_assert_eq!(new, virgin.tuple_count() > last);
            // the seen set only ever gains bits
            for (a, b) in before.as_bytes().iter().zip(virgin.as_bytes()) {
                prop_assert_eq!(a & !b, 0);
            }
            prop_assert!(!virgin.has_new_bits(&m).unwrap());
            last = virgin.tuple_count();
        }
    }
}

fn check_cycles_complex(g: &Grammar, c: &RuleClassification) -> Result<(), TestCaseError> {
    for cycle in c.cycles(g) {
        for (k, &from) in cycle.iter().enumerate() {
            let to = cycle[(k + 1) % cycle.len()];
            for (i, alt) in g.rule(from).alternatives.iter().enumerate() {
                if alt.symbols.contains(&Symbol::NonTerminal(to)) {
                    prop_assert_eq!(
                        c.get(AltId { nt: from, index: i }).label,
                        RuleLabel::Complex
                    );
                }
            }
        }
    }
    Ok(())
}

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

/// Preorder index of the single regrown subtree, if `after` differs from
/// `before` in exactly one subtree rooted at the same nonterminal and depth.
fn replaced_subtree(before: &DerivationTree, after: &DerivationTree) -> Option<usize> {
    let b = before.preorder();
    let a = after.preorder();
    for k in 0..b.len().min(a.len()) {
        if b[k].nonterminal != a[k].nonterminal || b[k].depth != a[k].depth {
            return None;
        }
        let mut patched = before.clone();
        *patched.preorder_mut(k).unwrap() = a[k].clone();
        if &patched == after {
            return Some(k);
        }
    }
    None
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn generation_is_deterministic(seed in any::<u64>()) {
        let toy = Toy::new();
        let g = &toy.grammar;
        let generator = Generator::new(g, &toy.classes);
        let bandit = BanditTable::new(g);
        let policy = GenPolicy { rng_seed: seed, ..GenPolicy::default() };
        let mut e1 = EdgeCoverage::new(g);
        let mut e2 = EdgeCoverage::new(g);
        let t1 = generator.generate_with_retry(g.start(), &policy, &bandit, &mut e1).unwrap();
        let t2 = generator.generate_with_retry(g.start(), &policy, &bandit, &mut e2).unwrap();
        prop_assert_eq!(&t1, &t2);
        prop_assert!(t1.check(g).is_ok());
        prop_assert!(t1.max_depth() < policy.hard_depth_cap);
        let s1 = Instantiator::default().instantiate(&render(&t1, g).unwrap(), g, &mut reset_registry(), seed);
        let s2 = Instantiator::default().instantiate(&render(&t2, g).unwrap(), g, &mut reset_registry(), seed);
        prop_assert_eq!(s1, s2);
    }

    #[test]
    fn mutation_regrows_one_subtree(seed in any::<u64>(), mseed in any::<u64>()) {
        let toy = Toy::new();
        let g = &toy.grammar;
        let generator = Generator::new(g, &toy.classes);
        let bandit = BanditTable::new(g);
        let policy = GenPolicy { rng_seed: seed, ..GenPolicy::default() };
        let mut edges = EdgeCoverage::new(g);
        let base = generator.generate_with_retry(g.start(), &policy, &bandit, &mut edges).unwrap();
        let copy = base.clone();
        let Ok(out) = mutate(&base, &generator, &policy.with_seed(mseed), &bandit, &mut edges, mseed) else {
            return Ok(());
        };
        prop_assert_eq!(&base, &copy);
        prop_assert!(out.check(g).is_ok());
        prop_assert!(replaced_subtree(&base, &out).is_some());
        let text = Instantiator::default().instantiate(&render(&out, g).unwrap(), g, &mut reset_registry(), mseed);
        prop_assert!(Recognizer::new(g).recognizes(g.start(), &text), "{}", text);
    }
}

#[test]
fn mutation_point_is_uniform() {
    // A five-node chain where every node has twenty alternatives, so the
    // first changed node reveals the mutation point almost always.
    let mut text = String::new();
    for i in 0..5 {
        let next = if i < 4 {
            format!(" n{}", i + 1)
        } else {
            String::new()
        };
        let bodies: Vec<String> = (0..20).map(|j| format!("'x{j}'{next}")).collect();
        text += &format!("n{i}: {} ;\n", bodies.join(" | "));
    }
    let g = load(&text);
    let c = classify(&g);
    let generator = Generator::new(&g, &c);
    let bandit = BanditTable::new(&g);
    let policy = GenPolicy {
        epsilon: 0.0,
        ..GenPolicy::default()
    };
    let mut edges = EdgeCoverage::new(&g);
    let base = generator
        .generate(g.start(), &policy, &bandit, &mut edges)
        .unwrap();
    let mut counts = [0usize; 5];
    let draws = 5000;
    for s in 0..draws as u64 {
        let out = mutate(
            &base,
            &generator,
            &policy.with_seed(s),
            &bandit,
            &mut edges,
            s,
        )
        .unwrap();
        let first = base
            .preorder()
            .iter()
            .zip(out.preorder())
            .position(|(a, b)| a.alternative != b.alternative);
        if let Some(k) = first {
            counts[k] += 1;
        }
    }
    for (k, &n) in counts.iter().enumerate() {
        let f = n as f64 / draws as f64;
        assert!((f - 0.2).abs() < 0.025, "node {k}: {f} {counts:?}");
    }
}

#[test]
fn reward_accounting_matches_event_log() {
    let toy = Toy::new();
    let mut worker = common::toy_worker(&toy.grammar, &toy.classes, 11, false);
    let (mut rewarded, mut trials) = (0u64, 0u64);
    for _ in 0..300 {
        let report = worker.run_sequence().unwrap();
        for ev in report.events {
            trials += ev.arms as u64;
            if ev.new_coverage {
                rewarded += ev.arms as u64;
            }
        }
    }
    assert!(rewarded > 0);
    assert_eq!(worker.bandit().total_reward(), rewarded);
    assert_eq!(worker.bandit().total_trials(), trials);
}

#[test]
fn no_coverage_mode_never_learns() {
    let toy = Toy::new();
    let mut worker = common::toy_worker(&toy.grammar, &toy.classes, 11, true);
    for _ in 0..100 {
        worker.run_sequence().unwrap();
    }
    assert_eq!(worker.bandit().total_trials(), 0);
    assert!(worker.queue().is_empty());
    assert_eq!(worker.counters().eligible_slots, 0);
}

#[test]
fn queue_entries_reparse() {
    let toy = Toy::new();
    let g = &toy.grammar;
    let recognizer = Recognizer::new(g);
    let mut worker = common::toy_worker(g, &toy.classes, 5, false);
    for _ in 0..300 {
        worker.run_sequence().unwrap();
    }
    assert!(worker.queue().len() > 50, "queue {}", worker.queue().len());
    let inst = Instantiator::default();
    for (i, entry) in worker.queue().iter().enumerate() {
        assert_eq!(entry.tree.nonterminal, entry.root);
        assert_eq!(entry.tree.depth, 0);
        let text = inst.instantiate(
            &render(&entry.tree, g).unwrap(),
            g,
            &mut reset_registry(),
            i as u64,
        );
        assert!(
            recognizer.recognizes(entry.root, &text),
            "{}: {text}",
            g.name(entry.root)
        );
    }
}
