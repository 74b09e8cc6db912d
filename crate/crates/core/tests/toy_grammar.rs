use gtf_core::coverage::toy::{sql, toy_grammar};
use gtf_core::{
    classify, enumerate_edges, reset_registry, BanditTable, EdgeCoverage, GenPolicy, Generator,
    Instantiator,
};

#[test]
fn generated_statements_parse_in_toy_target() {
    let g = toy_grammar();
    let c = classify(&g);
    let gen = Generator::new(&g, &c);
    let bandit = BanditTable::new(&g);
    let mut cov = EdgeCoverage::new(&g);
    let inst = Instantiator::default();
    let mut words = 0usize;
    let mut max_words = 0usize;
    for seed in 0..3000u64 {
        let policy = GenPolicy {
            rng_seed: seed,
            ..GenPolicy::default()
        };
        let tree = gen
            .generate_with_retry(g.start(), &policy, &bandit, &mut cov)
            .unwrap();
        let t = gtf_core::render(&tree, &g).unwrap();
        let s = inst.instantiate(&t, &g, &mut reset_registry(), seed);
        let n = s.split(' ').count();
        words += n;
        max_words = max_words.max(n);
        sql::parse(&s).unwrap_or_else(|e| panic!("{e}: {s}"));
    }
    eprintln!("mean words {} max {}", words / 3000, max_words);
    eprintln!(
        "edges {}/{}",
        cov.covered_count(),
        enumerate_edges(&g).len()
    );
}
