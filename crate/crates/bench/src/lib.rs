//! Fixtures shared by the benchmarks.

use gtf_core::coverage::toy::toy_grammar;
use gtf_core::{
    classify, BanditTable, EdgeCoverage, GenPolicy, Generator, Grammar, RuleClassification,
};

pub struct Fixture {
    pub grammar: Grammar,
    pub classes: RuleClassification,
}

impl Fixture {
    pub fn toy() -> Self {
        let grammar = toy_grammar();
        let classes = classify(&grammar);
        Fixture { grammar, classes }
    }

    pub fn generator(&self) -> Generator<'_> {
        Generator::new(&self.grammar, &self.classes)
    }

    /// `n` statements from consecutive seeds.
    pub fn statements(&self, n: u64) -> Vec<String> {
        let g = &self.grammar;
        let generator = self.generator();
        let bandit = BanditTable::new(g);
        let mut edges = EdgeCoverage::new(g);
        let inst = gtf_core::Instantiator::default();
        (0..n)
            .map(|seed| {
                let policy = GenPolicy {
                    rng_seed: seed,
                    ..GenPolicy::default()
                };
                let tree = generator
                    .generate_with_retry(g.start(), &policy, &bandit, &mut edges)
                    .unwrap();
                let template = gtf_core::render(&tree, g).unwrap();
                inst.instantiate(&template, g, &mut gtf_core::reset_registry(), seed)
            })
            .collect()
    }
}
