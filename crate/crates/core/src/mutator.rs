//! Subtree regeneration: pick one internal node uniformly (root included)
//! and regrow it from its nonterminal at the same depth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::EdgeCoverage;
use crate::campaign::bandit::BanditTable;
use crate::generator::{GenError, GenPolicy, Generator};
use crate::tree::DerivationTree;

/// Mutate a copy of `tree`; the input is left untouched.
pub fn mutate(
    tree: &DerivationTree,
    generator: &Generator<'_>,
    policy: &GenPolicy,
    bandit: &BanditTable,
    edge_cov: &mut EdgeCoverage,
    rng_seed: u64,
) -> Result<DerivationTree, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let point = rng.gen_range(0..tree.node_count());
    mutate_at_with(
        tree, point, None, generator, policy, bandit, edge_cov, &mut rng,
    )
}

/// Mutate the `point`-th internal node (preorder). With `forced` set, that
/// node commits the given alternative and only its descendants are drawn.
#[allow(clippy::too_many_arguments)]
pub fn mutate_at(
    tree: &DerivationTree,
    point: usize,
    forced: Option<usize>,
    generator: &Generator<'_>,
    policy: &GenPolicy,
    bandit: &BanditTable,
    edge_cov: &mut EdgeCoverage,
    rng_seed: u64,
) -> Result<DerivationTree, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    mutate_at_with(
        tree, point, forced, generator, policy, bandit, edge_cov, &mut rng,
    )
}

#[allow(clippy::too_many_arguments)]
fn mutate_at_with(
    tree: &DerivationTree,
    point: usize,
    forced: Option<usize>,
    generator: &Generator<'_>,
    policy: &GenPolicy,
    bandit: &BanditTable,
    edge_cov: &mut EdgeCoverage,
    rng: &mut ChaCha8Rng,
) -> Result<DerivationTree, GenError> {
    let mut out = tree.clone();
    let node = out
        .preorder_mut(point)
        .expect("mutation point within node count");
    let fresh = generator.expand(node.nonterminal, node.depth, forced, policy, bandit, rng)?;
    edge_cov.record_tree(&fresh);
    *node = fresh;
    Ok(out)
}
