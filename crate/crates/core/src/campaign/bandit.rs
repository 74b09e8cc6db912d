//! ε-greedy multi-armed bandit over grammar alternatives.
//!
//! Each (nonterminal, alternative) pair is an arm. Note the convention:
//! `epsilon` is the probability of *exploiting* the best-known arm; with
//! probability `1 - epsilon` a candidate is drawn uniformly.

use rand::Rng;
use thiserror::Error;

use crate::grammar::{AltId, Grammar, NtId};
use crate::tree::DerivationTree;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Arm {
    pub trials: u64,
    pub reward: u64,
}

impl Arm {
    /// Lifetime mean reward; unplayed arms read as 0.
    pub fn mean(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.reward as f64 / self.trials as f64
        }
    }

    /// Exact comparison of means without floating point.
    fn cmp_mean(&self, other: &Arm) -> std::cmp::Ordering {
        let lhs = self.reward as u128 * other.trials.max(1) as u128;
        let rhs = other.reward as u128 * self.trials.max(1) as u128;
        lhs.cmp(&rhs)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no candidate alternatives to select from")]
pub struct EmptyCandidates;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BanditTable {
    arms: Vec<Vec<Arm>>,
}

impl BanditTable {
    pub fn new(grammar: &Grammar) -> Self {
        BanditTable {
            arms: grammar
                .rules()
                .iter()
                .map(|r| vec![Arm::default(); r.alternatives.len()])
                .collect(),
        }
    }

    pub fn arm(&self, alt: AltId) -> Arm {
        self.arms[alt.nt.index()][alt.index]
    }

    pub fn arm_mut(&mut self, alt: AltId) -> &mut Arm {
        &mut self.arms[alt.nt.index()][alt.index]
    }

    pub fn arms_of(&self, nt: NtId) -> &[Arm] {
        &self.arms[nt.index()]
    }

    /// Credit every distinct arm committed in `tree` with one trial, and one
    /// reward when the statement produced new coverage. An arm used at
    /// several nodes of the same tree still counts once.
    pub fn reward_rules(&mut self, tree: &DerivationTree, got_new_coverage: bool) {
        for alt in tree.arms() {
            let arm = self.arm_mut(alt);
            arm.trials += 1;
            if got_new_coverage {
                arm.reward += 1;
            }
        }
    }

    pub fn total_reward(&self) -> u64 {
        self.arms.iter().flatten().map(|a| a.reward).sum()
    }

    pub fn total_trials(&self) -> u64 {
        self.arms.iter().flatten().map(|a| a.trials).sum()
    }
}

/// Pick one of `candidates` (alternative indices of `nt`).
///
/// With probability `epsilon` returns an argmax of mean reward, breaking
/// ties uniformly; otherwise a uniform draw over all candidates.
pub fn select_arm<R: Rng + ?Sized>(
    bandit: &BanditTable,
    nt: NtId,
    candidates: &[usize],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, EmptyCandidates> {
    if candidates.is_empty() {
        return Err(EmptyCandidates);
    }
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    let arms = &bandit.arms[nt.index()];
    if rng.gen::<f64>() < epsilon {
        let mut best = arms[candidates[0]];
        let mut ties = 1usize;
        for &c in &candidates[1..] {
            match arms[c].cmp_mean(&best) {
                std::cmp::Ordering::Greater => {
                    best = arms[c];
                    ties = 1;
                }
                std::cmp::Ordering::Equal => ties += 1,
                std::cmp::Ordering::Less => {}
            }
        }
        let mut pick = rng.gen_range(0..ties);
        for &c in candidates {
            if arms[c].cmp_mean(&best) == std::cmp::Ordering::Equal {
                if pick == 0 {
                    return Ok(c);
                }
                pick -= 1;
            }
        }
        unreachable!("tie count and scan disagree")
    } else {
        Ok(candidates[rng.gen_range(0..candidates.len())])
    }
}
