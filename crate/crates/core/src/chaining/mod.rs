//! Admissible partition trees and the chaining functional
//!
//! ```text
//! γ_X(T) = inf sup_{t∈T} Σ_{n≥1} ‖X_{π_n(t)} − X_{π_{n−1}(t)}‖_{2^n}
//! ```
//!
//! evaluated on explicit trees, together with the sum-set combiner and an
//! exhaustive oracle for tiny sets.

mod combine;
mod exhaustive;
mod greedy;

pub use combine::combine_sum_set;
pub use exhaustive::{exhaustive_gamma, EXHAUSTIVE_DEPTH, EXHAUSTIVE_MAX_SIZE};
pub use greedy::build_partition_greedy;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{FiniteSet, ProcessKind, Seed};
use crate::error::{Error, Result};
use crate::moments::MomentModel;
use crate::report::{safe_ratio, ComparisonReport, Quantity, SetRef};
use crate::suprema::sup_estimate;

/// `N_n = 2^{2^n}` for `n ≥ 1`, and 1 at level 0. Saturates at `usize::MAX`.
pub fn admissible_budget(level: usize) -> usize {
    match level {
        0 => 1,
        n if n < 6 => 1usize << (1usize << n),
        _ => usize::MAX,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    /// Point indices, ascending.
    pub members: Vec<usize>,
    /// `π_n(A)`, a member of the block.
    pub rep: usize,
    /// Index of the enclosing block one level up (0 at level 0).
    pub parent: usize,
}

/// Nested admissible partitions of the indices `0..size` of a finite set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionTree {
    pub size: usize,
    pub levels: Vec<Vec<Block>>,
}

impl PartitionTree {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// For each point, the index of its block at `level`.
    pub fn assignment(&self, level: usize) -> Vec<usize> {
        let mut owner = vec![usize::MAX; self.size];
        for (b, block) in self.levels[level].iter().enumerate() {
            for &i in &block.members {
                owner[i] = b;
            }
        }
        owner
    }

    /// `π_level(t)` for every point `t`.
    pub fn reps_at(&self, level: usize) -> Vec<usize> {
        let blocks = &self.levels[level];
        self.assignment(level).into_iter().map(|b| blocks[b].rep).collect()
    }

    /// Checks cardinality budgets, nesting, representative membership and
    /// singleton leaves.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.size == 0 || self.levels.is_empty() {
            return bad("a partition tree needs at least one point and one level".into());
        }
        if self.levels[0].len() != 1 {
            return bad("level 0 must be the single block T".into());
        }
        let mut prev_owner: Option<Vec<usize>> = None;
        for (n, level) in self.levels.iter().enumerate() {
            if level.len() > admissible_budget(n) {
                return bad(format!(
                    "level {n} has {} blocks, budget is {}",
                    level.len(),
                    admissible_budget(n)
                ));
            }
            let mut owner = vec![usize::MAX; self.size];
            for (b, block) in level.iter().enumerate() {
                if block.members.is_empty() {
                    return bad(format!("level {n} block {b} is empty"));
                }
                for &i in &block.members {
                    if i >= self.size {
                        return bad(format!("level {n} block {b} names point {i} out of range"));
                    }
                    if owner[i] != usize::MAX {
                        return bad(format!("point {i} appears twice at level {n}"));
                    }
                    owner[i] = b;
                }
                if !block.members.contains(&block.rep) {
                    return bad(format!("level {n} block {b} has a representative outside it"));
                }
                if let Some(prev) = &prev_owner {
                    if block.members.iter().any(|&i| prev[i] != block.parent) {
                        return bad(format!("level {n} block {b} is not inside its parent"));
                    }
                }
            }
            if let Some(i) = owner.iter().position(|&o| o == usize::MAX) {
                return bad(format!("point {i} is missing at level {n}"));
            }
            prev_owner = Some(owner);
        }
        if self.levels.last().unwrap().iter().any(|b| b.members.len() != 1) {
            return bad("the deepest level must consist of singletons".into());
        }
        Ok(())
    }
}

/// A chain-sum upper bound for `γ_X(F)` realized by a specific tree.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainBound {
    /// `max` of `per_point_sums`.
    pub value: f64,
    pub per_point_sums: Vec<f64>,
    pub tree: PartitionTree,
    pub model: MomentModel,
}

/// Norm order used at level `n`.
pub(crate) fn level_order(level: usize) -> Result<u32> {
    if level >= 32 {
        return Err(Error::param("tree", "depth beyond 31 levels"));
    }
    Ok(1u32 << level)
}

/// `sup_t Σ_{n≥1} ‖X_{π_n(t)} − X_{π_{n−1}(t)}‖_{2^n}` along `tree`.
pub fn chain_bound(set: &FiniteSet, tree: &PartitionTree, model: MomentModel) -> Result<ChainBound> {
    if tree.size != set.len() {
        return Err(Error::Validation(format!(
            "tree covers {} points, set has {}",
            tree.size,
            set.len()
        )));
    }
    tree.validate()?;
    model.check(set.dim())?;
    let mut sums = vec![0.0; set.len()];
    for n in 1..tree.levels.len() {
        let p = level_order(n)?;
        let parents = &tree.levels[n - 1];
        let increments: Vec<f64> = tree.levels[n]
            .par_iter()
            .map(|block| {
                let from = parents[block.parent].rep;
                if from == block.rep {
                    return Ok(0.0);
                }
                let diff = set.point(block.rep).sub(set.point(from));
                model.norm(diff.coords(), p)
            })
            .collect::<Result<_>>()?;
        for (b, block) in tree.levels[n].iter().enumerate() {
            for &i in &block.members {
                sums[i] += increments[b];
            }
        }
    }
    let value = sums.iter().copied().fold(0.0, f64::max);
    Ok(ChainBound {
        value,
        per_point_sums: sums,
        tree: tree.clone(),
        model,
    })
}

/// Compares `S_X(F)` with four times the greedy chain bound.
///
/// `S` is exact for Bernoulli sets within the enumeration limit and Monte
/// Carlo otherwise; a violation is flagged when `S > 4·bound + 3·stderr`.
pub fn verify_chain_bound(
    set: &FiniteSet,
    kind: ProcessKind,
    samples: usize,
    seed: Seed,
) -> Result<ComparisonReport> {
    let sup = sup_estimate(kind, set, samples, seed)?;
    let model = MomentModel::default_for(kind, set.dim());
    let tree = build_partition_greedy(set);
    let bound = chain_bound(set, &tree, model)?;
    let violation = sup.value > 4.0 * bound.value + 3.0 * sup.stderr;
    let mut extras = std::collections::BTreeMap::new();
    extras.insert("tree_depth".into(), tree.depth() as f64);
    extras.insert("four_times_bound".into(), 4.0 * bound.value);
    Ok(ComparisonReport {
        comparison: format!("sup_vs_chain_bound/{kind}"),
        inputs: vec![SetRef::from(set)],
        lhs: Quantity::from_estimate("S_X(F)", &sup),
        rhs: Quantity::exact(format!("chain_bound/{}", model_name(&model)), bound.value),
        ratio: safe_ratio(sup.value, bound.value),
        constant: Some(4.0),
        violation,
        extras,
    })
}

pub(crate) fn model_name(model: &MomentModel) -> &'static str {
    match model {
        MomentModel::BernoulliProxy => "bernoulli_proxy",
        MomentModel::BernoulliExact => "bernoulli_exact",
        MomentModel::GaussianExact => "gaussian_exact",
        MomentModel::MonteCarlo { .. } => "monte_carlo",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{generate_set, SetKind};

    fn two_point(t: Vec<f64>) -> FiniteSet {
        FiniteSet::from_coords("pair", vec![vec![0.0; t.len()], t]).unwrap()
    }

    #[test]
    fn budgets() {
        assert_eq!(admissible_budget(0), 1);
        assert_eq!(admissible_budget(1), 4);
        assert_eq!(admissible_budget(2), 16);
        assert_eq!(admissible_budget(3), 256);
        assert_eq!(admissible_budget(5), 1 << 32);
        assert_eq!(admissible_budget(9), usize::MAX);
    }

    #[test]
    fn chain_bound_examples() {
        let f = two_point(vec![3.0, 4.0]);
        let tree = build_partition_greedy(&f);
        assert_eq!(chain_bound(&f, &tree, MomentModel::GaussianExact).unwrap().value, 5.0);

        let single = FiniteSet::from_coords("one", vec![vec![1.0, 2.0]]).unwrap();
        let tree = build_partition_greedy(&single);
        assert_eq!(chain_bound(&single, &tree, MomentModel::GaussianExact).unwrap().value, 0.0);

        let f = two_point(vec![1.0, 1.0]);
        let tree = build_partition_greedy(&f);
        assert_eq!(chain_bound(&f, &tree, MomentModel::BernoulliProxy).unwrap().value, 2.0);
    }

    #[test]
    fn chain_bound_is_zero_only_for_singletons() {
        for n in 2..12 {
            let f = generate_set(SetKind::RandomSphere, 5, n, Seed(n as u64), &[]).unwrap();
            let tree = build_partition_greedy(&f);
            let b = chain_bound(&f, &tree, MomentModel::GaussianExact).unwrap();
            assert!(b.value > 0.0);
            assert_eq!(b.value, b.per_point_sums.iter().copied().fold(0.0, f64::max));
        }
    }

    #[test]
    fn mismatched_tree_is_rejected() {
        let f = generate_set(SetKind::RandomSphere, 3, 4, Seed(1), &[]).unwrap();
        let g = generate_set(SetKind::RandomSphere, 3, 5, Seed(1), &[]).unwrap();
        let tree = build_partition_greedy(&g);
        assert!(chain_bound(&f, &tree, MomentModel::GaussianExact).is_err());
    }

    #[test]
    fn validator_catches_broken_trees() {
        let f = generate_set(SetKind::RandomSphere, 3, 6, Seed(2), &[]).unwrap();
        let good = build_partition_greedy(&f);
        good.validate().unwrap();

        let mut rep_outside = good.clone();
        rep_outside.levels[1][0].rep = *rep_outside.levels[1][1].members.first().unwrap();
        assert!(rep_outside.validate().is_err());

        let mut not_leafy = good.clone();
        not_leafy.levels.pop();
        assert!(not_leafy.validate().is_err());

        let mut over_budget = good.clone();
        over_budget.levels[1] = (0..6)
            .map(|i| Block { members: vec![i], rep: i, parent: 0 })
            .collect();
        assert!(over_budget.validate().is_err());

        let mut unnested = good;
        let last = unnested.levels.len() - 1;
        unnested.levels[last][0].parent = usize::MAX - 1;
        assert!(unnested.validate().is_err());
    }

    #[test]
    fn chain_bound_two_point_gaussian() {
        let f = two_point(vec![1.0, -2.0, 2.0]);
        let r = verify_chain_bound(&f, ProcessKind::Gaussian, 100_000, Seed(17)).unwrap();
        // E max(0, G_t) = ‖t‖₂ / √(2π), bound = ‖t‖₂
        let truth = 3.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert_eq!(r.rhs.value, 3.0);
        assert!((r.lhs.value - truth).abs() <= 3.0 * r.lhs.stderr);
        assert!(r.ratio <= 4.0 && !r.violation);
    }

    #[test]
    fn chain_bound_singleton() {
        let zero = FiniteSet::from_coords("zero", vec![vec![0.0, 0.0]]).unwrap();
        let off = FiniteSet::from_coords("one", vec![vec![0.5, 0.5]]).unwrap();
        for kind in [ProcessKind::Bernoulli, ProcessKind::Gaussian] {
            let r = verify_chain_bound(&zero, kind, 100, Seed(0)).unwrap();
            assert_eq!((r.lhs.value, r.rhs.value, r.violation), (0.0, 0.0, false));
            // E X_t = 0 for a single point
            let r = verify_chain_bound(&off, kind, 10_000, Seed(0)).unwrap();
            assert_eq!(r.rhs.value, 0.0);
            assert!(r.lhs.value.abs() <= 3.0 * r.lhs.stderr && !r.violation);
        }
    }

    #[test]
    fn scale_equivariance() {
        let f = generate_set(SetKind::EllipsoidSample, 6, 14, Seed(4), &[]).unwrap();
        let tree = build_partition_greedy(&f);
        for model in [
            MomentModel::GaussianExact,
            MomentModel::BernoulliExact,
            MomentModel::BernoulliProxy,
        ] {
            let base = chain_bound(&f, &tree, model).unwrap().value;
            for c in [-3.0, 0.25, 7.5] {
                let scaled = chain_bound(&f.scaled(c).unwrap(), &tree, model).unwrap().value;
                assert!((scaled - c.abs() * base).abs() <= 1e-12 * scaled.max(1.0));
            }
        }
    }

    #[test]
    fn bernoulli_upper_bound_on_random_sets() {
        for seed in 0..6 {
            let f = generate_set(SetKind::RandomSphere, 10, 24, Seed(seed), &[]).unwrap();
            let s = crate::suprema::brute_force_bernoulli_sup(&f).unwrap().value;
            let tree = build_partition_greedy(&f);
            for model in [MomentModel::BernoulliExact, MomentModel::BernoulliProxy] {
                let b = chain_bound(&f, &tree, model).unwrap().value;
                assert!(s <= 4.0 * b, "seed {seed}: S={s} bound={b}");
            }
        }
    }
}
