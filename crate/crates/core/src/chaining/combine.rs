use std::collections::BTreeMap;

use crate::domain::FiniteSet;
use crate::error::{Error, Result};

use super::{Block, PartitionTree};

/// Partition tree on the sum set `A + B` built from trees on `A` and `B`.
///
/// Level `n+1` of the output consists of the blocks `A' + B'` for `A'` at
/// level `n` of the first tree and `B'` at level `n` of the second, with
/// representative `π_n(A') + π_n(B')`; `N_n · N_n = N_{n+1}` keeps it
/// admissible. The shallower tree repeats its singleton level so both run to
/// the same depth.
///
/// Coinciding sums are merged: each point of the deduplicated sum set
/// belongs to the product block of the first pair `(i, j)` (lexicographic)
/// that produces it. When that moves a block's natural representative into
/// another block, the member closest to it in ℓ² takes its place.
pub fn combine_sum_set(
    a: &FiniteSet,
    tree_a: &PartitionTree,
    b: &FiniteSet,
    tree_b: &PartitionTree,
) -> Result<(FiniteSet, PartitionTree)> {
    if a.dim() != b.dim() {
        return Err(Error::Validation(format!(
            "summands have dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    for (set, tree) in [(a, tree_a), (b, tree_b)] {
        if tree.size != set.len() {
            return Err(Error::Validation(format!(
                "tree covers {} points, set {} has {}",
                tree.size,
                set.name(),
                set.len()
            )));
        }
        tree.validate()?;
    }

    let nb = b.len();
    let sums = a
        .points()
        .iter()
        .flat_map(|p| b.points().iter().map(move |q| p.add(q)))
        .collect();
    let (sum_set, pair_to_sum) = FiniteSet::dedup(format!("{}+{}", a.name(), b.name()), sums)?;
    let sum_index = |i: usize, j: usize| pair_to_sum[i * nb + j];
    // first producing pair of every sum point
    let mut canonical = vec![(usize::MAX, usize::MAX); sum_set.len()];
    for (pair, &s) in pair_to_sum.iter().enumerate() {
        if canonical[s].0 == usize::MAX {
            canonical[s] = (pair / nb, pair % nb);
        }
    }

    let depth = tree_a.depth().max(tree_b.depth());
    let owners_a: Vec<Vec<usize>> = (0..=depth)
        .map(|n| tree_a.assignment(n.min(tree_a.depth())))
        .collect();
    let owners_b: Vec<Vec<usize>> = (0..=depth)
        .map(|n| tree_b.assignment(n.min(tree_b.depth())))
        .collect();
    let block_a = |n: usize, k: usize| &tree_a.levels[n.min(tree_a.depth())][k];
    let block_b = |n: usize, k: usize| &tree_b.levels[n.min(tree_b.depth())][k];
    let parent_a = |n: usize, k: usize| if n <= tree_a.depth() { block_a(n, k).parent } else { k };
    let parent_b = |n: usize, k: usize| if n <= tree_b.depth() { block_b(n, k).parent } else { k };

    let root_rep = sum_index(tree_a.levels[0][0].rep, tree_b.levels[0][0].rep);
    let mut levels = vec![vec![Block {
        members: (0..sum_set.len()).collect(),
        rep: root_rep,
        parent: 0,
    }]];
    let mut prev_keys: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for n in 0..=depth {
        let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (s, &(i, j)) in canonical.iter().enumerate() {
            groups
                .entry((owners_a[n][i], owners_b[n][j]))
                .or_default()
                .push(s);
        }
        let mut level = Vec::with_capacity(groups.len());
        let mut keys = BTreeMap::new();
        for (&(ka, kb), members) in &groups {
            let natural = sum_index(block_a(n, ka).rep, block_b(n, kb).rep);
            let rep = if members.contains(&natural) {
                natural
            } else {
                let target = sum_set.point(natural);
                *members
                    .iter()
                    .min_by(|&&x, &&y| {
                        let dx = sum_set.point(x).dist2(target);
                        let dy = sum_set.point(y).dist2(target);
                        dx.total_cmp(&dy).then(x.cmp(&y))
                    })
                    .expect("groups are nonempty")
            };
            let parent = if n == 0 {
                0
            } else {
                prev_keys[&(parent_a(n, ka), parent_b(n, kb))]
            };
            keys.insert((ka, kb), level.len());
            level.push(Block {
                members: members.clone(),
                rep,
                parent,
            });
        }
        levels.push(level);
        prev_keys = keys;
    }
    let tree = PartitionTree {
        size: sum_set.len(),
        levels,
    };
    tree.validate()?;
    Ok((sum_set, tree))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaining::{build_partition_greedy, chain_bound};
    use crate::domain::{generate_set, Seed, SetKind};
    use crate::moments::MomentModel;

    #[test]
    fn zero_summand_shifts_tree_down() {
        let zero = FiniteSet::from_coords("0", vec![vec![0.0; 4]]).unwrap();
        let b = generate_set(SetKind::RandomSphere, 4, 20, Seed(1), &[]).unwrap();
        let tb = build_partition_greedy(&b);
        let (sum, tree) = combine_sum_set(&zero, &build_partition_greedy(&zero), &b, &tb).unwrap();
        assert_eq!(sum.points(), b.points());
        assert_eq!(tree.depth(), tb.depth() + 1);
        for n in 0..=tb.depth() {
            assert_eq!(tree.levels[n + 1], tb.levels[n]);
        }
    }

    #[test]
    fn two_by_two() {
        let a = FiniteSet::from_coords("a", vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let b = FiniteSet::from_coords("b", vec![vec![0.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let (sum, tree) =
            combine_sum_set(&a, &build_partition_greedy(&a), &b, &build_partition_greedy(&b)).unwrap();
        assert_eq!(sum.len(), 4);
        assert_eq!(tree.levels[1].len(), 1);
        assert_eq!(tree.levels[1][0].members.len(), 4);
        assert!(tree.levels[2].len() <= 4);
    }

    #[test]
    fn coinciding_sums_are_merged() {
        let a = generate_set(SetKind::SimplexVertices, 3, 3, Seed(0), &[]).unwrap();
        let (sum, tree) =
            combine_sum_set(&a, &build_partition_greedy(&a), &a, &build_partition_greedy(&a)).unwrap();
        // {2e_i} ∪ {e_i + e_j : i < j}
        assert_eq!(sum.len(), 6);
        tree.validate().unwrap();
        chain_bound(&sum, &tree, MomentModel::GaussianExact).unwrap();
    }

    #[test]
    fn gaussian_subadditivity() {
        for seed in 0..8 {
            let a = generate_set(SetKind::RandomSphere, 6, 3 + seed as usize, Seed(seed), &[]).unwrap();
            let b = generate_set(SetKind::EllipsoidSample, 6, 9 - seed as usize, Seed(100 + seed), &[])
                .unwrap();
            let (ta, tb) = (build_partition_greedy(&a), build_partition_greedy(&b));
            let (sum, tree) = combine_sum_set(&a, &ta, &b, &tb).unwrap();
            let m = MomentModel::GaussianExact;
            let lhs = chain_bound(&sum, &tree, m).unwrap().value;
            let rhs = chain_bound(&a, &ta, m).unwrap().value + chain_bound(&b, &tb, m).unwrap().value;
            assert!(lhs <= 3f64.sqrt() * rhs * (1.0 + 1e-12), "seed {seed}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn dimension_mismatch() {
        let a = FiniteSet::from_coords("a", vec![vec![0.0]]).unwrap();
        let b = FiniteSet::from_coords("b", vec![vec![0.0, 1.0]]).unwrap();
        let err = combine_sum_set(&a, &build_partition_greedy(&a), &b, &build_partition_greedy(&b));
        assert!(err.is_err());
    }
}
