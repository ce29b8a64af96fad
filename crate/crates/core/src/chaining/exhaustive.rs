use std::collections::HashMap;

use crate::domain::FiniteSet;
use crate::error::{Error, Result};
use crate::moments::MomentModel;

use super::{admissible_budget, chain_bound, level_order, Block, ChainBound, PartitionTree};

/// Largest set handled by [`exhaustive_gamma`].
pub const EXHAUSTIVE_MAX_SIZE: usize = 5;

/// Deepest level explored by [`exhaustive_gamma`]; every block is a
/// singleton by then.
pub const EXHAUSTIVE_DEPTH: usize = 3;

/// Exact minimum of the chain bound over every nested admissible partition
/// sequence of depth at most [`EXHAUSTIVE_DEPTH`] and every choice of
/// representatives.
///
/// With `|F| ≤ 5` only the level-1 budget (`N_1 = 4`) can bind; from level 2
/// on `N_n ≥ 16` admits any partition, so the search is a memoized recursion
/// over (block, level, representative).
pub fn exhaustive_gamma(set: &FiniteSet, model: MomentModel) -> Result<ChainBound> {
    let n = set.len();
    if n > EXHAUSTIVE_MAX_SIZE {
        return Err(Error::Capacity {
            what: "set",
            size: n,
            limit: EXHAUSTIVE_MAX_SIZE,
            advice: "use the greedy chain bound",
        });
    }
    model.check(set.dim())?;
    debug_assert!(admissible_budget(2) >= EXHAUSTIVE_MAX_SIZE);

    // norms[level][from][to] = ‖X_to − X_from‖_{2^level}
    let mut norms = vec![vec![vec![0.0; n]; n]; EXHAUSTIVE_DEPTH + 1];
    for (level, table) in norms.iter_mut().enumerate().skip(1) {
        let p = level_order(level)?;
        for from in 0..n {
            for to in 0..n {
                if from != to {
                    let diff = set.point(to).sub(set.point(from));
                    table[from][to] = model.norm(diff.coords(), p)?;
                }
            }
        }
    }

    let mut search = Search {
        norms,
        memo: HashMap::new(),
    };
    let full: u32 = (1u32 << n) - 1;
    let mut best: Option<(f64, usize)> = None;
    for root in 0..n {
        let cost = search.cost(full, 0, root);
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, root));
        }
    }
    let (_, root) = best.expect("nonempty set");
    let tree = search.rebuild(n, root);
    chain_bound(set, &tree, model)
}

#[derive(Clone)]
struct Choice {
    cost: f64,
    /// child blocks at the next level with their representatives
    children: Vec<(u32, usize)>,
}

struct Search {
    norms: Vec<Vec<Vec<f64>>>,
    memo: HashMap<(u32, usize, usize), Choice>,
}

impl Search {
    /// Best achievable worst-case chain sum below block `mask` sitting at
    /// `level` with representative `rep`.
    fn cost(&mut self, mask: u32, level: usize, rep: usize) -> f64 {
        self.choose(mask, level, rep).cost
    }

    fn choose(&mut self, mask: u32, level: usize, rep: usize) -> Choice {
        if mask.count_ones() == 1 {
            return Choice {
                cost: 0.0,
                children: Vec::new(),
            };
        }
        if level == EXHAUSTIVE_DEPTH {
            return Choice {
                cost: f64::INFINITY,
                children: Vec::new(),
            };
        }
        if let Some(c) = self.memo.get(&(mask, level, rep)) {
            return c.clone();
        }
        let next = level + 1;
        let mut best = Choice {
            cost: f64::INFINITY,
            children: Vec::new(),
        };
        for partition in set_partitions(mask) {
            // only the root's children compete for a binding budget
            if level == 0 && partition.len() > admissible_budget(next) {
                continue;
            }
            let mut worst = 0.0f64;
            let mut children = Vec::with_capacity(partition.len());
            for &block in &partition {
                let mut block_best = (f64::INFINITY, usize::MAX);
                for r in members(block) {
                    let c = self.norms[next][rep][r] + self.cost(block, next, r);
                    if c < block_best.0 {
                        block_best = (c, r);
                    }
                }
                worst = worst.max(block_best.0);
                children.push((block, block_best.1));
                if worst >= best.cost {
                    break;
                }
            }
            if worst < best.cost {
                best = Choice {
                    cost: worst,
                    children,
                };
            }
        }
        self.memo.insert((mask, level, rep), best.clone());
        best
    }

    fn rebuild(&mut self, size: usize, root: usize) -> PartitionTree {
        let full: u32 = (1u32 << size) - 1;
        let mut levels = vec![vec![Block {
            members: members(full).collect(),
            rep: root,
            parent: 0,
        }]];
        let mut frontier = vec![(full, root)];
        let mut level = 0;
        while frontier.iter().any(|(m, _)| m.count_ones() > 1) {
            let mut next_frontier = Vec::new();
            let mut blocks = Vec::new();
            for (parent, &(mask, rep)) in frontier.iter().enumerate() {
                let children = if mask.count_ones() == 1 {
                    vec![(mask, rep)]
                } else {
                    self.choose(mask, level, rep).children
                };
                for (child, child_rep) in children {
                    blocks.push(Block {
                        members: members(child).collect(),
                        rep: child_rep,
                        parent,
                    });
                    next_frontier.push((child, child_rep));
                }
            }
            levels.push(blocks);
            frontier = next_frontier;
            level += 1;
        }
        PartitionTree { size, levels }
    }
}

fn members(mask: u32) -> impl Iterator<Item = usize> {
    (0..32).filter(move |i| mask >> i & 1 == 1)
}

/// All set partitions of the bits of `mask`, each block as a bit mask.
fn set_partitions(mask: u32) -> Vec<Vec<u32>> {
    if mask == 0 {
        return vec![Vec::new()];
    }
    let low = mask & mask.wrapping_neg();
    let rest = mask ^ low;
    let mut out = Vec::new();
    // every subset of `rest` joins `low` in the first block
    let mut sub = rest;
    loop {
        let block = low | sub;
        for mut tail in set_partitions(rest ^ sub) {
            tail.insert(0, block);
            out.push(tail);
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & rest;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaining::build_partition_greedy;
    use crate::domain::{generate_set, Seed, SetKind};

    #[test]
    fn bell_numbers() {
        let counts: Vec<usize> = (0..=5).map(|n| set_partitions((1u32 << n) - 1).len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 5, 15, 52]);
    }

    #[test]
    fn two_points_give_the_distance() {
        let f = FiniteSet::from_coords("p", vec![vec![0.0, 0.0], vec![3.0, -4.0]]).unwrap();
        let g = exhaustive_gamma(&f, MomentModel::GaussianExact).unwrap();
        assert_eq!(g.value, 5.0);
    }

    #[test]
    fn singleton_is_zero() {
        let f = FiniteSet::from_coords("p", vec![vec![1.0, 2.0]]).unwrap();
        assert_eq!(exhaustive_gamma(&f, MomentModel::GaussianExact).unwrap().value, 0.0);
    }

    #[test]
    fn too_large() {
        let f = generate_set(SetKind::RandomSphere, 3, 6, Seed(0), &[]).unwrap();
        assert!(matches!(
            exhaustive_gamma(&f, MomentModel::GaussianExact),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn dominated_by_greedy_and_tree_is_valid() {
        for seed in 0..10u64 {
            for n in 1..=5 {
                let f = generate_set(SetKind::EllipsoidSample, 4, n, Seed(seed), &[]).unwrap();
                let greedy = build_partition_greedy(&f);
                for model in [
                    MomentModel::GaussianExact,
                    MomentModel::BernoulliExact,
                    MomentModel::BernoulliProxy,
                ] {
                    let ex = exhaustive_gamma(&f, model).unwrap();
                    ex.tree.validate().unwrap();
                    let gr = chain_bound(&f, &greedy, model).unwrap().value;
                    assert!(ex.value <= gr * (1.0 + 1e-12), "seed {seed} n {n}");
                }
            }
        }
    }

    /// Independent brute force over explicit trees of depth ≤ 2 for three
    /// points: every level-1 partition, every representative assignment.
    #[test]
    fn three_points_match_explicit_enumeration() {
        let f = generate_set(SetKind::RandomSphere, 3, 3, Seed(77), &[]).unwrap();
        let model = MomentModel::GaussianExact;
        let parts = set_partitions(0b111);
        let mut best = f64::INFINITY;
        for root in 0..3 {
            for level1 in &parts {
                let reps1: Vec<Vec<usize>> = level1.iter().map(|&m| members(m).collect()).collect();
                let mut choice = vec![0usize; level1.len()];
                loop {
                    let mut l1 = Vec::new();
                    for (k, &m) in level1.iter().enumerate() {
                        l1.push(Block { members: members(m).collect(), rep: reps1[k][choice[k]], parent: 0 });
                    }
                    let mut levels = vec![
                        vec![Block { members: vec![0, 1, 2], rep: root, parent: 0 }],
                        l1.clone(),
                    ];
                    if l1.iter().any(|b| b.members.len() > 1) {
                        let l2 = l1
                            .iter()
                            .enumerate()
                            .flat_map(|(pi, b)| {
                                b.members.iter().map(move |&i| Block { members: vec![i], rep: i, parent: pi })
                            })
                            .collect();
                        levels.push(l2);
                    }
                    let tree = PartitionTree { size: 3, levels };
                    best = best.min(chain_bound(&f, &tree, model).unwrap().value);
                    // next representative assignment
                    let mut k = 0;
                    while k < choice.len() {
                        choice[k] += 1;
                        if choice[k] < reps1[k].len() {
                            break;
                        }
                        choice[k] = 0;
                        k += 1;
                    }
                    if k == choice.len() {
                        break;
                    }
                }
            }
        }
        let ex = exhaustive_gamma(&f, model).unwrap().value;
        assert!(ex <= best * (1.0 + 1e-12));
        assert!((ex - best).abs() <= 1e-12 * best, "{ex} vs {best}");
    }
}
