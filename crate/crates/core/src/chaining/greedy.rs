use crate::domain::FiniteSet;

use super::{admissible_budget, Block, PartitionTree};

/// Nested farthest-point partitions.
///
/// Level `n` gets `N_n` blocks, shared among the parent blocks in proportion
/// to their sizes (at least one child each). Inside a parent, centers are
/// picked by farthest-point traversal starting at the parent's
/// representative, and every member joins its nearest center. The tree stops
/// at the first level whose budget covers `|F|`, where all blocks are
/// singletons.
pub fn build_partition_greedy(set: &FiniteSet) -> PartitionTree {
    let size = set.len();
    let root = Block {
        members: (0..size).collect(),
        rep: 0,
        parent: 0,
    };
    let mut levels = vec![vec![root]];
    let mut n = 0;
    while levels[n].iter().any(|b| b.members.len() > 1) {
        n += 1;
        let budget = admissible_budget(n);
        let parents = &levels[n - 1];
        let counts = if budget >= size {
            parents.iter().map(|b| b.members.len()).collect()
        } else {
            allocate(parents, budget, size)
        };
        let mut level = Vec::new();
        for (pi, (parent, &k)) in parents.iter().zip(&counts).enumerate() {
            for (rep, members) in farthest_point_split(set, parent, k) {
                level.push(Block {
                    members,
                    rep,
                    parent: pi,
                });
            }
        }
        levels.push(level);
    }
    PartitionTree { size, levels }
}

/// Number of children per parent block, summing to at most `budget`.
fn allocate(parents: &[Block], budget: usize, total: usize) -> Vec<usize> {
    let sizes: Vec<usize> = parents.iter().map(|b| b.members.len()).collect();
    let mut counts = vec![1usize; sizes.len()];
    let remaining = budget.saturating_sub(sizes.len());
    let mut used = 0;
    for (c, &s) in counts.iter_mut().zip(&sizes) {
        let share = (remaining as u128 * s as u128 / total as u128) as usize;
        let extra = share.min(s - 1);
        *c += extra;
        used += extra;
    }
    let mut left = remaining - used;
    while left > 0 {
        // the parent with the largest unmet size, lowest index on ties
        let Some((j, _)) = counts
            .iter()
            .zip(&sizes)
            .enumerate()
            .filter(|(_, (c, s))| c < s)
            .max_by(|(ia, (ca, sa)), (ib, (cb, sb))| {
                (*sa - *ca).cmp(&(*sb - *cb)).then(ib.cmp(ia))
            })
        else {
            break;
        };
        counts[j] += 1;
        left -= 1;
    }
    counts
}

/// Splits `parent` into `k` groups around farthest-point centers.
/// Returns `(center, members)` pairs in center-selection order.
fn farthest_point_split(set: &FiniteSet, parent: &Block, k: usize) -> Vec<(usize, Vec<usize>)> {
    let members = &parent.members;
    if k >= members.len() {
        return members.iter().map(|&i| (i, vec![i])).collect();
    }
    let mut centers = vec![parent.rep];
    let mut nearest = vec![0usize; members.len()];
    let mut dist: Vec<f64> = members
        .iter()
        .map(|&i| set.point(i).dist2(set.point(parent.rep)))
        .collect();
    while centers.len() < k {
        // members are ascending, so the first maximum is the lowest index
        let (far, _) = dist
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (j, &d)| if d > best.1 { (j, d) } else { best });
        let c = members[far];
        let slot = centers.len();
        centers.push(c);
        for (j, &i) in members.iter().enumerate() {
            let d = set.point(i).dist2(set.point(c));
            if d < dist[j] {
                dist[j] = d;
                nearest[j] = slot;
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = centers.iter().map(|&c| (c, Vec::new())).collect();
    for (j, &i) in members.iter().enumerate() {
        groups[nearest[j]].1.push(i);
    }
    groups
}
