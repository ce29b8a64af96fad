//! Bernoulli decompositions `T ⊂ T₁ + T₂` of threshold-split form.
//!
//! Each point is split as `t = t·1_{J¹(t)} + t·1_{J²(t)}` where
//! `J²(t) = {i : 0 < |t_i| ≤ r}` holds the small coordinates. The large part
//! is controlled in ℓ¹, the small part through the Gaussian chaining bound of
//! `{0} ∪ {t·1_{J²(t)}}`. The threshold is chosen by sweeping every distinct
//! magnitude and minimizing `sup ‖t·1_{J¹}‖₁ + γ₂-bound`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::chaining::{build_partition_greedy, chain_bound};
use crate::domain::{FiniteSet, Point, ProcessKind, Seed};
use crate::error::{Error, Result};
use crate::moments::MomentModel;
use crate::report::{safe_ratio, ComparisonReport, Quantity, SetRef};
use crate::suprema::{sup_estimate, SupEstimate};

/// `K` used by [`choose_p`] when the caller has no better value.
pub const DEFAULT_K: f64 = 1.0;

/// Splits `t` into `(head, tail)` with `tail` holding the coordinates
/// `0 < |t_i| ≤ r`.
pub fn threshold_split(t: &Point, r: f64) -> (Point, Point) {
    let mut head = t.coords().to_vec();
    let mut tail = vec![0.0; head.len()];
    for (h, s) in head.iter_mut().zip(tail.iter_mut()) {
        if *h != 0.0 && h.abs() <= r {
            *s = *h;
            *h = 0.0;
        }
    }
    (
        Point::new(head).expect("split keeps coordinates finite"),
        Point::new(tail).expect("split keeps coordinates finite"),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PChoice {
    Finite(u64),
    /// The tail is empty while `K·S_B(T) > 0`.
    Infinite,
}

/// Smallest integer `p ≥ 1` with `√p · tail_norm ≥ K · s_b`.
pub fn choose_p(tail_norm: f64, k: f64, s_b: f64) -> Result<PChoice> {
    if !(k > 0.0) {
        return Err(Error::param("K", "must be positive"));
    }
    if !(s_b >= 0.0) || !(tail_norm >= 0.0) {
        return Err(Error::param("s_b", "norms and suprema must be nonnegative"));
    }
    let target = k * s_b;
    if target <= 0.0 {
        return Ok(PChoice::Finite(1));
    }
    if tail_norm == 0.0 {
        return Ok(PChoice::Infinite);
    }
    let ratio = target / tail_norm;
    let guess = (ratio * ratio).ceil();
    if guess >= u64::MAX as f64 {
        return Ok(PChoice::Finite(u64::MAX));
    }
    let mut p = (guess as u64).max(1);
    while (p as f64).sqrt() * tail_norm < target {
        p += 1;
    }
    while p > 1 && ((p - 1) as f64).sqrt() * tail_norm >= target {
        p -= 1;
    }
    Ok(PChoice::Finite(p))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SplitRule {
    Global { threshold: f64 },
    PerPoint { thresholds: Vec<f64> },
}

impl SplitRule {
    pub fn threshold_for(&self, k: usize) -> f64 {
        match self {
            SplitRule::Global { threshold } => *threshold,
            SplitRule::PerPoint { thresholds } => thresholds[k],
        }
    }
}

/// Index lists `J¹(t)` (head) and `J²(t)` (tail) of one point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PointSplit {
    pub head: Vec<usize>,
    pub tail: Vec<usize>,
}

/// Objective at one swept global threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    pub threshold: f64,
    pub ell1_sup: f64,
    pub gamma2_bound: f64,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionResult {
    pub set: SetRef,
    pub split: SplitRule,
    pub splits: Vec<PointSplit>,
    /// `sup_t ‖t·1_{J¹(t)}‖₁`
    pub ell1_sup: f64,
    /// Greedy Gaussian chain bound of `{0} ∪ {t·1_{J²(t)}}`.
    pub gamma2_bound: f64,
    pub objective: f64,
    pub s_b_reference: SupEstimate,
    /// `objective / S(T)`, 0 when both vanish.
    pub k_emp: f64,
    pub disjoint_supports: bool,
    pub grid: Vec<GridPoint>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SweepOptions {
    /// Refine the best global threshold point by point.
    pub per_point: bool,
}

/// True when no two points share a nonzero coordinate.
pub fn pairwise_disjoint_supports(points: &[Point]) -> bool {
    let Some(first) = points.first() else {
        return true;
    };
    let mut owner = vec![usize::MAX; first.dim()];
    for (k, p) in points.iter().enumerate() {
        for i in p.support() {
            if owner[i] != usize::MAX {
                return false;
            }
            owner[i] = k;
        }
    }
    true
}

struct Evaluation {
    ell1_sup: f64,
    gamma2_bound: f64,
}

impl Evaluation {
    fn objective(&self) -> f64 {
        self.ell1_sup + self.gamma2_bound
    }
}

fn evaluate(set: &FiniteSet, rule: &SplitRule) -> Result<Evaluation> {
    let mut ell1_sup = 0.0f64;
    let mut tails = Vec::with_capacity(set.len() + 1);
    tails.push(Point::zeros(set.dim()));
    for (k, t) in set.points().iter().enumerate() {
        let (head, tail) = threshold_split(t, rule.threshold_for(k));
        ell1_sup = ell1_sup.max(head.norm1());
        tails.push(tail);
    }
    let (tail_set, _) = FiniteSet::dedup("tails", tails)?;
    let tree = build_partition_greedy(&tail_set);
    let gamma2_bound = chain_bound(&tail_set, &tree, MomentModel::GaussianExact)?.value;
    Ok(Evaluation {
        ell1_sup,
        gamma2_bound,
    })
}

/// `{0} ∪ {distinct |t_i| > 0}`, ascending.
fn magnitude_grid<'a>(points: impl IntoIterator<Item = &'a Point>) -> Vec<f64> {
    let mut grid: Vec<f64> = std::iter::once(0.0)
        .chain(
            points
                .into_iter()
                .flat_map(|p| p.coords().iter().map(|x| x.abs()).filter(|&x| x > 0.0)),
        )
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Sweeps the split threshold over every distinct coordinate magnitude and
/// keeps the split with the smallest objective (lowest threshold on ties).
///
/// `kind` selects the process used for the reference supremum `S(T)`.
pub fn decompose_by_sweep(
    set: &FiniteSet,
    kind: ProcessKind,
    samples: usize,
    seed: Seed,
    options: SweepOptions,
) -> Result<DecompositionResult> {
    let thresholds = magnitude_grid(set.points());
    let evals: Vec<Evaluation> = thresholds
        .par_iter()
        .map(|&r| evaluate(set, &SplitRule::Global { threshold: r }))
        .collect::<Result<_>>()?;
    let grid: Vec<GridPoint> = thresholds
        .iter()
        .zip(&evals)
        .map(|(&threshold, e)| GridPoint {
            threshold,
            ell1_sup: e.ell1_sup,
            gamma2_bound: e.gamma2_bound,
            objective: e.objective(),
        })
        .collect();
    let best = grid
        .iter()
        .copied()
        .reduce(|a, b| if b.objective < a.objective { b } else { a })
        .expect("grid contains 0");

    let mut rule = SplitRule::Global {
        threshold: best.threshold,
    };
    let (mut ell1_sup, mut gamma2_bound) = (best.ell1_sup, best.gamma2_bound);
    if options.per_point {
        let mut current = vec![best.threshold; set.len()];
        let mut objective = best.objective;
        for _round in 0..3 {
            let mut improved = false;
            for k in 0..set.len() {
                for r in magnitude_grid([set.point(k)]) {
                    if r == current[k] {
                        continue;
                    }
                    let mut trial = current.clone();
                    trial[k] = r;
                    let e = evaluate(set, &SplitRule::PerPoint { thresholds: trial.clone() })?;
                    if e.objective() < objective {
                        objective = e.objective();
                        ell1_sup = e.ell1_sup;
                        gamma2_bound = e.gamma2_bound;
                        current = trial;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        rule = SplitRule::PerPoint {
            thresholds: current,
        };
    }

    let splits = set
        .points()
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let (head, tail) = threshold_split(t, rule.threshold_for(k));
            PointSplit {
                head: head.support(),
                tail: tail.support(),
            }
        })
        .collect();
    let s_ref = sup_estimate(kind, set, samples, seed)?;
    let objective = ell1_sup + gamma2_bound;
    Ok(DecompositionResult {
        set: SetRef::from(set),
        split: rule,
        splits,
        ell1_sup,
        gamma2_bound,
        objective,
        k_emp: safe_ratio(objective, s_ref.value),
        s_b_reference: s_ref,
        disjoint_supports: pairwise_disjoint_supports(set.points()),
        grid,
    })
}

/// Both directions of `S_B(T) ≍ sup‖·‖₁ + γ₂`, reported as observed ratios.
pub fn verify_two_sided(set: &FiniteSet, result: &DecompositionResult) -> Result<ComparisonReport> {
    if result.set.hash != set.content_hash() {
        return Err(Error::Validation(format!(
            "decomposition was computed for {} ({}), not this set",
            result.set.name, result.set.hash
        )));
    }
    let parts = [
        ("ell1_sup", result.ell1_sup),
        ("gamma2_bound", result.gamma2_bound),
        ("objective", result.objective),
    ];
    if let Some((name, v)) = parts.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Validation(format!("{name} is {v}, expected a finite nonnegative value")));
    }
    let s = result.s_b_reference.value;
    let lower = safe_ratio(s, result.objective);
    let mut extras = BTreeMap::new();
    extras.insert("lower_ratio".into(), lower);
    extras.insert("k_emp".into(), result.k_emp);
    extras.insert("ell1_sup".into(), result.ell1_sup);
    extras.insert("gamma2_bound".into(), result.gamma2_bound);
    Ok(ComparisonReport {
        comparison: "decomposition/S_B(T)_vs_objective".into(),
        inputs: vec![result.set.clone()],
        lhs: Quantity::from_estimate("S(T)", &result.s_b_reference),
        rhs: Quantity::exact("ell1_sup+gamma2_bound", result.objective),
        ratio: lower,
        constant: None,
        violation: false,
        extras,
    })
}
