//! The trimmed-distance contraction condition
//!
//! ```text
//! inf_{|I^c| ≤ Cp} Σ_{i∈I} |φ_i(t) − φ_i(s)|²  ≤  C² · inf_{|I^c| ≤ p} Σ_{i∈I} |t_i − s_i|²
//! ```
//!
//! for all pairs `s, t ∈ T` and integers `p ≥ 0`, its minimal feasible
//! constant, and empirical comparison of `S_B(φ(T))` with `S_B(T)`.
//!
//! The budget `|I^c| ≤ Cp` is applied as `⌊C·p⌋`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{FiniteSet, Point, ProcessKind, Seed};
use crate::error::{Error, Result};
use crate::moments::{rearrange, split_top};
use crate::report::{safe_ratio, ComparisonReport, Quantity, SetRef};
use crate::suprema::sup_estimate;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_CAP: f64 = 1024.0;
/// Relative floating-point allowance when comparing the two trimmed sums.
pub const SLACK: f64 = 1e-12;
pub const BUDGET_RULE: &str = "floor(C*p)";

/// Built-in coordinatewise maps `φ_i = f` for every `i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case")]
pub enum CoordinateMap {
    Scale { factor: f64 },
    /// Clamp to `[-bound, bound]`.
    Clamp { bound: f64 },
    Abs,
    /// `sign(x)·max(|x| − level, 0)`.
    SoftThreshold { level: f64 },
}

impl CoordinateMap {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            CoordinateMap::Scale { factor } => factor * x,
            CoordinateMap::Clamp { bound } => x.clamp(-bound, bound),
            CoordinateMap::Abs => x.abs(),
            CoordinateMap::SoftThreshold { level } => x.signum() * (x.abs() - level).max(0.0),
        }
    }

    /// True when every coordinate function is 1-Lipschitz.
    pub fn is_contraction(&self) -> bool {
        match *self {
            CoordinateMap::Scale { factor } => factor.abs() <= 1.0,
            _ => true,
        }
    }

    /// Parses `abs`, `scale:c`, `clamp:a`, `soft:λ`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (spec, None),
        };
        let value = |default: Option<f64>| -> Result<f64> {
            match arg {
                Some(a) => a
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::param("map", format!("bad numeric argument `{a}`"))),
                None => default.ok_or_else(|| Error::param("map", format!("`{name}` needs an argument"))),
            }
        };
        match name {
            "abs" => Ok(CoordinateMap::Abs),
            "scale" => Ok(CoordinateMap::Scale { factor: value(None)? }),
            "clamp" => {
                let bound = value(Some(1.0))?;
                if bound < 0.0 {
                    return Err(Error::param("map", "clamp bound must be nonnegative"));
                }
                Ok(CoordinateMap::Clamp { bound })
            }
            "soft" | "soft_threshold" => {
                let level = value(Some(0.5))?;
                if level < 0.0 {
                    return Err(Error::param("map", "threshold must be nonnegative"));
                }
                Ok(CoordinateMap::SoftThreshold { level })
            }
            other => Err(Error::param("map", format!("unknown map `{other}`"))),
        }
    }
}

/// A finite set `T`, its image `φ(T)` and the map between their indices.
///
/// `correspondence[k]` is the image index of source point `k`. It need not be
/// injective: `φ` may send distinct points to the same image point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MappedPair {
    pub source: FiniteSet,
    pub image: FiniteSet,
    pub correspondence: Vec<usize>,
}

impl MappedPair {
    pub fn new(source: FiniteSet, image: FiniteSet, correspondence: Vec<usize>) -> Result<Self> {
        if correspondence.len() != source.len() {
            return Err(Error::Validation(format!(
                "correspondence has {} entries for {} source points",
                correspondence.len(),
                source.len()
            )));
        }
        if let Some(&bad) = correspondence.iter().find(|&&k| k >= image.len()) {
            return Err(Error::Validation(format!(
                "correspondence names image point {bad}, image has {}",
                image.len()
            )));
        }
        Ok(MappedPair {
            source,
            image,
            correspondence,
        })
    }

    /// Image of `source` under an arbitrary pointwise map.
    pub fn from_fn(source: FiniteSet, f: impl Fn(&Point) -> Point) -> Result<Self> {
        let mapped: Vec<Point> = source.points().iter().map(&f).collect();
        let (image, correspondence) = FiniteSet::dedup(format!("phi({})", source.name()), mapped)?;
        Self::new(source, image, correspondence)
    }

    pub fn from_map(source: FiniteSet, map: CoordinateMap) -> Result<Self> {
        Self::from_fn(source, |p| {
            Point::new(p.coords().iter().map(|&x| map.apply(x)).collect())
                .expect("coordinate maps keep values finite")
        })
    }

    pub fn phi(&self, k: usize) -> &Point {
        self.image.point(self.correspondence[k])
    }
}

/// Squared ℓ² norm of `t − s` after dropping its `min(p, d)` largest
/// magnitudes.
pub fn trimmed_sq_distance(s: &[f64], t: &[f64], p: usize) -> f64 {
    let diff: Vec<f64> = t.iter().zip(s).map(|(a, b)| a - b).collect();
    split_top(&diff, p).1
}

/// `suffix[p]` = trimmed squared norm at budget `p`, for `p = 0..=d`.
fn trim_profile(diff: &[f64]) -> Vec<f64> {
    let sorted = rearrange(diff);
    let mut suffix = vec![0.0; sorted.len() + 1];
    for k in (0..sorted.len()).rev() {
        suffix[k] = suffix[k + 1] + sorted[k] * sorted[k];
    }
    suffix
}

fn trimmed(profile: &[f64], budget: usize) -> f64 {
    profile[budget.min(profile.len() - 1)]
}

/// Trimmed-sum profiles of one pair: `(source difference, image difference)`.
#[derive(Clone, Debug)]
pub(crate) struct PairProfile {
    src: Vec<f64>,
    img: Vec<f64>,
}

impl PairProfile {
    pub(crate) fn new(src_diff: &[f64], img_diff: &[f64]) -> Self {
        PairProfile {
            src: trim_profile(src_diff),
            img: trim_profile(img_diff),
        }
    }
}

/// Location of the largest excess `LHS − C²·RHS`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct WorstCase {
    pub s: usize,
    pub t: usize,
    pub p: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub holds: bool,
    /// `max (LHS − C²·RHS)` over all pairs and `p`.
    pub margin: f64,
    pub worst: Option<WorstCase>,
}

/// `(holds, margin, worst pair index, worst p)` over precomputed profiles.
pub(crate) fn evaluate_profiles(
    profiles: &[PairProfile],
    c: f64,
    p_max: usize,
) -> (bool, f64, Option<(usize, usize)>) {
    let c2 = c * c;
    let per_pair: Vec<(bool, f64, usize)> = profiles
        .par_iter()
        .map(|prof| {
            let mut ok = true;
            let mut worst = (f64::NEG_INFINITY, 0);
            for p in 0..=p_max {
                let budget = (c * p as f64).floor() as usize;
                let lhs = trimmed(&prof.img, budget);
                let rhs = c2 * trimmed(&prof.src, p);
                let excess = lhs - rhs;
                if excess > SLACK * lhs.max(rhs) {
                    ok = false;
                }
                if excess > worst.0 {
                    worst = (excess, p);
                }
            }
            (ok, worst.0, worst.1)
        })
        .collect();
    let holds = per_pair.iter().all(|r| r.0);
    let mut margin = f64::NEG_INFINITY;
    let mut at = None;
    for (k, &(_, m, p)) in per_pair.iter().enumerate() {
        if m > margin {
            margin = m;
            at = Some((k, p));
        }
    }
    (holds, margin, at)
}

fn pair_profiles(pair: &MappedPair) -> (Vec<PairProfile>, Vec<(usize, usize)>) {
    let n = pair.source.len();
    let index: Vec<(usize, usize)> = (0..n).flat_map(|s| (s + 1..n).map(move |t| (s, t))).collect();
    let profiles = index
        .par_iter()
        .map(|&(s, t)| {
            let src = pair.source.point(t).sub(pair.source.point(s));
            let img = pair.phi(t).sub(pair.phi(s));
            PairProfile::new(src.coords(), img.coords())
        })
        .collect();
    (profiles, index)
}

/// Checks the condition at constant `c` for `p = 0..=p_max` over all
/// unordered pairs.
pub fn check_condition(pair: &MappedPair, c: f64, p_max: usize) -> Result<ConditionCheck> {
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::param("C", "must be a finite real ≥ 1"));
    }
    let (profiles, index) = pair_profiles(pair);
    if profiles.is_empty() {
        return Ok(ConditionCheck {
            holds: true,
            margin: 0.0,
            worst: None,
        });
    }
    let (holds, margin, at) = evaluate_profiles(&profiles, c, p_max);
    Ok(ConditionCheck {
        holds,
        margin,
        worst: at.map(|(k, p)| WorstCase {
            s: index[k].0,
            t: index[k].1,
            p,
        }),
    })
}

/// Smallest feasible constant found by doubling then bisection.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionReport {
    /// `None` when even the cap is infeasible.
    pub c_star: Option<f64>,
    pub p_max: usize,
    pub worst_pair: Option<WorstCase>,
    /// Largest excess at `c_star` (at the cap when infeasible).
    pub margin: f64,
    pub tol: f64,
    pub cap: f64,
    pub budget_rule: String,
    /// Index of the sampled functional attaining `c_star`, when functionals
    /// were involved.
    pub functional: Option<usize>,
}

/// Returns `(c_star, margin, worst)` over precomputed profiles.
pub(crate) fn fit_profiles(
    profiles: &[PairProfile],
    p_max: usize,
    tol: f64,
    cap: f64,
) -> (Option<f64>, f64, Option<(usize, usize)>) {
    let feasible = |c: f64| evaluate_profiles(profiles, c, p_max);
    let at_one = feasible(1.0);
    if at_one.0 {
        return (Some(1.0), at_one.1, at_one.2);
    }
    let mut lo = 1.0;
    let mut hi = 2.0f64.min(cap);
    loop {
        let r = feasible(hi);
        if r.0 {
            break;
        }
        if hi >= cap {
            return (None, r.1, r.2);
        }
        lo = hi;
        hi = (2.0 * hi).min(cap);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid).0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let r = feasible(hi);
    (Some(hi), r.1, r.2)
}

pub fn fit_min_c(pair: &MappedPair, p_max: usize, tol: f64) -> Result<ContractionReport> {
    fit_min_c_capped(pair, p_max, tol, DEFAULT_CAP)
}

pub fn fit_min_c_capped(pair: &MappedPair, p_max: usize, tol: f64, cap: f64) -> Result<ContractionReport> {
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    if !(cap >= 1.0) {
        return Err(Error::param("cap", "must be at least 1"));
    }
    let (profiles, index) = pair_profiles(pair);
    let (c_star, margin, worst) = if profiles.is_empty() {
        (Some(1.0), 0.0, None)
    } else {
        fit_profiles(&profiles, p_max, tol, cap)
    };
    Ok(ContractionReport {
        c_star,
        p_max,
        worst_pair: worst.map(|(k, p)| WorstCase {
            s: index[k].0,
            t: index[k].1,
            p,
        }),
        margin,
        tol,
        cap,
        budget_rule: BUDGET_RULE.into(),
        functional: None,
    })
}

/// `S_B(φ(T))` against `S_B(T)`; exact within the enumeration limit.
pub fn compare_suprema(pair: &MappedPair, samples: usize, seed: Seed) -> Result<ComparisonReport> {
    let image = sup_estimate(ProcessKind::Bernoulli, &pair.image, samples, seed)?;
    let source = sup_estimate(ProcessKind::Bernoulli, &pair.source, samples, seed)?;
    let mut extras = BTreeMap::new();
    extras.insert("image_points".into(), pair.image.len() as f64);
    Ok(ComparisonReport {
        comparison: "contraction/S_B(phi(T))_vs_S_B(T)".into(),
        inputs: vec![SetRef::from(&pair.source), SetRef::from(&pair.image)],
        lhs: Quantity::from_estimate("S_B(phi(T))", &image),
        rhs: Quantity::from_estimate("S_B(T)", &source),
        ratio: safe_ratio(image.value, source.value),
        constant: None,
        violation: false,
        extras,
    })
}
