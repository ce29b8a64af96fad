//! Weak versus strong moments of Bernoulli series in a finite-dimensional
//! normed space.
//!
//! Two systems `x_1..x_n`, `y_1..y_n` in `ℝ^m` are compared through scalar
//! moments `‖Σ x*(x_i)ε_i‖_p` along sampled dual-ball functionals `x*`, through
//! the trimmed-sum condition on the coefficient vectors, and through the
//! strong moments `E‖Σ ε_i x_i‖`.
//!
//! Only finitely many functionals are ever tried, so every constant here is a
//! lower estimate of the supremum over the whole dual ball. Reports carry the
//! maximizing functional.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contraction::{evaluate_profiles, fit_profiles, ContractionReport, PairProfile, BUDGET_RULE, DEFAULT_CAP};
use crate::domain::{sha256_hex, Seed};
use crate::error::{Error, Result};
use crate::moments::{bernoulli_norm_proxy, bernoulli_norm_exact, D_MAX};
use crate::report::{safe_ratio, ComparisonReport, Quantity, SetRef};
use crate::rng::{mean_stderr, sample_values, Stream};
use crate::suprema::Method;

/// Allowed excess of a functional's dual norm over 1.
pub const DUAL_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormTag {
    #[serde(alias = "sup-norm", alias = "sup_norm", alias = "linf")]
    Sup,
    #[serde(alias = "l2")]
    Euclidean,
}

impl NormTag {
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            NormTag::Sup => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            NormTag::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    pub fn dual_norm(self, v: &[f64]) -> f64 {
        match self {
            NormTag::Sup => v.iter().map(|x| x.abs()).sum(),
            NormTag::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

/// Series terms `x_1..x_n` (rows) in `(ℝ^m, norm)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VectorSystem {
    pub name: String,
    pub norm: NormTag,
    vectors: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawSystem {
    #[serde(default)]
    name: String,
    norm: NormTag,
    vectors: Vec<Vec<f64>>,
}

impl VectorSystem {
    pub fn new(name: impl Into<String>, norm: NormTag, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return Err(Error::Validation("a vector system needs at least one vector".into()));
        };
        let m = first.len();
        if m == 0 {
            return Err(Error::Validation("ambient dimension must be at least 1".into()));
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != m {
                return Err(Error::Validation(format!(
                    "vector {i} has dimension {}, expected {m}",
                    v.len()
                )));
            }
            if let Some(j) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("vector {i} coordinate {j} is not finite")));
            }
        }
        Ok(VectorSystem {
            name: name.into(),
            norm,
            vectors,
        })
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Number of series terms.
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Ambient dimension `m`.
    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        let vectors = self
            .vectors
            .iter()
            .map(|v| v.iter().map(|x| c * x).collect())
            .collect();
        VectorSystem::new(format!("{}*{c}", self.name), self.norm, vectors)
    }

    /// `(x*(x_i))_i`
    pub fn coefficients(&self, functional: &[f64]) -> Vec<f64> {
        self.vectors
            .iter()
            .map(|v| v.iter().zip(functional).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("finite floats serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSystem = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            reason: e.to_string(),
        })?;
        VectorSystem::new(raw.name, raw.norm, raw.vectors)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        VectorSystem::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }

    fn set_ref(&self) -> SetRef {
        SetRef {
            name: self.name.clone(),
            hash: self.content_hash(),
            dim: self.dim(),
            size: self.len(),
        }
    }
}

fn check_pair(x: &VectorSystem, y: &VectorSystem) -> Result<()> {
    if x.len() != y.len() || x.dim() != y.dim() {
        return Err(Error::Validation(format!(
            "systems differ in shape: {}×{} vs {}×{}",
            x.len(),
            x.dim(),
            y.len(),
            y.dim()
        )));
    }
    if x.norm != y.norm {
        return Err(Error::Validation(format!(
            "systems use different norms: {:?} vs {:?}",
            x.norm, y.norm
        )));
    }
    Ok(())
}

/// Dual-ball functionals for one norm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FunctionalSample {
    pub norm: NormTag,
    pub seed: Option<Seed>,
    functionals: Vec<Vec<f64>>,
}

impl FunctionalSample {
    pub fn new(norm: NormTag, functionals: Vec<Vec<f64>>, seed: Option<Seed>) -> Result<Self> {
        let Some(first) = functionals.first() else {
            return Err(Error::Validation("need at least one functional".into()));
        };
        let m = first.len();
        for (k, f) in functionals.iter().enumerate() {
            if f.len() != m || f.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("functional {k} is malformed")));
            }
            let dn = norm.dual_norm(f);
            if dn > 1.0 + DUAL_SLACK {
                return Err(Error::Validation(format!("functional {k} has dual norm {dn} > 1")));
            }
        }
        Ok(FunctionalSample {
            norm,
            seed,
            functionals,
        })
    }

    /// Sup-norm: the `2m` extreme points `±e_j` followed by `random` convex
    /// combinations of them. Euclidean: `random` uniform points of the
    /// sphere (at least one).
    pub fn generate(norm: NormTag, m: usize, random: usize, seed: Seed) -> Result<Self> {
        if m == 0 {
            return Err(Error::param("m", "ambient dimension must be at least 1"));
        }
        let mut functionals = Vec::new();
        if norm == NormTag::Sup {
            for j in 0..m {
                for s in [1.0, -1.0] {
                    let mut f = vec![0.0; m];
                    f[j] = s;
                    functionals.push(f);
                }
            }
        }
        let random = if norm == NormTag::Euclidean { random.max(1) } else { random };
        functionals.extend((0..random).map(|k| {
            let mut s = Stream::new(seed, "functional", k as u64);
            match norm {
                NormTag::Sup => {
                    // Dirichlet(1,…,1) weights on random signed vertices
                    let w: Vec<f64> = (0..m).map(|_| -(1.0 - s.uniform()).ln()).collect();
                    let total: f64 = w.iter().sum();
                    let mut f: Vec<f64> = w.iter().map(|x| s.sign() * x / total).collect();
                    let l1: f64 = f.iter().map(|x| x.abs()).sum();
                    if l1 > 1.0 {
                        f.iter_mut().for_each(|x| *x /= l1);
                    }
                    f
                }
                NormTag::Euclidean => loop {
                    let g: Vec<f64> = (0..m).map(|_| s.normal()).collect();
                    let n = NormTag::Euclidean.norm(&g);
                    if n > 0.0 {
                        let mut f: Vec<f64> = g.iter().map(|x| x / n).collect();
                        let n2 = NormTag::Euclidean.norm(&f);
                        if n2 > 1.0 {
                            f.iter_mut().for_each(|x| *x /= n2);
                        }
                        break f;
                    }
                },
            }
        }));
        FunctionalSample::new(norm, functionals, Some(seed))
    }

    pub fn functionals(&self) -> &[Vec<f64>] {
        &self.functionals
    }

    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }
}

fn check_functionals(x: &VectorSystem, funcs: &FunctionalSample) -> Result<()> {
    if funcs.norm != x.norm {
        return Err(Error::Validation("functionals were sampled for a different norm".into()));
    }
    if funcs.functionals[0].len() != x.dim() {
        return Err(Error::Validation(format!(
            "functionals live in dimension {}, systems in {}",
            funcs.functionals[0].len(),
            x.dim()
        )));
    }
    Ok(())
}

/// `‖Σ a_i ε_i‖_p`: exact within [`D_MAX`] terms, moment proxy beyond.
pub fn scalar_moment(a: &[f64], p: u32) -> Result<f64> {
    if a.len() <= D_MAX {
        bernoulli_norm_exact(a, p as f64)
    } else {
        Ok(bernoulli_norm_proxy(a, p)?.proxy)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakMomentReport {
    /// Largest observed ratio; `∞` when some denominator vanishes under a
    /// nonzero numerator, 0 when every pair was `0/0`.
    pub constant: f64,
    pub p: Option<u32>,
    pub functional: Option<usize>,
    pub functional_coords: Option<Vec<f64>>,
    pub p_max: u32,
    pub functionals_tried: usize,
    /// `(functional, p)` pairs with both moments zero.
    pub skipped: usize,
    pub method: Method,
}

/// `max_{x*, p ≤ p_max} ‖Σ x*(x_i)ε_i‖_p / ‖Σ x*(y_i)ε_i‖_p` over the
/// sampled functionals and integer `p`.
pub fn weak_moment_constant(
    x: &VectorSystem,
    y: &VectorSystem,
    funcs: &FunctionalSample,
    p_max: u32,
) -> Result<WeakMomentReport> {
    check_pair(x, y)?;
    check_functionals(x, funcs)?;
    if p_max == 0 {
        return Err(Error::param("p_max", "must be at least 1"));
    }
    let per_functional: Vec<(f64, u32, usize)> = funcs
        .functionals
        .par_iter()
        .map(|f| {
            let a = x.coefficients(f);
            let b = y.coefficients(f);
            let mut best = (f64::NEG_INFINITY, 0u32);
            let mut skipped = 0;
            for p in 1..=p_max {
                let num = scalar_moment(&a, p)?;
                let den = scalar_moment(&b, p)?;
                if num == 0.0 && den == 0.0 {
                    skipped += 1;
                    continue;
                }
                let r = safe_ratio(num, den);
                if r > best.0 {
                    best = (r, p);
                }
            }
            Ok((best.0, best.1, skipped))
        })
        .collect::<Result<_>>()?;
    let mut report = WeakMomentReport {
        constant: 0.0,
        p: None,
        functional: None,
        functional_coords: None,
        p_max,
        functionals_tried: funcs.len(),
        skipped: per_functional.iter().map(|r| r.2).sum(),
        method: if x.len() <= D_MAX { Method::Exact } else { Method::MonteCarlo },
    };
    for (k, &(r, p, _)) in per_functional.iter().enumerate() {
        if r > report.constant || (report.functional.is_none() && r >= 0.0) {
            report.constant = r;
            report.p = Some(p);
            report.functional = Some(k);
        }
    }
    report.functional_coords = report.functional.map(|k| funcs.functionals[k].clone());
    Ok(report)
}

/// Minimal `C` with
/// `inf_{|I^c| ≤ ⌊Cp⌋} Σ_{i∈I} a_i² ≤ C² inf_{|I^c| ≤ p} Σ_{i∈I} b_i²`
/// for every sampled functional, where `a = (x*(x_i))`, `b = (x*(y_i))`.
pub fn check_trimmed_condition(
    x: &VectorSystem,
    y: &VectorSystem,
    funcs: &FunctionalSample,
    p_max: usize,
    tol: f64,
) -> Result<ContractionReport> {
    check_pair(x, y)?;
    check_functionals(x, funcs)?;
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    let profiles: Vec<PairProfile> = funcs
        .functionals
        .par_iter()
        .map(|f| PairProfile::new(&y.coefficients(f), &x.coefficients(f)))
        .collect();
    // fitted one functional at a time so the binding one can be named
    let fits: Vec<Option<f64>> = profiles
        .par_iter()
        .map(|prof| fit_profiles(std::slice::from_ref(prof), p_max, tol, DEFAULT_CAP).0)
        .collect();
    let mut functional = None;
    let mut c_star = Some(1.0);
    for (k, fit) in fits.iter().enumerate() {
        match (fit, c_star) {
            (None, Some(_)) => {
                c_star = None;
                functional = Some(k);
            }
            (Some(c), Some(best)) if *c > best || functional.is_none() => {
                c_star = Some(c.max(best));
                functional = Some(k);
            }
            _ => {}
        }
    }
    let margin = evaluate_profiles(&profiles, c_star.unwrap_or(DEFAULT_CAP), p_max).1;
    Ok(ContractionReport {
        c_star,
        p_max,
        worst_pair: None,
        margin,
        tol,
        cap: DEFAULT_CAP,
        budget_rule: BUDGET_RULE.into(),
        functional,
    })
}

/// `E‖Σ ε_i v_i‖` over all sign patterns, `ε_1 = +1` fixed by symmetry.
///
/// The low bits run in Gray-code order so each step updates one term.
pub fn exact_strong_moment(v: &VectorSystem) -> Result<f64> {
    let n = v.len();
    if n > D_MAX {
        return Err(Error::dim_capacity(n, D_MAX));
    }
    let m = v.dim();
    let free = n - 1;
    let low = free.min(12);
    let high = free - low;
    let terms = &v.vectors;
    let partial: Vec<f64> = (0..1usize << high)
        .into_par_iter()
        .map(|hi| {
            // bit k of a mask set means ε_{k+1} = -1
            let mut sum = terms[0].clone();
            for (k, term) in terms[1..].iter().enumerate() {
                let flipped = if k < low { false } else { hi >> (k - low) & 1 == 1 };
                let s = if flipped { -1.0 } else { 1.0 };
                for (acc, x) in sum.iter_mut().zip(term) {
                    *acc += s * x;
                }
            }
            let mut total = v.norm.norm(&sum);
            let mut signs = vec![1.0; low];
            for step in 1..1usize << low {
                let k = step.trailing_zeros() as usize;
                signs[k] = -signs[k];
                let term = &terms[k + 1];
                for j in 0..m {
                    sum[j] += 2.0 * signs[k] * term[j];
                }
                total += v.norm.norm(&sum);
            }
            total
        })
        .collect();
    Ok(partial.iter().sum::<f64>() / (1u64 << free) as f64)
}

/// `E‖Σ ε_i x_i‖` against `E‖Σ ε_i y_i‖`; exact within [`D_MAX`] terms,
/// otherwise Monte Carlo with shared sign draws for both systems.
pub fn strong_moment_ratio(
    x: &VectorSystem,
    y: &VectorSystem,
    samples: usize,
    seed: Seed,
) -> Result<ComparisonReport> {
    check_pair(x, y)?;
    let mut extras = BTreeMap::new();
    let (lhs, rhs, ratio) = if x.len() <= D_MAX {
        let ex = exact_strong_moment(x)?;
        let ey = exact_strong_moment(y)?;
        extras.insert("ratio_stderr".into(), 0.0);
        (Quantity::exact("E|sum eps x|", ex), Quantity::exact("E|sum eps y|", ey), safe_ratio(ex, ey))
    } else {
        if samples < 2 {
            return Err(Error::param("samples", "need at least 2 samples"));
        }
        let draw = |v: &VectorSystem| {
            sample_values(seed, "strong_moment", samples, |s| {
                let mut sum = vec![0.0; v.dim()];
                for term in &v.vectors {
                    let e = s.sign();
                    sum.iter_mut().zip(term).for_each(|(acc, t)| *acc += e * t);
                }
                v.norm.norm(&sum)
            })
        };
        let (vx, vy) = (draw(x), draw(y));
        let (mx, sx) = mean_stderr(&vx);
        let (my, sy) = mean_stderr(&vy);
        let ratio = safe_ratio(mx, my);
        if my > 0.0 {
            // delta method on the paired draws
            let resid: Vec<f64> = vx.iter().zip(&vy).map(|(a, b)| (a - ratio * b) / my).collect();
            extras.insert("ratio_stderr".into(), mean_stderr(&resid).1);
        }
        let q = |label: &str, value, stderr| Quantity {
            label: label.into(),
            value,
            stderr,
            method: Method::MonteCarlo,
        };
        (q("E|sum eps x|", mx, sx), q("E|sum eps y|", my, sy), ratio)
    };
    Ok(ComparisonReport {
        comparison: "strong_moments/x_vs_y".into(),
        inputs: vec![x.set_ref(), y.set_ref()],
        lhs,
        rhs,
        ratio,
        constant: None,
        violation: false,
        extras,
    })
}
