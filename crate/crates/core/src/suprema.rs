//! `S_X(F) = E sup_{t∈F} X_t` for finite `F`, exactly by sign enumeration or
//! by Monte Carlo.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{FiniteSet, ProcessKind, Seed};
use crate::error::{Error, Result};
use crate::moments::{signed_subset_sums, D_MAX};
use crate::rng::{mean_stderr, sample_values};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupEstimate {
    pub value: f64,
    /// Zero exactly when `method` is `Exact`.
    pub stderr: f64,
    pub method: Method,
    /// Number of sign patterns for exact runs, of draws otherwise.
    pub samples: u64,
    pub seed: Option<Seed>,
}

impl SupEstimate {
    pub fn is_exact(&self) -> bool {
        self.method == Method::Exact
    }
}

/// Exact `E max_{t∈F} ⟨ε, t⟩` over all `2^d` sign vectors.
pub fn brute_force_bernoulli_sup(set: &FiniteSet) -> Result<SupEstimate> {
    let d = set.dim();
    if d > D_MAX {
        return Err(Error::dim_capacity(d, D_MAX));
    }
    let n = set.len();
    let half = d / 2;
    let lo_tables: Vec<Vec<f64>> = set
        .points()
        .iter()
        .map(|p| signed_subset_sums(&p.coords()[..half]))
        .collect();
    let hi_tables: Vec<Vec<f64>> = set
        .points()
        .iter()
        .map(|p| signed_subset_sums(&p.coords()[half..]))
        .collect();
    let lo_len = 1usize << half;
    let hi_len = 1usize << (d - half);
    // lo[a * n + k] = lo part of point k under mask a
    let lo: Vec<f64> = (0..lo_len)
        .flat_map(|a| lo_tables.iter().map(move |tab| tab[a]))
        .collect();
    let partial: Vec<f64> = (0..hi_len)
        .into_par_iter()
        .map(|b| {
            let h: Vec<f64> = hi_tables.iter().map(|tab| tab[b]).collect();
            lo.chunks_exact(n)
                .map(|row| {
                    row.iter()
                        .zip(&h)
                        .map(|(l, h)| l + h)
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .sum::<f64>()
        })
        .collect();
    let patterns = (lo_len * hi_len) as f64;
    Ok(SupEstimate {
        value: partial.iter().sum::<f64>() / patterns,
        stderr: 0.0,
        method: Method::Exact,
        samples: 1u64 << d,
        seed: None,
    })
}

/// Monte Carlo mean of `max_{t∈F} ⟨ξ, t⟩` with its standard error.
pub fn mc_sup(kind: ProcessKind, set: &FiniteSet, samples: usize, seed: Seed) -> Result<SupEstimate> {
    if samples < 2 {
        return Err(Error::param("samples", "need at least 2 samples"));
    }
    let d = set.dim();
    let values = sample_values(seed, "mc_sup", samples, |s| {
        let mut xi = vec![0.0; d];
        s.fill(kind, &mut xi);
        set.points()
            .iter()
            .map(|p| p.dot(&xi))
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let (value, stderr) = mean_stderr(&values);
    Ok(SupEstimate {
        value,
        stderr,
        method: Method::MonteCarlo,
        samples: samples as u64,
        seed: Some(seed),
    })
}

/// Exact for Bernoulli sets within [`D_MAX`], Monte Carlo otherwise.
pub fn sup_estimate(
    kind: ProcessKind,
    set: &FiniteSet,
    samples: usize,
    seed: Seed,
) -> Result<SupEstimate> {
    match kind {
        ProcessKind::Bernoulli if set.dim() <= D_MAX => brute_force_bernoulli_sup(set),
        _ => mc_sup(kind, set, samples, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{center_at_zero, generate_set, SetKind};
    use crate::moments::bernoulli_norm_exact;

    fn set(rows: Vec<Vec<f64>>) -> FiniteSet {
        FiniteSet::from_coords("t", rows).unwrap()
    }

    fn naive(set: &FiniteSet) -> f64 {
        let d = set.dim();
        let mut acc = 0.0;
        for mask in 0..1u32 << d {
            let eps: Vec<f64> = (0..d).map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
            acc += set.points().iter().map(|p| p.dot(&eps)).fold(f64::NEG_INFINITY, f64::max);
        }
        acc / f64::from(1u32 << d)
    }

    #[test]
    fn brute_force_examples() {
        let basis = set(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(brute_force_bernoulli_sup(&basis).unwrap().value, 0.5);
        let zero = set(vec![vec![0.0, 0.0, 0.0]]);
        let z = brute_force_bernoulli_sup(&zero).unwrap();
        assert_eq!((z.value, z.stderr, z.method), (0.0, 0.0, Method::Exact));
        let sym = set(vec![vec![1.0, 1.0], vec![-1.0, -1.0]]);
        assert_eq!(brute_force_bernoulli_sup(&sym).unwrap().value, 1.0);
        let wide = set(vec![vec![0.0; 21]]);
        assert!(matches!(brute_force_bernoulli_sup(&wide), Err(Error::Capacity { .. })));
    }

    #[test]
    fn brute_force_matches_naive_oracle() {
        for seed in 0..5 {
            let f = generate_set(SetKind::RandomSphere, 7, 9, Seed(seed), &[]).unwrap();
            let exact = brute_force_bernoulli_sup(&f).unwrap().value;
            assert!((exact - naive(&f)).abs() < 1e-12);
        }
    }

    #[test]
    fn mc_examples() {
        let basis = set(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let e = mc_sup(ProcessKind::Bernoulli, &basis, 100_000, Seed(3)).unwrap();
        assert!((e.value - 0.5).abs() <= 3.0 * e.stderr);

        let t = [1.0, -2.0, 0.5];
        let pm = set(vec![t.to_vec(), t.iter().map(|x| -x).collect()]);
        let e = mc_sup(ProcessKind::Gaussian, &pm, 100_000, Seed(4)).unwrap();
        let truth = (1.0f64 + 4.0 + 0.25).sqrt() * (2.0 / std::f64::consts::PI).sqrt();
        assert!((e.value - truth).abs() <= 3.0 * e.stderr, "{} vs {truth}", e.value);

        let zero = set(vec![vec![0.0, 0.0]]);
        for kind in [ProcessKind::Bernoulli, ProcessKind::Gaussian] {
            let e = mc_sup(kind, &zero, 1000, Seed(1)).unwrap();
            assert_eq!((e.value, e.stderr), (0.0, 0.0));
        }
        assert!(mc_sup(ProcessKind::Gaussian, &zero, 1, Seed(1)).is_err());
    }

    #[test]
    fn translation_invariance() {
        let f = generate_set(SetKind::EllipsoidSample, 9, 12, Seed(8), &[0.5]).unwrap();
        let c = center_at_zero(&f);
        let a = brute_force_bernoulli_sup(&f).unwrap().value;
        let b = brute_force_bernoulli_sup(&c).unwrap().value;
        assert!((a - b).abs() < 1e-12);
        for kind in [ProcessKind::Bernoulli, ProcessKind::Gaussian] {
            let x = mc_sup(kind, &f, 20_000, Seed(2)).unwrap();
            let y = mc_sup(kind, &c, 20_000, Seed(2)).unwrap();
            let combined = (x.stderr.powi(2) + y.stderr.powi(2)).sqrt();
            assert!((x.value - y.value).abs() <= 3.0 * combined);
        }
    }

    #[test]
    fn monotone_under_inclusion() {
        let f = generate_set(SetKind::RandomSphere, 8, 10, Seed(21), &[]).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 1..=f.len() {
            let sub = FiniteSet::new("sub", f.points()[..k].to_vec()).unwrap();
            let v = brute_force_bernoulli_sup(&sub).unwrap().value;
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn symmetric_pair_is_first_absolute_moment() {
        let t = vec![0.4, -1.1, 2.0, 0.0, 0.3];
        let pm = set(vec![t.clone(), t.iter().map(|x| -x).collect()]);
        let s = brute_force_bernoulli_sup(&pm).unwrap().value;
        assert!((s - bernoulli_norm_exact(&t, 1.0).unwrap()).abs() < 1e-12);
    }
}
