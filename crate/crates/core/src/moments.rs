//! Moment norms `‖X_t‖_p` of canonical Bernoulli and Gaussian processes.
//!
//! For the Bernoulli process the two-term proxy
//!
//! ```text
//! Σ_{i≤p} t*_i + √p · (Σ_{i>p} |t*_i|²)^{1/2}
//! ```
//!
//! (an ℓ¹ part over the `p` largest magnitudes plus a Gaussian part over the
//! rest) is within a factor 4 of the true moment. The exact moment is
//! available by enumerating all sign patterns for small dimension, and both
//! laws can be estimated by Monte Carlo.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::domain::{ProcessKind, Seed};
use crate::error::{Error, Result};
use crate::rng::{mean_stderr, sample_values};

/// Largest dimension accepted by the exact sign-enumeration oracles.
pub const D_MAX: usize = 20;

/// Above this length the top-`p` split uses selection instead of a full sort.
const SELECT_ABOVE: usize = 64;

/// Absolute values sorted nonincreasing; ties keep their original order.
pub fn rearrange(t: &[f64]) -> Vec<f64> {
    let mut abs: Vec<f64> = t.iter().map(|x| x.abs()).collect();
    abs.sort_by(|a, b| b.total_cmp(a));
    abs
}

/// `(Σ of the min(p,d) largest |t_i|, Σ of squares of the remaining |t_i|)`.
pub(crate) fn split_top(t: &[f64], p: usize) -> (f64, f64) {
    let d = t.len();
    let k = p.min(d);
    if k == 0 {
        return (0.0, t.iter().map(|x| x * x).sum());
    }
    if k == d {
        return (t.iter().map(|x| x.abs()).sum(), 0.0);
    }
    let mut abs: Vec<f64> = t.iter().map(|x| x.abs()).collect();
    if d > SELECT_ABOVE {
        abs.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    } else {
        abs.sort_by(|a, b| b.total_cmp(a));
    }
    let (top, rest) = abs.split_at(k);
    (top.iter().sum(), rest.iter().map(|x| x * x).sum())
}

/// Sum of the `min(p, d)` largest absolute coordinates.
pub fn ell1_part(t: &[f64], p: usize) -> f64 {
    split_top(t, p).0
}

/// ℓ² norm of `t` once its `min(p, d)` largest-magnitude coordinates are zeroed.
pub fn tail_l2(t: &[f64], p: usize) -> f64 {
    split_top(t, p).1.sqrt()
}

/// The two parts of the Bernoulli moment proxy at order `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentDecomposition {
    pub p: u32,
    pub ell1_part: f64,
    pub tail_l2: f64,
    /// `ell1_part + √p · tail_l2`
    pub proxy: f64,
}

pub fn bernoulli_norm_proxy(t: &[f64], p: u32) -> Result<MomentDecomposition> {
    if p == 0 {
        return Err(Error::param("p", "the decomposition is defined for p ≥ 1"));
    }
    let (ell1, tail_sq) = split_top(t, p as usize);
    let tail = tail_sq.sqrt();
    Ok(MomentDecomposition {
        p,
        ell1_part: ell1,
        tail_l2: tail,
        proxy: ell1 + (p as f64).sqrt() * tail,
    })
}

/// `(E|g|^p)^{1/p}` for a standard normal `g` and real `p > 0`.
///
/// Even integer orders use `E g^p = (p-1)!!` directly; everything else goes
/// through `E|g|^p = 2^{p/2} Γ((p+1)/2) / √π`.
pub fn gaussian_moment_constant(p: f64) -> f64 {
    if p == 2.0 {
        return 1.0;
    }
    if p.fract() == 0.0 && p <= 64.0 && (p as u32).is_multiple_of(2) {
        let k = p as u32;
        let double_factorial: f64 = (1..k).step_by(2).map(f64::from).product();
        return double_factorial.powf(1.0 / p);
    }
    let log_moment = 0.5 * p * std::f64::consts::LN_2 + ln_gamma((p + 1.0) / 2.0)
        - 0.5 * std::f64::consts::PI.ln();
    (log_moment / p).exp()
}

/// `‖G_t‖_p = ‖t‖₂ · (E|g|^p)^{1/p}`.
pub fn gaussian_norm_exact(t: &[f64], p: u32) -> Result<f64> {
    if p == 0 {
        return Err(Error::param("p", "must be at least 1"));
    }
    let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(norm * gaussian_moment_constant(p as f64))
}

/// `(E|Σ ε_i t_i|^p)^{1/p}` by enumerating all `2^d` sign patterns.
///
/// Accepts any real `p ≥ 1`.
pub fn bernoulli_norm_exact(t: &[f64], p: f64) -> Result<f64> {
    if t.len() > D_MAX {
        return Err(Error::dim_capacity(t.len(), D_MAX));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::param("p", "must be a finite real ≥ 1"));
    }
    let scale = t.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let u: Vec<f64> = t.iter().map(|x| x / scale).collect();
    let int_p = (p.fract() == 0.0 && p <= 128.0).then_some(p as i32);
    let pow = |x: f64| match int_p {
        Some(k) => x.abs().powi(k),
        None => x.abs().powf(p),
    };
    // |S| is invariant under a global sign flip, so ε₀ = +1 is fixed.
    let (first, rest) = u.split_first().expect("dimension ≥ 1");
    let half = rest.len() / 2;
    let lo = signed_subset_sums(&rest[..half]);
    let hi = signed_subset_sums(&rest[half..]);
    let partial: Vec<f64> = hi
        .par_iter()
        .map(|h| lo.iter().map(|l| pow(first + l + h)).sum::<f64>())
        .collect();
    let patterns = (lo.len() * hi.len()) as f64;
    let mean = partial.iter().sum::<f64>() / patterns;
    Ok(scale * mean.powf(1.0 / p))
}

/// `Σ_i ±x_i` for every sign mask, with bit `i` set meaning `-x_i`.
pub(crate) fn signed_subset_sums(x: &[f64]) -> Vec<f64> {
    (0..1usize << x.len())
        .map(|mask| {
            x.iter()
                .enumerate()
                .map(|(i, v)| if mask >> i & 1 == 1 { -v } else { *v })
                .sum()
        })
        .collect()
}

/// Monte Carlo estimate of `‖X_t‖_p` with a delta-method standard error.
pub fn mc_norm(
    kind: ProcessKind,
    t: &[f64],
    p: u32,
    samples: usize,
    seed: Seed,
) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(Error::param("samples", "need at least 2 samples"));
    }
    if p == 0 {
        return Err(Error::param("p", "must be at least 1"));
    }
    let values = sample_values(seed, "mc_norm", samples, |s| {
        let x: f64 = t.iter().map(|ti| ti * s.variate(kind)).sum();
        x.abs().powi(p as i32)
    });
    let (moment, se) = mean_stderr(&values);
    if moment == 0.0 {
        return Ok((0.0, 0.0));
    }
    let inv = 1.0 / p as f64;
    let estimate = moment.powf(inv);
    // d/dm m^{1/p} = (1/p) m^{1/p - 1}
    let stderr = inv * moment.powf(inv - 1.0) * se;
    Ok((estimate, stderr))
}

/// How `‖X_t − X_s‖_p` is evaluated inside chaining functionals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum MomentModel {
    BernoulliProxy,
    BernoulliExact,
    GaussianExact,
    MonteCarlo {
        kind: ProcessKind,
        samples: usize,
        seed: Seed,
    },
}

impl MomentModel {
    /// Exact where the dimension allows it, the proxy otherwise.
    pub fn default_for(kind: ProcessKind, dim: usize) -> Self {
        match kind {
            ProcessKind::Bernoulli if dim <= D_MAX => MomentModel::BernoulliExact,
            ProcessKind::Bernoulli => MomentModel::BernoulliProxy,
            ProcessKind::Gaussian => MomentModel::GaussianExact,
        }
    }

    pub fn check(&self, dim: usize) -> Result<()> {
        match *self {
            MomentModel::BernoulliExact if dim > D_MAX => Err(Error::dim_capacity(dim, D_MAX)),
            MomentModel::MonteCarlo { samples, .. } if samples < 2 => {
                Err(Error::param("samples", "need at least 2 samples"))
            }
            _ => Ok(()),
        }
    }

    /// `‖X_t‖_p` under this model.
    pub fn norm(&self, t: &[f64], p: u32) -> Result<f64> {
        match *self {
            MomentModel::BernoulliProxy => Ok(bernoulli_norm_proxy(t, p)?.proxy),
            MomentModel::BernoulliExact => bernoulli_norm_exact(t, p as f64),
            MomentModel::GaussianExact => gaussian_norm_exact(t, p),
            MomentModel::MonteCarlo {
                kind,
                samples,
                seed,
            } => Ok(mc_norm(kind, t, p, samples, seed)?.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn rearrange_examples() {
        assert_eq!(rearrange(&[1.0, -3.0, 2.0]), vec![3.0, 2.0, 1.0]);
        assert_eq!(rearrange(&[0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(rearrange(&[2.0, -2.0, 2.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn ell1_and_tail_examples() {
        let t = [3.0, 2.0, 1.0];
        assert_eq!(ell1_part(&t, 2), 5.0);
        assert_eq!(ell1_part(&t, 0), 0.0);
        assert_eq!(ell1_part(&t, 10), 6.0);
        assert_eq!(tail_l2(&t, 1), 5f64.sqrt());
        assert_eq!(tail_l2(&t, 0), 14f64.sqrt());
        assert_eq!(tail_l2(&t, 3), 0.0);
    }

    #[test]
    fn selection_path_matches_sort_path() {
        let t: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64 - 50.0) / 7.0).collect();
        let sorted = rearrange(&t);
        for p in [0usize, 1, 5, 64, 65, 150, 199, 200, 500] {
            let k = p.min(t.len());
            let ell1: f64 = sorted[..k].iter().sum();
            let tail: f64 = sorted[k..].iter().map(|x| x * x).sum();
            let (e, s) = split_top(&t, p);
            assert!(close(e, ell1), "p={p}");
            assert!(close(s, tail), "p={p}");
        }
    }

    #[test]
    fn proxy_examples() {
        let d = bernoulli_norm_proxy(&[1.0, 1.0], 2).unwrap();
        assert_eq!((d.ell1_part, d.tail_l2, d.proxy), (2.0, 0.0, 2.0));
        let exact = bernoulli_norm_exact(&[1.0, 1.0], 2.0).unwrap();
        assert!(close(exact, 2f64.sqrt()));
        assert!(exact <= d.proxy && d.proxy <= 4.0 * exact);

        let mut e1 = vec![0.0; 7];
        e1[0] = 1.0;
        for p in [1, 2, 5, 9] {
            assert_eq!(bernoulli_norm_proxy(&e1, p).unwrap().proxy, 1.0);
        }

        let d = bernoulli_norm_proxy(&[1.0; 4], 1).unwrap();
        assert!(close(d.proxy, 1.0 + 3f64.sqrt()));
        let exact = bernoulli_norm_exact(&[1.0; 4], 1.0).unwrap();
        assert!(close(exact, 1.5));

        assert!(matches!(
            bernoulli_norm_proxy(&[1.0], 0),
            Err(Error::Parameter { field: "p", .. })
        ));
    }

    #[test]
    fn gaussian_examples() {
        let t = [3.0, 4.0];
        assert_eq!(gaussian_norm_exact(&t, 2).unwrap(), 5.0);
        assert!(close(gaussian_norm_exact(&t, 4).unwrap(), 5.0 * 3f64.powf(0.25)));
        assert!(close(
            gaussian_norm_exact(&t, 1).unwrap(),
            5.0 * (2.0 / std::f64::consts::PI).sqrt()
        ));
        // odd and even routes agree around the switch-over
        assert!(close(gaussian_moment_constant(6.0), 15f64.powf(1.0 / 6.0)));
        let via_gamma = {
            let p = 6.0f64;
            let lm = 0.5 * p * std::f64::consts::LN_2 + ln_gamma(3.5)
                - 0.5 * std::f64::consts::PI.ln();
            (lm / p).exp()
        };
        assert!(close(gaussian_moment_constant(6.0), via_gamma));
        // E|g|^3 = 2√(2/π)
        let m3 = (2.0 * (2.0 / std::f64::consts::PI).sqrt()).powf(1.0 / 3.0);
        assert!(close(gaussian_moment_constant(3.0), m3));
    }

    #[test]
    fn exact_bernoulli_examples() {
        assert!(close(bernoulli_norm_exact(&[1.0, 1.0], 1.0).unwrap(), 1.0));
        for p in [1.0, 2.0, 3.5, 8.0] {
            assert!(close(bernoulli_norm_exact(&[-2.5], p).unwrap(), 2.5));
        }
        assert_eq!(bernoulli_norm_exact(&[0.0, 0.0], 3.0).unwrap(), 0.0);
        let big = vec![1.0; D_MAX + 1];
        assert!(matches!(bernoulli_norm_exact(&big, 2.0), Err(Error::Capacity { .. })));
    }

    #[test]
    fn exact_bernoulli_matches_naive_enumeration() {
        let t = [0.3, -1.2, 2.0, 0.7, -0.1];
        for p in [1.0, 2.0, 3.0, 4.5, 16.0] {
            let mut acc = 0.0;
            for mask in 0..32u32 {
                let s: f64 = t
                    .iter()
                    .enumerate()
                    .map(|(i, x)| if mask >> i & 1 == 1 { -x } else { *x })
                    .sum();
                acc += s.abs().powf(p);
            }
            let naive = (acc / 32.0).powf(1.0 / p);
            assert!(close(bernoulli_norm_exact(&t, p).unwrap(), naive), "p={p}");
        }
    }

    #[test]
    fn mc_norm_examples() {
        let (est, se) = mc_norm(ProcessKind::Gaussian, &[1.0, 0.0], 2, 100_000, Seed(5)).unwrap();
        assert!((est - 1.0).abs() <= 3.0 * se, "{est} ± {se}");
        let (est, se) = mc_norm(ProcessKind::Bernoulli, &[1.0, 1.0], 1, 100_000, Seed(5)).unwrap();
        assert!((est - 1.0).abs() <= 3.0 * se, "{est} ± {se}");
        let again = mc_norm(ProcessKind::Bernoulli, &[1.0, 1.0], 1, 100_000, Seed(5)).unwrap();
        assert_eq!(est.to_bits(), again.0.to_bits());
        assert!(mc_norm(ProcessKind::Gaussian, &[1.0], 2, 1, Seed(0)).is_err());
    }

    #[test]
    fn model_capacity() {
        assert!(MomentModel::BernoulliExact.check(21).is_err());
        assert!(MomentModel::BernoulliExact.check(20).is_ok());
        assert_eq!(
            MomentModel::default_for(ProcessKind::Bernoulli, 40),
            MomentModel::BernoulliProxy
        );
    }

    fn vec_strategy(max_d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(
            prop_oneof![Just(0.0), -5.0f64..5.0, Just(1.0), Just(-1.0)],
            1..=max_d,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 96, failure_persistence: None, ..ProptestConfig::default() })]

        #[test]
        fn sandwich_against_exact_oracle(t in vec_strategy(12), p in 1u32..=16) {
            let exact = bernoulli_norm_exact(&t, p as f64).unwrap();
            let proxy = bernoulli_norm_proxy(&t, p).unwrap().proxy;
            prop_assert!(exact <= proxy * (1.0 + 1e-12), "exact {} proxy {}", exact, proxy);
            prop_assert!(proxy <= 4.0 * exact * (1.0 + 1e-12), "exact {} proxy {}", exact, proxy);
        }

        #[test]
        fn kahane_regularity(t in vec_strategy(12), q in prop::sample::select(vec![2.0f64, 4.0, 8.0])) {
            let lo = bernoulli_norm_exact(&t, q).unwrap();
            let hi = bernoulli_norm_exact(&t, 2.0 * q).unwrap();
            prop_assert!(hi <= 3f64.sqrt() * lo * (1.0 + 1e-12));
        }

        #[test]
        fn proxy_doubling(t in prop::collection::vec(-10.0f64..10.0, 1..=64), p in 1u32..=32) {
            let a = bernoulli_norm_proxy(&t, p).unwrap().proxy;
            let b = bernoulli_norm_proxy(&t, 2 * p).unwrap().proxy;
            prop_assert!(b <= (1.0 + 2f64.sqrt()) * a * (1.0 + 1e-12));
        }

        #[test]
        fn proxy_dominates_l2(t in prop::collection::vec(-10.0f64..10.0, 1..=64), p in 1u32..=80) {
            let l2 = t.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(bernoulli_norm_proxy(&t, p).unwrap().proxy >= l2 * (1.0 - 1e-12));
        }

        #[test]
        fn monotone_in_p(t in prop::collection::vec(-10.0f64..10.0, 1..=40), p in 0usize..45) {
            prop_assert!(ell1_part(&t, p) <= ell1_part(&t, p + 1));
            prop_assert!(tail_l2(&t, p + 1) <= tail_l2(&t, p));
        }

        #[test]
        fn permutation_and_sign_invariance(
            t in vec_strategy(10),
            rot in 0usize..10,
            flips in prop::collection::vec(any::<bool>(), 10),
            p in 1u32..=6,
        ) {
            let mut u = t.clone();
            let r = rot % u.len();
            u.rotate_left(r);
            for (x, f) in u.iter_mut().zip(&flips) {
                if *f { *x = -*x; }
            }
            prop_assert_eq!(rearrange(&t), rearrange(&u));
            prop_assert!(close(ell1_part(&t, p as usize), ell1_part(&u, p as usize)));
            prop_assert!(close(tail_l2(&t, p as usize), tail_l2(&u, p as usize)));
            prop_assert!(close(bernoulli_norm_proxy(&t, p).unwrap().proxy, bernoulli_norm_proxy(&u, p).unwrap().proxy));
            prop_assert!(close(bernoulli_norm_exact(&t, p as f64).unwrap(), bernoulli_norm_exact(&u, p as f64).unwrap()));
            prop_assert!(close(gaussian_norm_exact(&t, p).unwrap(), gaussian_norm_exact(&u, p).unwrap()));
        }

        #[test]
        fn homogeneity(t in vec_strategy(10), c in -4.0f64..4.0, p in 1u32..=8) {
            let ct: Vec<f64> = t.iter().map(|x| c * x).collect();
            let a = c.abs();
            prop_assert!(close(ell1_part(&ct, p as usize), a * ell1_part(&t, p as usize)));
            prop_assert!(close(tail_l2(&ct, p as usize), a * tail_l2(&t, p as usize)));
            prop_assert!(close(bernoulli_norm_proxy(&ct, p).unwrap().proxy, a * bernoulli_norm_proxy(&t, p).unwrap().proxy));
            prop_assert!(close(bernoulli_norm_exact(&ct, p as f64).unwrap(), a * bernoulli_norm_exact(&t, p as f64).unwrap()));
            prop_assert!(close(gaussian_norm_exact(&ct, p).unwrap(), a * gaussian_norm_exact(&t, p).unwrap()));
        }
    }

    #[test]
    fn gaussian_kahane_constant() {
        for q in [2.0, 4.0, 8.0, 16.0] {
            assert!(gaussian_moment_constant(2.0 * q) <= 3f64.sqrt() * gaussian_moment_constant(q));
        }
    }
}
