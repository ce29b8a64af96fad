//! The acceptance suite: ten seeded checks of the inequalities implemented by
//! this crate against exact oracles, each producing an auditable record.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::chaining::{
    build_partition_greedy, chain_bound, combine_sum_set, exhaustive_gamma, verify_chain_bound,
};
use crate::contraction::{check_condition, compare_suprema, fit_min_c, CoordinateMap, MappedPair};
use crate::decomposition::{
    decompose_by_sweep, pairwise_disjoint_supports, threshold_split, verify_two_sided, SweepOptions,
};
use crate::domain::{generate_set, FiniteSet, Point, ProcessKind, Seed, SetKind};
use crate::error::Result;
use crate::moments::{
    bernoulli_norm_exact, bernoulli_norm_proxy, gaussian_moment_constant, gaussian_norm_exact,
    mc_norm, MomentModel,
};
use crate::report::Envelope;
use crate::rng::Stream;
use crate::suprema::{brute_force_bernoulli_sup, mc_sup};

/// Relative allowance for floating-point rounding in exact comparisons.
pub const ROUNDING: f64 = 1e-12;

pub const CRITERIA: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SuiteConfig {
    pub seed: Seed,
    /// Monte Carlo sample size for criteria 3 and 9.
    pub mc_samples: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: Seed(0),
            mc_samples: 100_000,
        }
    }
}

impl SuiteConfig {
    fn seed(&self, criterion: u64, k: u64) -> Seed {
        Seed(self.seed.0.wrapping_mul(0x100_0000).wrapping_add(criterion << 16 | k))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub checks: usize,
    pub violations: usize,
    /// Observed extremes (largest ratios against the asserted constant,
    /// ranges of reported quantities).
    pub observed: BTreeMap<String, f64>,
    /// First violation, if any.
    pub first_failure: Option<String>,
}

struct Tally {
    checks: usize,
    violations: usize,
    observed: BTreeMap<String, f64>,
    first_failure: Option<String>,
}

impl Tally {
    fn new() -> Self {
        Tally {
            checks: 0,
            violations: 0,
            observed: BTreeMap::new(),
            first_failure: None,
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(what());
            }
        }
    }

    fn max(&mut self, key: &str, v: f64) {
        let e = self.observed.entry(key.into()).or_insert(f64::NEG_INFINITY);
        *e = e.max(v);
    }

    fn min(&mut self, key: &str, v: f64) {
        let e = self.observed.entry(key.into()).or_insert(f64::INFINITY);
        *e = e.min(v);
    }

    fn finish(self, id: usize, name: &'static str) -> CriterionOutcome {
        CriterionOutcome {
            id,
            name,
            passed: self.violations == 0,
            checks: self.checks,
            violations: self.violations,
            observed: self.observed,
            first_failure: self.first_failure,
        }
    }
}

fn le(a: f64, b: f64) -> bool {
    a <= b + ROUNDING * b.abs()
}

/// Fifty vectors in `ℝ^12` cycling through Gaussian, uniform, sparse, flat,
/// heavy-tailed and geometrically decaying coordinates.
pub fn moment_corpus(seed: Seed) -> Vec<Vec<f64>> {
    const D: usize = 12;
    (0..50u64)
        .map(|k| {
            let mut s = Stream::new(seed, "moment_corpus", k);
            let mut t: Vec<f64> = match k % 6 {
                0 => (0..D).map(|_| s.normal()).collect(),
                1 => (0..D).map(|_| 2.0 * s.uniform() - 1.0).collect(),
                2 => {
                    let mut t = vec![0.0; D];
                    for _ in 0..3 {
                        t[s.below(D as u64) as usize] = s.normal();
                    }
                    t
                }
                3 => (0..D).map(|_| s.sign()).collect(),
                4 => (0..D).map(|_| s.normal() / (s.uniform() + 0.01)).collect(),
                _ => (0..D).map(|i| s.sign() * 0.5f64.powi(i as i32)).collect(),
            };
            if t.iter().all(|&x| x == 0.0) {
                t[0] = 1.0;
            }
            t
        })
        .collect()
}

fn moment_sandwich(cfg: &SuiteConfig) -> Result<CriterionOutcome> {
    let mut tally = Tally::new();
    for (k, t) in moment_corpus(cfg.seed(1, 0)).iter().enumerate() {
        for p in [1u32, 2, 3, 4, 8, 16] {
            let exact = bernoulli_norm_exact(t, p as f64)?;
            let proxy = bernoulli_norm_proxy(t, p)?.proxy;
            tally.check(le(exact, proxy) && le(proxy, 4.0 * exact), || {
                format!("vector {k}, p = {p}: exact {exact}, proxy {proxy}")
            });
            tally.max("max_proxy_over_exact", proxy / exact);
            tally.min("min_proxy_over_exact", proxy / exact);
        }
    }
    Ok(tally.finish(1, "moment sandwich: exact <= proxy <= 4 exact"))
}

fn kahane(cfg: &SuiteConfig) -> Result<CriterionOutcome> {
    let mut tally = Tally::new();
    let sqrt3 = 3f64.sqrt();
    for (k, t) in moment_corpus(cfg.seed(1, 0)).iter().enumerate() {
        for q in [2.0, 4.0, 8.0] {
            let lo = bernoulli_norm_exact(t, q)?;
            let hi = bernoulli_norm_exact(t, 2.0 * q)?;
            tally.check(le(hi, sqrt3 * lo), || format!("vector {k}, q = {q}: {hi} > sqrt3 * {lo}"));
            tally.max("max_bernoulli_ratio", hi / lo);
        }
    }
    for q in [2.0, 4.0, 8.0, 16.0] {
        let r = gaussian_moment_constant(2.0 * q) / gaussian_moment_constant(q);
        tally.check(le(r, sqrt3), || format!("gaussian q = {q}: ratio {r}"));
        tally.max("max_gaussian_ratio", r);
    }
    Ok(tally.finish(2, "moment regularity: |B_t|_2q <= sqrt3 |B_t|_q"))
}

/// Twenty random sets in `ℝ^12` with 32 points plus simplex, cube and
/// disjoint-block sets.
pub fn chaining_corpus(cfg: &SuiteConfig) -> Result<Vec<FiniteSet>> {
    let mut sets = Vec::new();
    for k in 0..20 {
        let seed = cfg.seed(3, k);
        sets.push(match k % 2 {
            0 => generate_set(SetKind::RandomSphere, 12, 32, seed, &[1.0])?,
            _ => generate_set(SetKind::EllipsoidSample, 12, 32, seed, &[1.0])?,
        });
    }
    sets.push(generate_set(SetKind::SimplexVertices, 12, 12, cfg.seed(3, 100), &[])?);
    sets.push(generate_set(SetKind::CubeVertices, 12, 32, cfg.seed(3, 101), &[])?);
    sets.push(generate_set(SetKind::DisjointBlocks, 12, 4, cfg.seed(3, 102), &[3.0, 0.7])?);
    Ok(sets)
}

fn sup_vs_chain_bound(cfg: &SuiteConfig) -> Result<CriterionOutcome> {
    let mut tally = Tally::new();
    for (k, set) in chaining_corpus(cfg)?.iter().enumerate() {
        let b = verify_chain_bound(set, ProcessKind::Bernoulli, cfg.mc_samples, cfg.seed(3, 200 + k as u64))?;
        tally.check(!b.violation && le(b.lhs.value, 4.0 * b.rhs.value), || {
            format!("{}: S_B {} > 4 * {}", set.name(), b.lhs.value, b.rhs.value)
        });
        tally.max("max_bernoulli_ratio", b.ratio);
        let g = verify_chain_bound(set, ProcessKind::Gaussian, cfg.mc_samples, cfg.seed(3, 300 + k as u64))?;
        tally.check(!g.violation, || {
            format!("{}: S_G {} ± {} > 4 * {}", set.name(), g.lhs.value, g.lhs.stderr, g.rhs.value)
        });
        tally.max("max_gaussian_ratio", g.ratio);
    }
    Ok(tally.finish(3, "sup <= 4 * greedy chain bound"))
}

/// Thirty sets of one to four points in dimensions 2 to 6.
pub fn small_corpus(cfg: &SuiteConfig) -> Result<Vec<FiniteSet>> {
    (0..30u64)
        .map(|k| {
            let n = 1 + (k % 4) as usize;
            let d = 2 + (k % 5) as usize;
            let kind = if k % 3 == 0 { SetKind::EllipsoidSample } else { SetKind::RandomSphere };
            generate_set(kind, d, n, cfg.seed(4, k), &[1.0 + (k % 2) as f64])
        })
        .collect()
}

fn exhaustive_dominance(cfg: &SuiteConfig) -> Result<CriterionOutcome> {
    let mut tally = Tally::new();
    for set in small_corpus(cfg)? {
        let tree = build_partition_greedy(&set);
        for model in [MomentModel::GaussianExact, MomentModel::BernoulliExact] {
            let best = exhaustive_gamma(&set, model)?.value;
            let greedy = chain_bound(&set, &tree, model)?.value;
            tally.check(le(best, greedy), || format!("{}: exhaustive {best} > greedy {greedy}", set.name()));
            if greedy > 0.0 {
                tally.min("min_exhaustive_over_greedy", best / greedy);
            }
        }
        if set.len() == 2 {
            let best = exhaustive_gamma(&set, MomentModel::GaussianExact)?.value;
            let dist = set.point(0).dist2(set.point(1));
            let rel = (best - dist).abs() / dist;
            tally.check(rel <= ROUNDING, || format!("{}: two-point gamma {best} vs {dist}", set.name()));
            tally.max("max_two_point_rel_error", rel);
        }
    }
    Ok(tally.finish(4, "exhaustive gamma <= greedy bound"))
}

fn combiner(cfg: &SuiteConfig) -> Result<CriterionOutcome> {
    let mut tally = Tally::new();
    let sqrt3 = 3f64.sqrt();
    for k in 0..10u64 {
        let mut s = Stream::new(cfg.seed(5, k), "combiner_sizes", 0);
        let na = 2 + s.below(7) as usize;
        let nb = 2 + s.below(7) as usize;
        let a = generate_set(SetKind::RandomSphere, 8, na, cfg.seed(5, 100 + k), &[1.0])?;
        let b = generate_set(SetKind::EllipsoidSample, 8, nb, cfg.seed(5, 200 + k), &[0.5])?;
        let (ta, tb) = (build_partition_greedy(&a), build_partition_greedy(&b));
        let ga = chain_bound(&a, &ta, MomentModel::GaussianExact)?.value;
        let gb = chain_bound(&b, &tb, MomentModel::GaussianExact)?.value;
        let (sum, tree) = combine_sum_set(&a, &ta, &b, &tb)?;
        let g = chain_bound(&sum, &tree, MomentModel::GaussianExact)?.value;
        tally.check(le(g, sqrt3 * (ga + gb)), || format!("pair {k}: {g} > sqrt3 * ({ga} + {gb})"));
        tally.max("max_ratio_to_sum", g / (ga + gb));
    }
    Ok(tally.finish(5, "sum-set tree bound <= sqrt3 (bound A + bound B)"))
}

fn contraction_principle(cfg: &SuiteConfig) -> Result<CriterionOutcome> {
    let mut tally = Tally::new();
    let maps = [
        CoordinateMap::Abs,
        CoordinateMap::Clamp { bound: 1.0 },
        CoordinateMap::SoftThreshold { level: 0.5 },
    ];
    for k in 0..20u64 {
        let set = match k % 3 {
            0 => generate_set(SetKind::RandomSphere, 10, 16, cfg.seed(6, k), &[3.0])?,
            1 => generate_set(SetKind::EllipsoidSample, 10, 16, cfg.seed(6, k), &[0.5])?,
            _ => generate_set(SetKind::CubeVertices, 10, 16, cfg.seed(6, k), &[])?.scaled(1.5)?,
        };
        for map in maps {
            let pair = MappedPair::from_map(set.clone(), map)?;
            let cmp = compare_suprema(&pair, 2, Seed(0))?;
            let (img, src) = (cmp.lhs.value, cmp.rhs.value);
            tally.check(img <= src + ROUNDING * src.abs().max(1.0), || {
                format!("{} under {map:?}: {img} > {src}", set.name())
            });
            tally.max("max_sup_ratio", cmp.ratio);
            let cond = check_condition(&pair, 1.0, set.dim())?;
            tally.check(cond.holds, || format!("{} under {map:?}: condition fails at C = 1", set.name()));
        }
    }
    Ok(tally.finish(6, "contraction principle with constant 1"))
}

fn calibration(cfg: &SuiteConfig) -> Result<CriterionOutcome> {
    let mut tally = Tally::new();
    let base = generate_set(SetKind::RandomSphere, 8, 10, cfg.seed(7, 0), &[1.0])?;
    for c in [0.5, 1.0, 2.0, 5.0] {
        let pair = MappedPair::from_map(base.clone(), CoordinateMap::Scale { factor: c })?;
        let fit = fit_min_c(&pair, base.dim(), 1e-6)?;
        let want = f64::max(c.abs(), 1.0);
        let err = fit.c_star.map_or(f64::INFINITY, |got| (got - want).abs());
        tally.check(err <= 1e-4, || format!("scale {c}: c_star {:?}, expected {want}", fit.c_star));
        tally.max("max_abs_error", err);
    }
    // random coordinate stretches give pairs whose feasibility threshold
    // lies strictly inside [1, 6]
    let mut probe = Stream::new(cfg.seed(7, 1), "monotone_probes", 0);
    let pairs: Vec<MappedPair> = (0..5u64)
        .map(|k| {
            let set = generate_set(SetKind::RandomSphere, 6, 6, cfg.seed(7, 10 + k), &[1.0])?;
            let mut s = Stream::new(cfg.seed(7, 20 + k), "stretch", 0);
            let w: Vec<f64> = (0..set.dim()).map(|_| 0.5 + 2.5 * s.uniform()).collect();
            MappedPair::from_fn(set, |p| {
                Point::new(p.coords().iter().zip(&w).map(|(x, w)| x * w).collect()).expect("finite")
            })
        })
        .collect::<Result<_>>()?;
    let mut flips = 0.0;
    for i in 0..100 {
        let pair = &pairs[probe.below(pairs.len() as u64) as usize];
        let a = 1.0 + 5.0 * probe.uniform();
        let b = 1.0 + 5.0 * probe.uniform();
        let (lo, hi) = (a.min(b), a.max(b));
        let at_lo = check_condition(pair, lo, 6)?.holds;
        let at_hi = check_condition(pair, hi, 6)?.holds;
        if at_lo != at_hi {
            flips += 1.0;
        }
        tally.check(!at_lo || at_hi, || format!("probe {i}: feasible at {lo} but not at {hi}"));
    }
    tally.max("probes_straddling_threshold", flips);
    Ok(tally.finish(7, "minimal constant calibration and monotone feasibility"))
}

fn decomposition(cfg: &SuiteConfig) -> Result<CriterionOutcome> {
    let mut tally = Tally::new();
    for k in 0..20u64 {
        let set = generate_set(SetKind::DisjointBlocks, 64, 8, cfg.seed(8, k), &[8.0, 0.6])?;
        let r = decompose_by_sweep(&set, ProcessKind::Bernoulli, 20_000, cfg.seed(8, 100 + k), SweepOptions::default())?;
        let mut heads = Vec::new();
        let mut tails = Vec::new();
        for (j, t) in set.points().iter().enumerate() {
            let (h, s) = threshold_split(t, r.split.threshold_for(j));
            let rebuilt = h.add(&s);
            tally.check(rebuilt.coords() == t.coords(), || format!("{}: point {j} not reconstructed", set.name()));
            heads.push(h);
            tails.push(s);
        }
        tally.check(
            r.disjoint_supports && pairwise_disjoint_supports(&heads) && pairwise_disjoint_supports(&tails),
            || format!("{}: split breaks support disjointness", set.name()),
        );
        let grid_min = r.grid.iter().map(|g| g.objective).fold(f64::INFINITY, f64::min);
        tally.check(r.objective <= grid_min, || {
            format!("{}: objective {} above grid minimum {grid_min}", set.name(), r.objective)
        });
        let two = verify_two_sided(&set, &r)?;
        let lower = two.ratio;
        tally.check(r.k_emp.is_finite() && lower.is_finite(), || {
            format!("{}: k_emp {} or lower ratio {lower} not finite", set.name(), r.k_emp)
        });
        tally.min("k_emp_min", r.k_emp);
        tally.max("k_emp_max", r.k_emp);
        tally.min("lower_ratio_min", lower);
        tally.max("lower_ratio_max", lower);
    }
    Ok(tally.finish(8, "threshold decomposition structure"))
}

fn monte_carlo(cfg: &SuiteConfig) -> Result<CriterionOutcome> {
    let mut tally = Tally::new();
    for k in 0..10u64 {
        let mut s = Stream::new(cfg.seed(9, k), "mc_vector", 0);
        let t: Vec<f64> = (0..8).map(|_| s.normal()).collect();
        for p in [1u32, 2, 4] {
            let exact = gaussian_norm_exact(&t, p)?;
            let (est, se) = mc_norm(ProcessKind::Gaussian, &t, p, cfg.mc_samples, cfg.seed(9, 100 + k))?;
            let z = (est - exact).abs() / se;
            tally.check(z <= 3.0, || format!("vector {k}, p = {p}: {est} ± {se} vs {exact}"));
            tally.max("max_norm_z", z);
        }
    }
    let mut agree = 0;
    let mut worst = 0.0f64;
    for k in 0..100u64 {
        let set = generate_set(SetKind::RandomSphere, 10, 12, cfg.seed(9, 1000 + k), &[1.0])?;
        let exact = brute_force_bernoulli_sup(&set)?.value;
        let est = mc_sup(ProcessKind::Bernoulli, &set, 10_000, cfg.seed(9, 2000 + k))?;
        let z = (est.value - exact).abs() / est.stderr;
        worst = worst.max(z);
        if z <= 3.0 {
            agree += 1;
        }
    }
    tally.check(agree >= 99, || format!("mc_sup agreed in only {agree}/100 trials"));
    tally.max("sup_trials_agreeing", agree as f64);
    tally.max("max_sup_z", worst);
    Ok(tally.finish(9, "Monte Carlo against exact formulas"))
}

/// Runs criterion `id` in `1..=9`. Criterion 10 compares whole runs and is
/// produced by [`run_suite`].
pub fn run_criterion(id: usize, cfg: &SuiteConfig) -> Result<CriterionOutcome> {
    match id {
        1 => moment_sandwich(cfg),
        2 => kahane(cfg),
        3 => sup_vs_chain_bound(cfg),
        4 => exhaustive_dominance(cfg),
        5 => combiner(cfg),
        6 => contraction_principle(cfg),
        7 => calibration(cfg),
        8 => decomposition(cfg),
        9 => monte_carlo(cfg),
        _ => Err(crate::error::Error::param("criterion", format!("{id} is not in 1..=9"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub criteria: Vec<CriterionOutcome>,
    pub passed: bool,
}

fn envelope_bytes(cfg: &SuiteConfig, criteria: &[CriterionOutcome]) -> String {
    suite_envelope(
        cfg,
        SuiteReport {
            criteria: criteria.to_vec(),
            passed: criteria.iter().all(|c| c.passed),
        },
    )
    .to_json()
}

pub fn suite_envelope(cfg: &SuiteConfig, report: SuiteReport) -> Envelope<SuiteReport> {
    Envelope::new(
        "suite",
        serde_json::to_value(cfg).expect("config serializes"),
        Vec::new(),
        report,
    )
}

/// Runs criteria 1 to 9 twice and adds criterion 10: both runs must
/// serialize to identical bytes.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let first: Vec<CriterionOutcome> = (1..CRITERIA).map(|id| run_criterion(id, cfg)).collect::<Result<_>>()?;
    let second: Vec<CriterionOutcome> = (1..CRITERIA).map(|id| run_criterion(id, cfg)).collect::<Result<_>>()?;
    let (a, b) = (envelope_bytes(cfg, &first), envelope_bytes(cfg, &second));
    let mut tally = Tally::new();
    tally.check(a == b, || "two runs of the suite serialized differently".into());
    tally.max("report_bytes", a.len() as f64);
    let mut criteria = first;
    criteria.push(tally.finish(10, "determinism: byte-identical reruns"));
    let passed = criteria.iter().all(|c| c.passed);
    Ok(SuiteReport { criteria, passed })
}

impl CriterionOutcome {
    pub fn summary_line(&self) -> String {
        format!(
            "criterion {:>2} {}: {} ({} checks, {} violations)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.checks,
            self.violations
        )
    }
}
