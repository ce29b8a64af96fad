//! The `csup` command-line front end.
//!
//! Every subcommand writes one report envelope (JSON) or a flattened
//! `field,value` table (CSV). Exit codes: 0 success, 2 invalid input or
//! usage, 3 a checked inequality failed.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::chaining::{build_partition_greedy, chain_bound, exhaustive_gamma, verify_chain_bound};
use crate::contraction::{
    check_condition, compare_suprema, fit_min_c, CoordinateMap, MappedPair, DEFAULT_TOL,
};
use crate::decomposition::{decompose_by_sweep, verify_two_sided, SweepOptions};
use crate::domain::{generate_set, load_set, save_set, FiniteSet, ProcessKind, Seed, SetKind};
use crate::error::{Error, Result};
use crate::moments::{
    bernoulli_norm_exact, bernoulli_norm_proxy, gaussian_norm_exact, mc_norm, MomentModel, D_MAX,
};
use crate::oleszkiewicz::{
    check_trimmed_condition, strong_moment_ratio, weak_moment_constant, FunctionalSample,
    VectorSystem,
};
use crate::report::{Envelope, SetRef};
use crate::suite::{run_suite, suite_envelope, SuiteConfig, ROUNDING};
use crate::suprema::{brute_force_bernoulli_sup, sup_estimate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_ASSERTION: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "csup", version, about = "Suprema of canonical Bernoulli and Gaussian processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a finite index set and write it as JSON.
    Gen(GenArgs),
    /// Moment norms of a single vector: exact, proxy and Monte Carlo.
    Moments(MomentsArgs),
    /// Expected supremum of a process over a set.
    Sup(SupArgs),
    /// Chain bound of a set along a greedy (or exhaustive) partition tree.
    Gamma(GammaArgs),
    /// Check S(F) <= 4 * chain bound.
    #[command(name = "verify-t2")]
    VerifyT2(SupArgs),
    /// Fit the minimal constant of the trimmed contraction condition.
    Contract(ContractArgs),
    /// Threshold decomposition of a set by sweeping the split level.
    Decompose(DecomposeArgs),
    /// Weak and strong moments of two vector systems.
    Oleszkiewicz(OleArgs),
    /// Run the acceptance suite.
    Suite(SuiteArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Serialize)]
struct Output {
    /// Output format.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: SetKind,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Family parameter; repeat for several.
    #[arg(long = "param", allow_negative_numbers = true)]
    params: Vec<f64>,
    /// Destination set file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct MomentsArgs {
    /// Comma-separated coordinates of t.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required_unless_present = "set")]
    t: Vec<f64>,
    /// Take t from a set file instead.
    #[arg(long, conflicts_with = "t")]
    set: Option<PathBuf>,
    /// Index of the point in --set.
    #[arg(long, default_value_t = 0)]
    point: usize,
    /// Comma-separated moment orders.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    p: Vec<u32>,
    #[arg(long, value_enum, default_value = "bernoulli")]
    kind: ProcessKind,
    /// Also estimate each norm by Monte Carlo with this many samples.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct SupArgs {
    #[arg(long)]
    set: PathBuf,
    #[arg(long, value_enum, default_value = "bernoulli")]
    kind: ProcessKind,
    /// Require exact enumeration (Bernoulli, dimension <= 20).
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModelArg {
    BernoulliExact,
    BernoulliProxy,
    GaussianExact,
}

impl From<ModelArg> for MomentModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::BernoulliExact => MomentModel::BernoulliExact,
            ModelArg::BernoulliProxy => MomentModel::BernoulliProxy,
            ModelArg::GaussianExact => MomentModel::GaussianExact,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct GammaArgs {
    #[arg(long)]
    set: PathBuf,
    #[arg(long, value_enum, default_value = "gaussian-exact")]
    model: ModelArg,
    /// Also search all trees of depth <= 3 (sets of at most 5 points).
    #[arg(long)]
    exhaustive: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct ContractArgs {
    #[arg(long)]
    set: PathBuf,
    /// Coordinate map: abs, clamp[:a], soft[:level] or scale:c.
    #[arg(long)]
    map: String,
    /// Largest p checked (defaults to the dimension).
    #[arg(long)]
    p_max: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Assert the condition at this constant (exit 3 when it fails).
    #[arg(long)]
    c: Option<f64>,
    /// Assert S_B(phi(T)) <= S_B(T) (exit 3 when it fails).
    #[arg(long)]
    assert_contraction: bool,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct DecomposeArgs {
    #[arg(long)]
    set: PathBuf,
    /// Process used for the reference supremum.
    #[arg(long, value_enum, default_value = "bernoulli")]
    kind: ProcessKind,
    /// Refine the global threshold point by point.
    #[arg(long)]
    per_point: bool,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct OleArgs {
    /// System x_1..x_n.
    #[arg(long)]
    x: PathBuf,
    /// System y_1..y_n.
    #[arg(long)]
    y: PathBuf,
    /// Random functionals on top of the extreme points.
    #[arg(long, default_value_t = 64)]
    functionals: usize,
    #[arg(long, default_value_t = 8)]
    p_max: u32,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct SuiteArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo samples for the sampled criteria.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[command(flatten)]
    output: Output,
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// code. Reports go to `--out` or stdout, diagnostics to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

struct Outcome {
    envelope: Value,
    passed: bool,
}

fn dispatch(command: Command) -> Result<i32> {
    let (outcome, output) = match command {
        Command::Gen(a) => return gen(a),
        Command::Moments(a) => (moments(&a)?, a.output),
        Command::Sup(a) => (sup(&a)?, a.output),
        Command::Gamma(a) => (gamma(&a)?, a.output),
        Command::VerifyT2(a) => (verify_t2(&a)?, a.output),
        Command::Contract(a) => (contract(&a)?, a.output),
        Command::Decompose(a) => (decompose(&a)?, a.output),
        Command::Oleszkiewicz(a) => (ole(&a)?, a.output),
        Command::Suite(a) => (suite(&a)?, a.output),
    };
    let text = match output.format {
        Format::Json => serde_json::to_string_pretty(&outcome.envelope).expect("report serializes") + "\n",
        Format::Csv => to_csv(&outcome.envelope),
    };
    write_out(output.out.as_deref(), &text)?;
    Ok(if outcome.passed { EXIT_OK } else { EXIT_ASSERTION })
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn finish<A: Serialize, R: Serialize>(
    command: &str,
    args: &A,
    inputs: Vec<SetRef>,
    result: R,
    passed: bool,
) -> Outcome {
    let env = Envelope::new(command, serde_json::to_value(args).expect("args serialize"), inputs, result);
    Outcome {
        envelope: serde_json::to_value(&env).expect("report serializes"),
        passed,
    }
}

fn gen(a: GenArgs) -> Result<i32> {
    let set = generate_set(a.kind, a.dim, a.count, Seed(a.seed), &a.params)?;
    match &a.out {
        Some(path) => save_set(&set, path)?,
        None => println!("{}", set.to_json()),
    }
    Ok(EXIT_OK)
}

fn moments(a: &MomentsArgs) -> Result<Outcome> {
    let (t, inputs) = match &a.set {
        Some(path) => {
            let set = load_set(path)?;
            if a.point >= set.len() {
                return Err(Error::param("point", format!("set has {} points", set.len())));
            }
            (set.point(a.point).coords().to_vec(), vec![SetRef::from(&set)])
        }
        None => (a.t.clone(), Vec::new()),
    };
    let t = crate::domain::Point::new(t)?.into_coords();
    if a.p.is_empty() || a.p.contains(&0) {
        return Err(Error::param("p", "orders must be at least 1"));
    }
    let mut rows = Vec::new();
    let mut passed = true;
    for &p in &a.p {
        let mut row = json!({ "p": p });
        match a.kind {
            ProcessKind::Bernoulli => {
                let proxy = bernoulli_norm_proxy(&t, p)?;
                row["ell1_part"] = json!(proxy.ell1_part);
                row["tail_l2"] = json!(proxy.tail_l2);
                row["proxy"] = json!(proxy.proxy);
                if t.len() <= D_MAX {
                    let exact = bernoulli_norm_exact(&t, p as f64)?;
                    let ok = exact <= proxy.proxy * (1.0 + ROUNDING) && proxy.proxy <= 4.0 * exact * (1.0 + ROUNDING);
                    passed &= ok;
                    row["exact"] = json!(exact);
                    row["sandwich_holds"] = json!(ok);
                }
            }
            ProcessKind::Gaussian => {
                row["exact"] = json!(gaussian_norm_exact(&t, p)?);
            }
        }
        if let Some(samples) = a.samples {
            let (est, se) = mc_norm(a.kind, &t, p, samples, Seed(a.seed))?;
            row["mc"] = json!(est);
            row["mc_stderr"] = json!(se);
        }
        rows.push(row);
    }
    Ok(finish("moments", a, inputs, json!({ "kind": a.kind, "norms": rows }), passed))
}

fn sup_of(a: &SupArgs, set: &FiniteSet) -> Result<crate::suprema::SupEstimate> {
    if a.exact {
        if a.kind != ProcessKind::Bernoulli {
            return Err(Error::param("exact", "exact enumeration is available for the Bernoulli process only"));
        }
        brute_force_bernoulli_sup(set)
    } else {
        sup_estimate(a.kind, set, a.samples, Seed(a.seed))
    }
}

fn sup(a: &SupArgs) -> Result<Outcome> {
    let set = load_set(&a.set)?;
    let est = sup_of(a, &set)?;
    Ok(finish("sup", a, vec![SetRef::from(&set)], json!({ "kind": a.kind, "sup": est }), true))
}

fn gamma(a: &GammaArgs) -> Result<Outcome> {
    let set = load_set(&a.set)?;
    let model = MomentModel::from(a.model);
    let tree = build_partition_greedy(&set);
    let greedy = chain_bound(&set, &tree, model)?;
    let mut result = json!({
        "model": a.model,
        "greedy_bound": greedy.value,
        "tree_depth": tree.depth(),
        "blocks_per_level": tree.levels.iter().map(Vec::len).collect::<Vec<_>>(),
        "per_point_sums": greedy.per_point_sums,
    });
    if a.exhaustive {
        result["exhaustive_bound"] = json!(exhaustive_gamma(&set, model)?.value);
    }
    Ok(finish("gamma", a, vec![SetRef::from(&set)], result, true))
}

fn verify_t2(a: &SupArgs) -> Result<Outcome> {
    let set = load_set(&a.set)?;
    if a.exact && (a.kind != ProcessKind::Bernoulli || set.dim() > D_MAX) {
        return Err(Error::param("exact", "exact enumeration needs the Bernoulli process and dimension <= 20"));
    }
    let report = verify_chain_bound(&set, a.kind, a.samples, Seed(a.seed))?;
    let passed = !report.violation;
    Ok(finish("verify-t2", a, vec![SetRef::from(&set)], report, passed))
}

fn contract(a: &ContractArgs) -> Result<Outcome> {
    let set = load_set(&a.set)?;
    let map = CoordinateMap::parse(&a.map)?;
    let pair = MappedPair::from_map(set.clone(), map)?;
    let p_max = a.p_max.unwrap_or(set.dim());
    let fit = fit_min_c(&pair, p_max, a.tol)?;
    let suprema = compare_suprema(&pair, a.samples, Seed(a.seed))?;
    let mut passed = true;
    let mut result = json!({ "map": map, "fit": fit, "suprema": suprema });
    if let Some(c) = a.c {
        let check = check_condition(&pair, c, p_max)?;
        passed &= check.holds;
        result["check"] = json!(check);
    }
    if a.assert_contraction {
        let src = suprema.rhs.value;
        passed &= suprema.lhs.value <= src + ROUNDING * src.abs().max(1.0) + 3.0 * (suprema.lhs.stderr + suprema.rhs.stderr);
    }
    Ok(finish("contract", a, vec![SetRef::from(&pair.source), SetRef::from(&pair.image)], result, passed))
}

fn decompose(a: &DecomposeArgs) -> Result<Outcome> {
    let set = load_set(&a.set)?;
    let r = decompose_by_sweep(&set, a.kind, a.samples, Seed(a.seed), SweepOptions { per_point: a.per_point })?;
    let two_sided = verify_two_sided(&set, &r)?;
    Ok(finish(
        "decompose",
        a,
        vec![SetRef::from(&set)],
        json!({ "decomposition": r, "two_sided": two_sided }),
        true,
    ))
}

fn ole(a: &OleArgs) -> Result<Outcome> {
    let x = VectorSystem::load(&a.x)?;
    let y = VectorSystem::load(&a.y)?;
    let funcs = FunctionalSample::generate(x.norm, x.dim(), a.functionals, Seed(a.seed))?;
    let weak = weak_moment_constant(&x, &y, &funcs, a.p_max)?;
    let trimmed = check_trimmed_condition(&x, &y, &funcs, a.p_max as usize, a.tol)?;
    let strong = strong_moment_ratio(&x, &y, a.samples, Seed(a.seed))?;
    let inputs = strong.inputs.clone();
    let result = json!({
        "functionals": funcs.len(),
        "weak_moments": weak,
        "trimmed_condition": trimmed,
        "strong_moments": strong,
    });
    Ok(finish("oleszkiewicz", a, inputs, result, true))
}

fn suite(a: &SuiteArgs) -> Result<Outcome> {
    let cfg = SuiteConfig {
        seed: Seed(a.seed),
        mc_samples: a.samples,
    };
    let report = run_suite(&cfg)?;
    for c in &report.criteria {
        eprintln!("{}", c.summary_line());
    }
    let passed = report.passed;
    Ok(Outcome {
        envelope: serde_json::to_value(suite_envelope(&cfg, report)).expect("report serializes"),
        passed,
    })
}

/// Flattens a JSON document into `field,value` rows with dotted paths.
fn to_csv(v: &Value) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                for (k, v) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, v, out);
                }
            }
            Value::Array(items) => {
                for (i, v) in items.iter().enumerate() {
                    walk(&format!("{prefix}.{i}"), v, out);
                }
            }
            Value::String(s) => out.push_str(&format!("{prefix},\"{}\"\n", s.replace('"', "\"\""))),
            Value::Null => out.push_str(&format!("{prefix},\n")),
            other => out.push_str(&format!("{prefix},{other}\n")),
        }
    }
    let mut out = String::from("field,value\n");
    walk("", v, &mut out);
    out
}
