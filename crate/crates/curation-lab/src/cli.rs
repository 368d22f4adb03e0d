//! Experiment specs and the batch runners behind the `curation-lab` binary.
//!
//! A spec is flat `key = value` text (one pair per line, `#` comments).
//! [`parse_spec`] validates it into an [`ExperimentSpec`]; [`execute`]
//! dispatches to one of three runners:
//!
//! - `simulate` writes one trajectory table per seed plus a cross-seed
//!   aggregate of the expected reward,
//! - `attack-bench` replays one retraining round per attack method on the
//!   same preference data and tabulates the post-round expected reward,
//! - `verify-bounds` runs the randomized bound suites and reports a
//!   machine-checkable verdict.
//!
//! Every output file is a pure function of (spec, seeds): runners draw all
//! randomness from seeded generators and formatting is plain `Display`, so
//! re-runs are byte-identical. Summary files are written last; if a run
//! dies midway the missing summary marks the output directory as partial.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attack::{
    gradient_attack, heuristic_rank, pareto_attack, random_attack, AttackConfig, FlipMask,
    HeuristicMode, ParetoSelection,
};
use crate::curation::{
    covariance_floor, curate_monte_carlo, finite_k_moment_bounds_with, kinf_moment_bounds,
    mixed_update, update_exact_kinf, CurationConfig, SyntheticWeight,
};
use crate::dist::{
    cov_exp_rewards, expect_exp_reward, expect_reward, DiscreteDistribution, RewardFunction,
    SupportPoint,
};
use crate::error::{Error, Result};
use crate::preference::{fit_mle, gen_labels_deterministic, LinearRewardModel, PreferenceDataset};
use crate::sim::{
    build_environment, check_bounds, refit_on_flips, run_exact_retraining, run_retraining,
    AttackMethod, Environment, LoopConfig,
};

/// Tolerance used by the verification suites when comparing an observed
/// moment against a bound.
const BOUND_TOL: f64 = 1e-9;

/// What a spec asks the binary to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    AttackBench,
    VerifyBounds,
}

impl std::fmt::Display for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Command::Simulate => "simulate",
            Command::AttackBench => "attack-bench",
            Command::VerifyBounds => "verify-bounds",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulate" => Ok(Command::Simulate),
            "attack-bench" => Ok(Command::AttackBench),
            "verify-bounds" => Ok(Command::VerifyBounds),
            other => Err(Error::Spec(format!("unknown command \"{other}\""))),
        }
    }
}

/// A fully validated experiment description.
///
/// `methods` is only consulted by `attack-bench`; `instances` only by
/// `verify-bounds`. Feature-map overrides have no config syntax and stay
/// at their environment defaults when running from a spec file.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub command: Command,
    pub env: Environment,
    pub loop_cfg: LoopConfig,
    pub methods: Vec<AttackMethod>,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub instances: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.loop_cfg.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Spec("seeds must name at least one seed".into()));
        }
        if self.instances == 0 {
            return Err(Error::Spec("instances must be at least 1".into()));
        }
        if self.command == Command::AttackBench && self.methods.len() < 2 {
            return Err(Error::Spec(format!(
                "attack-bench compares methods, so \"methods\" must name at least 2 (got {})",
                self.methods.len()
            )));
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse::<T>().map_err(|_| {
        Error::Spec(format!("key \"{key}\": cannot parse \"{value}\" as a number"))
    })
}

/// Parses and validates flat `key = value` spec text.
///
/// Unknown keys, duplicate keys, malformed lines, and out-of-range values
/// are all errors that name the offending key or line. Missing keys other
/// than `command` fall back to documented defaults.
pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    let mut command: Option<Command> = None;
    let mut env_kind: Option<String> = None;
    let mut classes: Option<usize> = None;
    let mut radius: Option<f64> = None;
    let mut sigma: Option<f64> = None;
    let mut tau: Option<f64> = None;
    let mut gamma: Option<f64> = None;
    let mut mu_star_x: Option<f64> = None;
    let mut mu_star_y: Option<f64> = None;
    let mut cfg = LoopConfig::default();
    let mut methods: Vec<AttackMethod> = Vec::new();
    let mut seeds: Vec<u64> = vec![0];
    let mut out: Option<PathBuf> = None;
    let mut instances: usize = 200;

    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Spec(format!("line {lineno}: expected \"key = value\", got \"{line}\""))
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Spec(format!("line {lineno}: empty key or value")));
        }
        if !seen.insert(key.to_string()) {
            return Err(Error::Spec(format!("duplicate key \"{key}\" (line {lineno})")));
        }
        match key {
            "command" => command = Some(value.parse()?),
            "environment" => match value {
                "classes" | "gaussian8" => env_kind = Some(value.to_string()),
                other => {
                    return Err(Error::Spec(format!(
                        "environment \"{other}\" is not \"classes\" or \"gaussian8\""
                    )))
                }
            },
            "classes" => classes = Some(parse_num(key, value)?),
            "radius" => radius = Some(parse_num(key, value)?),
            "sigma" => sigma = Some(parse_num(key, value)?),
            "tau" => tau = Some(parse_num(key, value)?),
            "gamma" => gamma = Some(parse_num(key, value)?),
            "mu_star_x" => mu_star_x = Some(parse_num(key, value)?),
            "mu_star_y" => mu_star_y = Some(parse_num(key, value)?),
            "iterations" => cfg.iterations = parse_num(key, value)?,
            "n_gen" => cfg.n_gen = parse_num(key, value)?,
            "beta" => cfg.beta = parse_num(key, value)?,
            "pairs_per_iter" => cfg.pairs_per_iter = parse_num(key, value)?,
            "atoms_per_mode" => cfg.atoms_per_mode = parse_num(key, value)?,
            "phi" => {
                let phi: f64 = parse_num(key, value)?;
                if !(0.0..=1.0).contains(&phi) {
                    return Err(Error::Spec(format!("phi = {phi} is outside [0, 1]")));
                }
                cfg.curation.phi = phi;
            }
            "k" => cfg.curation.k = parse_num(key, value)?,
            "lambda" => {
                cfg.curation.lambda = if value == "infinite" {
                    SyntheticWeight::Infinite
                } else {
                    let l: f64 = parse_num(key, value)?;
                    if l < 0.0 {
                        return Err(Error::Spec(format!("lambda = {l} must be >= 0")));
                    }
                    SyntheticWeight::Finite(l)
                };
            }
            "method" => cfg.method = value.parse()?,
            "preset" => cfg.preset = value.parse()?,
            "methods" => {
                methods = value
                    .split(',')
                    .map(|m| m.trim().parse::<AttackMethod>())
                    .collect::<Result<_>>()?;
            }
            "kappa" => {
                let kappa: f64 = parse_num(key, value)?;
                if !(0.0..=1.0).contains(&kappa) {
                    return Err(Error::Spec(format!("kappa = {kappa} is outside [0, 1]")));
                }
                cfg.attack.kappa = kappa;
            }
            "alpha" => cfg.attack.alpha = parse_num(key, value)?,
            "cov_batch" => cfg.attack.cov_batch = parse_num(key, value)?,
            "attack_lr" => cfg.attack.attack_lr = parse_num(key, value)?,
            "attack_iters" => cfg.attack.attack_iters = parse_num(key, value)?,
            "attack_seed" => cfg.attack.seed = parse_num(key, value)?,
            "learning_rate" => cfg.fit.learning_rate = parse_num(key, value)?,
            "max_iters" => cfg.fit.max_iters = parse_num(key, value)?,
            "l2_reg" => cfg.fit.l2_reg = parse_num(key, value)?,
            "grad_tol" => cfg.fit.grad_tol = parse_num(key, value)?,
            "pool_size" => cfg.pool_size = parse_num(key, value)?,
            "seeds" => {
                seeds = value
                    .split(',')
                    .map(|s| parse_num::<u64>(key, s))
                    .collect::<Result<_>>()?;
            }
            "out" => out = Some(PathBuf::from(value)),
            "instances" => instances = parse_num(key, value)?,
            other => return Err(Error::Spec(format!("unknown key \"{other}\""))),
        }
    }

    let command = command.ok_or_else(|| Error::Spec("missing required key \"command\"".into()))?;

    let env = match env_kind.as_deref().unwrap_or("classes") {
        "classes" => {
            for (k, v) in [
                ("radius", radius),
                ("sigma", sigma),
                ("tau", tau),
                ("gamma", gamma),
                ("mu_star_x", mu_star_x),
                ("mu_star_y", mu_star_y),
            ] {
                if v.is_some() {
                    return Err(Error::Spec(format!(
                        "key \"{k}\" applies to the gaussian8 environment"
                    )));
                }
            }
            Environment::classes(classes.unwrap_or(10))
        }
        _ => {
            if classes.is_some() {
                return Err(Error::Spec(
                    "key \"classes\" applies to the classes environment".into(),
                ));
            }
            let base = Environment::gaussian8();
            let (dr, ds, dmu, dt, dg) = match &base {
                Environment::Gaussian8 { radius, sigma, mu_star, tau, gamma } => {
                    (*radius, *sigma, mu_star.clone(), *tau, *gamma)
                }
                _ => unreachable!("gaussian8 constructor"),
            };
            Environment::Gaussian8 {
                radius: radius.unwrap_or(dr),
                sigma: sigma.unwrap_or(ds),
                mu_star: SupportPoint::new(vec![
                    mu_star_x.unwrap_or_else(|| dmu.coords()[0]),
                    mu_star_y.unwrap_or_else(|| dmu.coords()[1]),
                ])?,
                tau: tau.unwrap_or(dt),
                gamma: gamma.unwrap_or(dg),
            }
        }
    };

    let spec = ExperimentSpec { command, env, loop_cfg: cfg, methods, seeds, out, instances };
    spec.validate()?;
    Ok(spec)
}

/// Reads and parses a spec file.
pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path)?;
    parse_spec(&text)
}

/// What a runner produced: the files it wrote, in writing order, and
/// whether every mandatory verification passed (always true outside
/// `verify-bounds`).
#[derive(Debug, Clone)]
pub struct CliOutcome {
    pub files: Vec<PathBuf>,
    pub mandatory_ok: bool,
}

/// Runs the spec's command, writing into `out_dir`.
pub fn execute(spec: &ExperimentSpec, out_dir: &Path) -> Result<CliOutcome> {
    spec.validate()?;
    fs::create_dir_all(out_dir)?;
    match spec.command {
        Command::Simulate => run_simulate(spec, out_dir),
        Command::AttackBench => run_attack_bench(spec, out_dir),
        Command::VerifyBounds => run_verify_bounds(spec, out_dir),
    }
}

fn echo_config(spec: &ExperimentSpec) -> String {
    let cfg = &spec.loop_cfg;
    let mut s = String::new();
    let _ = writeln!(s, "command = {}", spec.command);
    match &spec.env {
        Environment::Classes { count } => {
            let _ = writeln!(s, "environment = classes");
            let _ = writeln!(s, "classes = {count}");
        }
        Environment::Gaussian8 { radius, sigma, mu_star, tau, gamma } => {
            let _ = writeln!(s, "environment = gaussian8");
            let _ = writeln!(s, "radius = {radius}");
            let _ = writeln!(s, "sigma = {sigma}");
            let _ = writeln!(s, "tau = {tau}");
            let _ = writeln!(s, "gamma = {gamma}");
            let _ = writeln!(s, "mu_star_x = {}", mu_star.coords()[0]);
            let _ = writeln!(s, "mu_star_y = {}", mu_star.coords()[1]);
        }
    }
    let _ = writeln!(s, "iterations = {}", cfg.iterations);
    let _ = writeln!(s, "n_gen = {}", cfg.n_gen);
    let _ = writeln!(s, "beta = {}", cfg.beta);
    let _ = writeln!(s, "pairs_per_iter = {}", cfg.pairs_per_iter);
    let _ = writeln!(s, "atoms_per_mode = {}", cfg.atoms_per_mode);
    let _ = writeln!(s, "phi = {}", cfg.curation.phi);
    let _ = writeln!(s, "k = {}", cfg.curation.k);
    match cfg.curation.lambda {
        SyntheticWeight::Infinite => {
            let _ = writeln!(s, "lambda = infinite");
        }
        SyntheticWeight::Finite(l) => {
            let _ = writeln!(s, "lambda = {l}");
        }
    }
    let _ = writeln!(s, "method = {}", cfg.method);
    let _ = writeln!(s, "preset = {}", cfg.preset);
    if !spec.methods.is_empty() {
        let names: Vec<String> = spec.methods.iter().map(|m| m.to_string()).collect();
        let _ = writeln!(s, "methods = {}", names.join(","));
    }
    let _ = writeln!(s, "kappa = {}", cfg.attack.kappa);
    let _ = writeln!(s, "alpha = {}", cfg.attack.alpha);
    let _ = writeln!(s, "cov_batch = {}", cfg.attack.cov_batch);
    let _ = writeln!(s, "attack_lr = {}", cfg.attack.attack_lr);
    let _ = writeln!(s, "attack_iters = {}", cfg.attack.attack_iters);
    let _ = writeln!(s, "attack_seed = {}", cfg.attack.seed);
    let _ = writeln!(s, "learning_rate = {}", cfg.fit.learning_rate);
    let _ = writeln!(s, "max_iters = {}", cfg.fit.max_iters);
    let _ = writeln!(s, "l2_reg = {}", cfg.fit.l2_reg);
    let _ = writeln!(s, "grad_tol = {}", cfg.fit.grad_tol);
    let _ = writeln!(s, "pool_size = {}", cfg.pool_size);
    if spec.command == Command::VerifyBounds {
        let _ = writeln!(s, "instances = {}", spec.instances);
    }
    let seeds: Vec<String> = spec.seeds.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(s, "seeds = {}", seeds.join(","));
    s
}

fn write_file(out_dir: &Path, name: &str, content: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = out_dir.join(name);
    fs::write(&path, content)?;
    files.push(path);
    Ok(())
}

fn population_stddev(values: &[f64], mean: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// `simulate`: one full retraining trajectory per seed.
pub fn run_simulate(spec: &ExperimentSpec, out_dir: &Path) -> Result<CliOutcome> {
    let mut files = Vec::new();
    let mut e_r_columns: Vec<Vec<f64>> = vec![Vec::new(); spec.loop_cfg.iterations];
    let mut finals = Vec::new();
    let mut monitor_lines = Vec::new();
    for &seed in &spec.seeds {
        let mut cfg = spec.loop_cfg.clone();
        cfg.seed = seed;
        let traj = run_retraining(&spec.env, &cfg)?;
        write_file(out_dir, &format!("trajectory_seed_{seed}.csv"), &traj.to_table(), &mut files)?;
        for (t, step) in traj.steps().iter().enumerate() {
            e_r_columns[t].push(step.e_r);
        }
        finals.push((seed, traj.last().expect("at least one iteration").e_r));
        let b = check_bounds(&traj);
        monitor_lines.push(format!(
            "  seed {seed}: sandwich {}/{}, floor {}/{}, horizon stated {}/{}, horizon proof-sum {}/{}",
            b.sandwich_ok,
            b.steps,
            b.cov_floor_ok,
            b.steps,
            b.horizon_stated_ok,
            b.horizon_stated_total,
            b.horizon_proofsum_ok,
            b.horizon_proofsum_total,
        ));
    }

    let mut agg = String::from("t,mean_E_r,stddev_E_r\n");
    let mut final_mean = 0.0;
    for (t, column) in e_r_columns.iter().enumerate() {
        let mean = column.iter().sum::<f64>() / column.len() as f64;
        let sd = population_stddev(column, mean);
        let _ = writeln!(agg, "{},{mean},{sd}", t + 1);
        final_mean = mean;
    }
    write_file(out_dir, "aggregate.csv", &agg, &mut files)?;

    let mut summary = String::from("simulate run\n============\n");
    summary.push_str(&echo_config(spec));
    summary.push_str("\nfinal E[r] per seed:\n");
    for (seed, e) in &finals {
        let _ = writeln!(summary, "  seed {seed}: {e}");
    }
    let _ = writeln!(summary, "mean final E[r] = {final_mean}");
    summary.push_str("\nbound monitors per seed (satisfied/total):\n");
    for line in &monitor_lines {
        summary.push_str(line);
        summary.push('\n');
    }
    summary.push_str("\nfiles:\n");
    for f in &files {
        let _ = writeln!(summary, "  {}", f.file_name().unwrap_or_default().to_string_lossy());
    }
    write_file(out_dir, "summary.txt", &summary, &mut files)?;
    Ok(CliOutcome { files, mandatory_ok: true })
}

struct BenchRun {
    e_p1_r: f64,
    mask: FlipMask,
    data: PreferenceDataset,
}

/// One retraining round for one (method, seed): same preference data per
/// seed across methods, method-specific corruption, then curation scored
/// by the fitted (possibly corrupted) reward model.
fn bench_one(spec: &ExperimentSpec, method: AttackMethod, seed: u64) -> Result<BenchRun> {
    let cfg = &spec.loop_cfg;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p_data, r_true) = build_environment(&spec.env, cfg.atoms_per_mode, &mut rng)?;
    let map = cfg.feature_map.clone().unwrap_or_else(|| spec.env.default_feature_map());
    let tilde_map = cfg.tilde_feature_map.clone().unwrap_or_else(|| map.clone());

    let points = p_data.sample(2 * cfg.pairs_per_iter, &mut rng)?;
    let mut pairs = Vec::with_capacity(cfg.pairs_per_iter);
    let mut it = points.into_iter();
    while let (Some(x), Some(z)) = (it.next(), it.next()) {
        pairs.push((x, z));
    }
    let data = gen_labels_deterministic(pairs, |x| r_true.eval_point(&p_data, x))?;

    let attack_cfg = AttackConfig { seed: cfg.attack.seed.wrapping_add(seed), ..cfg.attack.clone() };
    let (model, mask) = match method {
        AttackMethod::None => {
            let benign = fit_mle(&data, &LinearRewardModel::zeros(map.clone()), &cfg.fit)?;
            (benign, FlipMask::empty(data.len()))
        }
        AttackMethod::Gradient => {
            let batch = p_data.sample(cfg.attack.cov_batch, &mut rng)?;
            let out = gradient_attack(&data, &map, &tilde_map, &batch, &attack_cfg, &cfg.fit)?;
            (out.model_tilde, out.mask)
        }
        AttackMethod::Pareto => {
            let batch = p_data.sample(cfg.attack.cov_batch, &mut rng)?;
            let out = pareto_attack(
                &data,
                &map,
                &tilde_map,
                &batch,
                &attack_cfg,
                &cfg.fit,
                cfg.pool_size,
                ParetoSelection::MinSum,
            )?;
            (out.model_tilde, out.mask)
        }
        AttackMethod::HeuristicDiff | AttackMethod::HeuristicMaxAbs => {
            let mode = if method == AttackMethod::HeuristicDiff {
                HeuristicMode::Diff
            } else {
                HeuristicMode::MaxAbs
            };
            let benign = fit_mle(&data, &LinearRewardModel::zeros(map.clone()), &cfg.fit)?;
            let mask = heuristic_rank(&data, &benign, mode, cfg.attack.kappa)?;
            let tilde = refit_on_flips(&data, &mask, &benign, &map, &tilde_map, &cfg.fit)?;
            (tilde, mask)
        }
        AttackMethod::Random => {
            let benign = fit_mle(&data, &LinearRewardModel::zeros(map.clone()), &cfg.fit)?;
            let (mask, _) = random_attack(&data, cfg.attack.kappa, &mut rng)?;
            let tilde = refit_on_flips(&data, &mask, &benign, &map, &tilde_map, &cfg.fit)?;
            (tilde, mask)
        }
    };

    // The platform deploys whatever reward model came out of fitting, so
    // the whole curated round is scored by it.
    let deployed = RewardFunction::Linear(model);
    let select = CurationConfig { phi: 0.0, k: cfg.curation.k, lambda: cfg.curation.lambda };
    let n_keep = ((cfg.n_gen as f64 * cfg.beta).round() as usize).max(1);
    let p_cur = curate_monte_carlo(&p_data, &deployed, &deployed, &select, n_keep, &mut rng)?;
    let p_1 = match cfg.curation.lambda {
        SyntheticWeight::Infinite => p_cur,
        SyntheticWeight::Finite(l) => mixed_update(&p_data, &p_cur, l)?,
    };
    Ok(BenchRun { e_p1_r: expect_reward(&p_1, &r_true)?, mask, data })
}

/// `attack-bench`: one retraining round per method on identical data.
pub fn run_attack_bench(spec: &ExperimentSpec, out_dir: &Path) -> Result<CliOutcome> {
    let mut files = Vec::new();
    let mut rows = String::from("method,seed,E_p1_r,flips\n");
    let mut means = Vec::new();
    for &method in &spec.methods {
        let mut sum = 0.0;
        for &seed in &spec.seeds {
            let run = bench_one(spec, method, seed)?;
            let _ = writeln!(rows, "{method},{seed},{},{}", run.e_p1_r, run.mask.flip_count());
            sum += run.e_p1_r;
            write_file(
                out_dir,
                &format!("flips_{method}_seed_{seed}.txt"),
                &run.mask.to_text(&run.data)?,
                &mut files,
            )?;
        }
        means.push((method, sum / spec.seeds.len() as f64));
    }
    write_file(out_dir, "bench.csv", &rows, &mut files)?;

    let mut summary_rows = String::from("method,mean_E_p1_r\n");
    for (method, mean) in &means {
        let _ = writeln!(summary_rows, "{method},{mean}");
    }
    write_file(out_dir, "bench_summary.csv", &summary_rows, &mut files)?;

    let mut summary = String::from("attack-bench run\n================\n");
    summary.push_str(&echo_config(spec));
    summary.push_str("\nmean post-round E[r] by method:\n");
    for (method, mean) in &means {
        let _ = writeln!(summary, "  {method}: {mean}");
    }
    summary.push_str("\nfiles:\n");
    for f in &files {
        let _ = writeln!(summary, "  {}", f.file_name().unwrap_or_default().to_string_lossy());
    }
    write_file(out_dir, "summary.txt", &summary, &mut files)?;
    Ok(CliOutcome { files, mandatory_ok: true })
}

struct SuiteLine {
    label: String,
    passed: usize,
    total: usize,
    mandatory: bool,
    extra: &'static str,
}

impl SuiteLine {
    fn ok(&self) -> bool {
        self.passed == self.total
    }

    fn render(&self) -> String {
        let verdict = if !self.mandatory {
            "INFO"
        } else if self.ok() {
            "PASS"
        } else {
            "FAIL"
        };
        let tag = if self.mandatory { "  [mandatory]" } else { "" };
        let extra = if self.extra.is_empty() { String::new() } else { format!(", {}", self.extra) };
        format!("{verdict} ({}/{}{extra}){tag}  {}", self.passed, self.total, self.label)
    }
}

fn random_small_distribution(rng: &mut ChaCha8Rng) -> Result<DiscreteDistribution> {
    let m = rng.gen_range(2..=5usize);
    let atoms: Vec<SupportPoint> = (0..m)
        .map(|i| SupportPoint::new(vec![i as f64]))
        .collect::<Result<_>>()?;
    let weights: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
    DiscreteDistribution::from_weights(atoms, weights)
}

fn random_rewards(rng: &mut ChaCha8Rng, m: usize) -> RewardFunction {
    RewardFunction::Tabular((0..m).map(|_| rng.gen_range(-2.0..2.0)).collect())
}

/// `verify-bounds`: the randomized and fixed-scenario bound suites.
pub fn run_verify_bounds(spec: &ExperimentSpec, out_dir: &Path) -> Result<CliOutcome> {
    let n = spec.instances;
    let seed = spec.seeds[0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines: Vec<SuiteLine> = Vec::new();

    // Alignment convergence: the exact benign update must raise E[e^r]
    // monotonically and concentrate on the top-reward atom. Instances with
    // a top-two reward gap under 0.05 are redrawn so a fixed 200-step
    // horizon is always enough to reach 0.99 mass.
    let mut conv_pass = 0;
    for _ in 0..n {
        let p0 = random_small_distribution(&mut rng)?;
        let r = loop {
            let r = random_rewards(&mut rng, p0.len());
            let mut vals = match &r {
                RewardFunction::Tabular(v) => v.clone(),
                _ => unreachable!("tabular generator"),
            };
            vals.sort_by(|a, b| b.partial_cmp(a).expect("finite rewards"));
            if vals[0] - vals[1] >= 0.05 {
                break r;
            }
        };
        let argmax = match &r {
            RewardFunction::Tabular(v) => {
                let mut best = 0;
                for (i, val) in v.iter().enumerate() {
                    if *val > v[best] {
                        best = i;
                    }
                }
                best
            }
            _ => unreachable!("tabular generator"),
        };
        let mut p = p0;
        let mut prev = expect_exp_reward(&p, &r)?;
        let mut monotone = true;
        let mut first_strict = false;
        for step in 0..200 {
            p = update_exact_kinf(&p, &r, &r, 0.0)?;
            let cur = expect_exp_reward(&p, &r)?;
            if step == 0 {
                first_strict = cur > prev;
            }
            if cur < prev - 1e-12 * prev.abs().max(1.0) {
                monotone = false;
            }
            prev = cur;
        }
        if monotone && first_strict && p.probs()[argmax] >= 0.99 {
            conv_pass += 1;
        }
    }
    lines.push(SuiteLine {
        label: "alignment convergence (exact update, phi = 0, 200 steps)".into(),
        passed: conv_pass,
        total: n,
        mandatory: true,
        extra: "",
    });

    // One-step sandwich and the two covariance-floor readings share each
    // randomized instance.
    let mut sand_pass = 0;
    let mut upper_pos = 0;
    let mut stated_pass = 0;
    let mut normalized_pass = 0;
    for _ in 0..n {
        let p = random_small_distribution(&mut rng)?;
        let r = random_rewards(&mut rng, p.len());
        let rt = random_rewards(&mut rng, p.len());
        let phi = rng.gen_range(0.0..=1.0);
        let k = rng.gen_range(2..=3usize);
        let report = finite_k_moment_bounds_with(&p, &r, &rt, phi, k, None)?;
        if report.satisfied {
            sand_pass += 1;
        }
        if report.upper > 0.0 {
            upper_pos += 1;
        }
        let stated_floor = covariance_floor(&p, &r, &rt, phi)?;
        if report.observed >= stated_floor - BOUND_TOL {
            stated_pass += 1;
        }
        let kinf = kinf_moment_bounds(&p, &r, &rt, phi)?;
        let normalized_floor = expect_exp_reward(&p, &r)?
            + phi * cov_exp_rewards(&p, &r, &rt)? / expect_exp_reward(&p, &rt)?;
        if kinf.observed >= normalized_floor - BOUND_TOL {
            normalized_pass += 1;
        }
    }
    lines.push(SuiteLine {
        label: "one-step sandwich (finite-K enumerated observed)".into(),
        passed: sand_pass,
        total: n,
        mandatory: true,
        extra: "",
    });
    lines.push(SuiteLine {
        label: "sandwich upper bound positive".into(),
        passed: upper_pos,
        total: n,
        mandatory: true,
        extra: "",
    });
    lines.push(SuiteLine {
        label: "covariance floor, normalized (exact large-K observed)".into(),
        passed: normalized_pass,
        total: n,
        mandatory: true,
        extra: "",
    });
    lines.push(SuiteLine {
        label: "covariance floor, as stated vs finite-K observed".into(),
        passed: stated_pass,
        total: n,
        mandatory: false,
        extra: "known-unsound form, reported for reference",
    });

    // Anchored horizon floor on the fixed 10-class scenario, both
    // prefactor variants, two anchoring strengths.
    let atoms: Vec<SupportPoint> = (0..10)
        .map(|i| SupportPoint::new(vec![i as f64]))
        .collect::<Result<_>>()?;
    let p10 = DiscreteDistribution::uniform(atoms)?;
    let r10 = RewardFunction::Tabular((0..10).map(|i| (10 - i) as f64).collect());
    let rt10 = r10.negated();
    for lambda in [1.0f64, 3.0] {
        let traj = run_exact_retraining(&p10, &r10, &rt10, 0.3, SyntheticWeight::Finite(lambda), 15)?;
        let mut proof_ok = 0;
        let mut stated_ok = 0;
        for s in traj.steps() {
            if s.horizon_proofsum.as_ref().is_some_and(|b| b.satisfied) {
                proof_ok += 1;
            }
            if s.horizon_stated.as_ref().is_some_and(|b| b.satisfied) {
                stated_ok += 1;
            }
        }
        lines.push(SuiteLine {
            label: format!("anchored horizon floor, proof-sum prefactor, lambda = {lambda}"),
            passed: proof_ok,
            total: traj.steps().len(),
            mandatory: true,
            extra: "",
        });
        lines.push(SuiteLine {
            label: format!("anchored horizon floor, stated prefactor, lambda = {lambda}"),
            passed: stated_ok,
            total: traj.steps().len(),
            mandatory: false,
            extra: "",
        });
    }

    let mandatory: Vec<&SuiteLine> = lines.iter().filter(|l| l.mandatory).collect();
    let mandatory_passed = mandatory.iter().filter(|l| l.ok()).count();
    let mandatory_ok = mandatory_passed == mandatory.len();

    let mut report = String::from("bound verification report\n=========================\n");
    report.push_str(&echo_config(spec));
    report.push('\n');
    for line in &lines {
        report.push_str(&line.render());
        report.push('\n');
    }
    let _ = writeln!(report, "\nmandatory checks passed: {mandatory_passed}/{}", mandatory.len());
    let _ = writeln!(report, "verdict: {}", if mandatory_ok { "PASS" } else { "FAIL" });

    let mut files = Vec::new();
    write_file(out_dir, "verify_report.txt", &report, &mut files)?;
    Ok(CliOutcome { files, mandatory_ok })
}
