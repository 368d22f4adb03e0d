//! Environments and the iterative retraining loop.
//!
//! An [`Environment`] describes a data distribution and the true reward
//! over it. [`run_retraining`] plays the full cycle on top of it: sample
//! preferences from the current model distribution, fit a reward model,
//! optionally corrupt it through a label-flip attack, curate a batch of
//! samples through the preference mixture, and retrain (optionally
//! anchored on real data). Every iteration is recorded in a
//! [`Trajectory`] together with the moment-bound monitors, so a run can
//! be audited after the fact with [`check_bounds`].
//!
//! [`run_exact_retraining`] is the noise-free counterpart: it iterates
//! the closed-form curation update instead of sampling, which is the
//! right tool for long-horizon monotonicity checks where Monte Carlo
//! jitter would drown the signal.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::attack::{
    apply_flips, gradient_attack, heuristic_rank, pareto_attack, random_attack, AttackConfig,
    HeuristicMode, ObjectiveValue, ParetoSelection,
};
use crate::curation::{
    covariance_floor, curate_monte_carlo, finite_k_moment_bounds, kinf_moment_bounds,
    mixed_horizon_floor, mixed_update, update_exact_kinf, BoundReport, CurationConfig,
    FloorVariant, SyntheticWeight,
};
use crate::dist::{
    cov_exp_rewards, expect_exp_reward, expect_reward, DiscreteDistribution, RewardFunction,
    SupportPoint,
};
use crate::error::{Error, Result};
use crate::preference::{
    fit_mle, gen_labels_deterministic, FeatureMap, FitConfig, LinearRewardModel,
    PreferenceDataset,
};

/// Number of modes on the circle of the two-dimensional environment.
pub const GAUSSIAN_MODES: usize = 8;

/// A data distribution plus its true reward, by family.
#[derive(Debug, Clone)]
pub enum Environment {
    /// Eight Gaussian modes on a circle; the reward grows linearly with
    /// distance from `mu_star` beyond the clip radius `tau`.
    Gaussian8 {
        radius: f64,
        sigma: f64,
        mu_star: SupportPoint,
        tau: f64,
        gamma: f64,
    },
    /// `count` integer-coded classes, uniformly weighted, with tabular
    /// reward `count - index` (class 0 is the most preferred).
    Classes { count: usize },
}

impl Environment {
    /// The two-dimensional environment at its standard parameters.
    pub fn gaussian8() -> Self {
        Environment::Gaussian8 {
            radius: 2.0,
            sigma: 0.02,
            mu_star: SupportPoint::new(vec![2.0, 0.0]).expect("a fixed finite point"),
            tau: 3.0,
            gamma: -10.0,
        }
    }

    pub fn classes(count: usize) -> Self {
        Environment::Classes { count }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Environment::Gaussian8 { radius, sigma, mu_star, tau, gamma } => {
                if !radius.is_finite() || *radius <= 0.0 {
                    return Err(Error::InvalidInput(format!("radius {radius} must be positive")));
                }
                if !sigma.is_finite() || *sigma < 0.0 {
                    return Err(Error::InvalidInput(format!("sigma {sigma} must be >= 0")));
                }
                if !tau.is_finite() || *tau < 0.0 {
                    return Err(Error::InvalidInput(format!("tau {tau} must be >= 0")));
                }
                if !gamma.is_finite() {
                    return Err(Error::InvalidInput("gamma must be finite".into()));
                }
                if mu_star.dim() != 2 {
                    return Err(Error::InvalidInput("mu_star must be two-dimensional".into()));
                }
                Ok(())
            }
            Environment::Classes { count } => {
                if *count != 10 && *count != 100 {
                    return Err(Error::InvalidInput(format!(
                        "class count {count} is not one of the supported sizes 10 or 100"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Names for the per-step proportion columns.
    pub fn proportion_names(&self) -> Vec<String> {
        match self {
            Environment::Gaussian8 { .. } => {
                (0..GAUSSIAN_MODES).map(|t| format!("prop_mode_{t}")).collect()
            }
            Environment::Classes { count } => {
                (0..*count).map(|c| format!("prop_class_{c}")).collect()
            }
        }
    }

    /// The map a reward model uses on this environment unless the caller
    /// overrides it: one-hot indicators on classes, Gaussian bumps at the
    /// mode centers (plus bias) on the circle.
    pub fn default_feature_map(&self) -> FeatureMap {
        match self {
            Environment::Gaussian8 { radius, .. } => FeatureMap::RadialBasis {
                centers: mode_centers(*radius),
                gamma: 2.0,
                bias: true,
            },
            Environment::Classes { count } => FeatureMap::OneHot { classes: *count },
        }
    }
}

/// Centers of the eight modes: `radius * (cos(t pi/4), sin(t pi/4))`.
pub fn mode_centers(radius: f64) -> Vec<SupportPoint> {
    (0..GAUSSIAN_MODES)
        .map(|t| {
            let angle = t as f64 * std::f64::consts::FRAC_PI_4;
            SupportPoint::new(vec![radius * angle.cos(), radius * angle.sin()])
                .expect("finite circle coordinates")
        })
        .collect()
}

/// Reward of the two-dimensional environment:
/// `-gamma * max(0, |x - mu_star| - tau)`. With the standard negative
/// `gamma` this rewards points far from `mu_star`, zero inside the clip
/// radius.
pub fn gaussian8_reward(
    x: &SupportPoint,
    mu_star: &SupportPoint,
    tau: f64,
    gamma: f64,
) -> Result<f64> {
    if x.dim() != 2 || mu_star.dim() != 2 {
        return Err(Error::InvalidInput("reward is defined on the plane".into()));
    }
    let d = x.dist_sq(mu_star).sqrt();
    Ok(-gamma * (d - tau).max(0.0))
}

/// Materializes an environment into a support distribution plus its true
/// reward. `atoms_per_mode` controls the discretization of the Gaussian
/// environment (each mode contributes that many jittered points) and is
/// ignored for classes, whose support is the classes themselves.
pub fn build_environment<R: Rng + ?Sized>(
    env: &Environment,
    atoms_per_mode: usize,
    rng: &mut R,
) -> Result<(DiscreteDistribution, RewardFunction)> {
    env.validate()?;
    if atoms_per_mode == 0 {
        return Err(Error::InvalidInput("atoms_per_mode must be at least 1".into()));
    }
    match env {
        Environment::Classes { count } => {
            let atoms: Vec<SupportPoint> = (0..*count)
                .map(|i| SupportPoint::new(vec![i as f64]))
                .collect::<Result<_>>()?;
            let rewards: Vec<f64> = (0..*count).map(|i| (*count - i) as f64).collect();
            Ok((DiscreteDistribution::uniform(atoms)?, RewardFunction::Tabular(rewards)))
        }
        Environment::Gaussian8 { radius, sigma, mu_star, tau, gamma } => {
            let noise = Normal::new(0.0, *sigma)
                .map_err(|e| Error::InvalidInput(format!("mode noise: {e}")))?;
            let mut atoms = Vec::with_capacity(GAUSSIAN_MODES * atoms_per_mode);
            for center in mode_centers(*radius) {
                for _ in 0..atoms_per_mode {
                    let coords: Vec<f64> = center
                        .coords()
                        .iter()
                        .map(|c| c + noise.sample(rng))
                        .collect();
                    atoms.push(SupportPoint::new(coords)?);
                }
            }
            let rewards = atoms
                .iter()
                .map(|a| gaussian8_reward(a, mu_star, *tau, *gamma))
                .collect::<Result<Vec<_>>>()?;
            Ok((DiscreteDistribution::uniform(atoms)?, RewardFunction::Tabular(rewards)))
        }
    }
}

/// Aggregates a distribution on an environment's support into one mass
/// value per mode (nearest-center assignment) or per class.
pub fn mode_proportions(env: &Environment, p: &DiscreteDistribution) -> Result<Vec<f64>> {
    match env {
        Environment::Classes { count } => {
            if p.len() != *count {
                return Err(Error::DomainMismatch(format!(
                    "distribution has {} atoms but the environment has {count} classes",
                    p.len()
                )));
            }
            Ok(p.probs().to_vec())
        }
        Environment::Gaussian8 { radius, .. } => {
            let centers = mode_centers(*radius);
            let mut mass = vec![0.0; centers.len()];
            for (atom, prob) in p.atoms().iter().zip(p.probs()) {
                if atom.dim() != 2 {
                    return Err(Error::DomainMismatch(
                        "proportions need two-dimensional atoms".into(),
                    ));
                }
                let nearest = centers
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| {
                        atom.dist_sq(a).partial_cmp(&atom.dist_sq(b)).expect("finite distances")
                    })
                    .map(|(i, _)| i)
                    .expect("at least one center");
                mass[nearest] += prob;
            }
            Ok(mass)
        }
    }
}

/// How the adversary's reward is derived for curation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryPreset {
    /// The true reward with its sign flipped.
    Negated,
    /// The classes reward re-centered on the least-preferred class
    /// (`index + 1`), reversing the preference order.
    ShiftedTarget,
    /// Whatever reward model the label-flip attack produced.
    LearnedFromAttack,
}

impl std::fmt::Display for AdversaryPreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AdversaryPreset::Negated => "negated",
            AdversaryPreset::ShiftedTarget => "shifted-target",
            AdversaryPreset::LearnedFromAttack => "learned-from-attack",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for AdversaryPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negated" => Ok(AdversaryPreset::Negated),
            "shifted-target" => Ok(AdversaryPreset::ShiftedTarget),
            "learned-from-attack" => Ok(AdversaryPreset::LearnedFromAttack),
            other => Err(Error::Spec(format!("unknown adversary preset \"{other}\""))),
        }
    }
}

/// Builds the adversary's reward from a base reward.
///
/// `negated` works on any base. `shifted-target` requires a tabular base
/// (the classes reward) and replaces value `i` with `i + 1`.
/// `learned-from-attack` requires a fitted model base and passes it
/// through unchanged.
pub fn adversarial_reward_preset(
    kind: AdversaryPreset,
    base: &RewardFunction,
) -> Result<RewardFunction> {
    match kind {
        AdversaryPreset::Negated => Ok(base.negated()),
        AdversaryPreset::ShiftedTarget => match base {
            RewardFunction::Tabular(values) => Ok(RewardFunction::Tabular(
                (0..values.len()).map(|i| (i + 1) as f64).collect(),
            )),
            RewardFunction::Linear(_) => Err(Error::InvalidInput(
                "shifted-target re-centers the tabular classes reward; got a fitted model".into(),
            )),
        },
        AdversaryPreset::LearnedFromAttack => match base {
            RewardFunction::Linear(_) => Ok(base.clone()),
            RewardFunction::Tabular(_) => Err(Error::InvalidInput(
                "learned-from-attack wraps a fitted model; got a tabular reward".into(),
            )),
        },
    }
}

/// Which label-flip attack runs inside the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackMethod {
    None,
    Gradient,
    HeuristicDiff,
    HeuristicMaxAbs,
    Pareto,
    Random,
}

impl std::fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AttackMethod::None => "none",
            AttackMethod::Gradient => "gradient",
            AttackMethod::HeuristicDiff => "heuristic-diff",
            AttackMethod::HeuristicMaxAbs => "heuristic-maxabs",
            AttackMethod::Pareto => "pareto",
            AttackMethod::Random => "random",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for AttackMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AttackMethod::None),
            "gradient" => Ok(AttackMethod::Gradient),
            "heuristic-diff" => Ok(AttackMethod::HeuristicDiff),
            "heuristic-maxabs" => Ok(AttackMethod::HeuristicMaxAbs),
            "pareto" => Ok(AttackMethod::Pareto),
            "random" => Ok(AttackMethod::Random),
            other => Err(Error::Spec(format!("unknown attack method \"{other}\""))),
        }
    }
}

/// Everything one retraining run needs beyond the environment.
#[derive(Debug, Clone)]
pub struct LoopConfig {
    /// Iterations T.
    pub iterations: usize,
    /// Samples the model generates per iteration before curation.
    pub n_gen: usize,
    /// Fraction of generated samples that survive curation.
    pub beta: f64,
    /// Preference pairs drawn per iteration for reward fitting.
    pub pairs_per_iter: usize,
    /// Gaussian-environment support resolution; ignored for classes.
    pub atoms_per_mode: usize,
    pub curation: CurationConfig,
    pub method: AttackMethod,
    /// Source of the adversary's reward when no attack runs. With an
    /// attack method the fitted corrupted model is used regardless.
    pub preset: AdversaryPreset,
    pub attack: AttackConfig,
    pub fit: FitConfig,
    /// Feature map for the benign reward model; environment default when
    /// absent.
    pub feature_map: Option<FeatureMap>,
    /// Feature map for the corrupted model; same as the benign one when
    /// absent.
    pub tilde_feature_map: Option<FeatureMap>,
    /// Candidate pool for the Pareto attack.
    pub pool_size: usize,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            n_gen: 2000,
            beta: 0.5,
            pairs_per_iter: 512,
            atoms_per_mode: 8,
            curation: CurationConfig::default(),
            method: AttackMethod::None,
            preset: AdversaryPreset::Negated,
            attack: AttackConfig::default(),
            fit: FitConfig::default(),
            feature_map: None,
            tilde_feature_map: None,
            pool_size: 16,
            seed: 0,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidInput("iterations must be at least 1".into()));
        }
        if self.n_gen == 0 {
            return Err(Error::InvalidInput("n_gen must be at least 1".into()));
        }
        if !self.beta.is_finite() || self.beta <= 0.0 || self.beta > 1.0 {
            return Err(Error::InvalidInput(format!("beta {} must be in (0, 1]", self.beta)));
        }
        if self.pairs_per_iter == 0 {
            return Err(Error::InvalidInput("pairs_per_iter must be at least 1".into()));
        }
        if self.atoms_per_mode == 0 {
            return Err(Error::InvalidInput("atoms_per_mode must be at least 1".into()));
        }
        if self.pool_size == 0 {
            return Err(Error::InvalidInput("pool_size must be at least 1".into()));
        }
        if self.method == AttackMethod::None && self.preset == AdversaryPreset::LearnedFromAttack
        {
            return Err(Error::InvalidInput(
                "preset learned-from-attack needs an attack method".into(),
            ));
        }
        self.curation.validate()?;
        self.attack.validate()?;
        self.fit.validate()
    }

    fn curated_per_iter(&self) -> usize {
        ((self.n_gen as f64 * self.beta).round() as usize).max(1)
    }
}

/// One iteration's state and monitors.
///
/// The expectation and proportion fields describe the post-update
/// distribution `p_t` under the true reward. The bound reports describe
/// the curation transition that produced it: `sandwich` and `cov_floor`
/// check the one-step moment bounds at the operating point (exactly, not
/// through the Monte Carlo realization), and the horizon reports carry
/// the anchored long-run floor in both prefactor variants whenever the
/// run mixes in real data.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: usize,
    pub proportions: Vec<f64>,
    pub e_r: f64,
    pub e_exp_r: f64,
    /// `Cov_{p_t}[e^R, e^{R~}]` under the rewards that drove this step.
    pub cov: f64,
    pub sandwich: BoundReport,
    pub cov_floor: BoundReport,
    pub horizon_stated: Option<BoundReport>,
    pub horizon_proofsum: Option<BoundReport>,
    pub flips: usize,
    pub objective: Option<ObjectiveValue>,
}

/// A whole run, one record per iteration.
#[derive(Debug, Clone)]
pub struct Trajectory {
    prop_names: Vec<String>,
    steps: Vec<StepRecord>,
}

impl Trajectory {
    fn new(prop_names: Vec<String>) -> Self {
        Self { prop_names, steps: Vec::new() }
    }

    pub fn prop_names(&self) -> &[String] {
        &self.prop_names
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.steps.last()
    }

    /// Comma-delimited table, one row per iteration. Boolean cells are
    /// `1`/`0`; monitors that do not apply to the run are `na`.
    pub fn to_table(&self) -> String {
        let mut out = String::from(
            "t,E_r,E_exp_r,cov,lemma2_lower,lemma2_upper,lemma2_ok,appx_ok,\
             lemma3_stated_ok,lemma3_proofsum_ok,flips",
        );
        for name in &self.prop_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for s in &self.steps {
            let stated = s.horizon_stated.as_ref().map(|r| r.satisfied);
            let proofsum = s.horizon_proofsum.as_ref().map(|r| r.satisfied);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                s.t,
                s.e_r,
                s.e_exp_r,
                s.cov,
                s.sandwich.lower,
                s.sandwich.upper,
                flag_cell(Some(s.sandwich.satisfied)),
                flag_cell(Some(s.cov_floor.satisfied)),
                flag_cell(stated),
                flag_cell(proofsum),
                s.flips,
            ));
            for p in &s.proportions {
                out.push_str(&format!(",{p}"));
            }
            out.push('\n');
        }
        out
    }
}

fn flag_cell(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "1",
        Some(false) => "0",
        None => "na",
    }
}

/// Which monitor a violation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Sandwich,
    CovFloor,
    HorizonStated,
    HorizonProofSum,
}

impl std::fmt::Display for BoundKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BoundKind::Sandwich => "one-step sandwich",
            BoundKind::CovFloor => "covariance floor",
            BoundKind::HorizonStated => "horizon floor (stated)",
            BoundKind::HorizonProofSum => "horizon floor (proof sum)",
        };
        f.write_str(s)
    }
}

/// One monitor failure: at which step, and by how much the observed
/// value escaped the bound.
#[derive(Debug, Clone)]
pub struct BoundViolation {
    pub step: usize,
    pub kind: BoundKind,
    pub margin: f64,
}

/// Per-monitor pass counts over a trajectory.
#[derive(Debug, Clone)]
pub struct BoundCheckSummary {
    pub steps: usize,
    pub sandwich_ok: usize,
    pub cov_floor_ok: usize,
    pub horizon_stated_ok: usize,
    pub horizon_stated_total: usize,
    pub horizon_proofsum_ok: usize,
    pub horizon_proofsum_total: usize,
    pub violations: Vec<BoundViolation>,
}

impl BoundCheckSummary {
    /// True when every recorded monitor held at every step.
    pub fn all_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn violation_margin(report: &BoundReport) -> f64 {
    (report.lower - report.observed).max(report.observed - report.upper)
}

/// Folds a trajectory's per-step bound reports into pass counts and a
/// violation list (step index plus margin).
pub fn check_bounds(trajectory: &Trajectory) -> BoundCheckSummary {
    let mut summary = BoundCheckSummary {
        steps: trajectory.steps.len(),
        sandwich_ok: 0,
        cov_floor_ok: 0,
        horizon_stated_ok: 0,
        horizon_stated_total: 0,
        horizon_proofsum_ok: 0,
        horizon_proofsum_total: 0,
        violations: Vec::new(),
    };
    for s in &trajectory.steps {
        let mut tally = |report: &BoundReport, kind: BoundKind, ok: &mut usize| {
            if report.satisfied {
                *ok += 1;
            } else {
                summary.violations.push(BoundViolation {
                    step: s.t,
                    kind,
                    margin: violation_margin(report),
                });
            }
        };
        tally(&s.sandwich, BoundKind::Sandwich, &mut summary.sandwich_ok);
        tally(&s.cov_floor, BoundKind::CovFloor, &mut summary.cov_floor_ok);
        if let Some(r) = &s.horizon_stated {
            summary.horizon_stated_total += 1;
            tally(r, BoundKind::HorizonStated, &mut summary.horizon_stated_ok);
        }
        if let Some(r) = &s.horizon_proofsum {
            summary.horizon_proofsum_total += 1;
            tally(r, BoundKind::HorizonProofSum, &mut summary.horizon_proofsum_ok);
        }
    }
    summary
}

/// Noise-free retraining: iterates the closed-form curation update (the
/// large-candidate-pool limit) and, with a finite `lambda`, re-anchors
/// each step on `p_data`. The true rewards drive both curation and the
/// monitors, so every bound report here is exact.
pub fn run_exact_retraining(
    p_data: &DiscreteDistribution,
    r: &RewardFunction,
    r_tilde: &RewardFunction,
    phi: f64,
    lambda: SyntheticWeight,
    iterations: usize,
) -> Result<Trajectory> {
    if iterations == 0 {
        return Err(Error::InvalidInput("iterations must be at least 1".into()));
    }
    lambda.validate()?;
    let prop_names = (0..p_data.len()).map(|i| format!("prop_atom_{i}")).collect();
    let mut trajectory = Trajectory::new(prop_names);
    let mut hist = vec![p_data.clone()];
    let mut hist_rts: Vec<RewardFunction> = Vec::new();
    let mut p_prev = p_data.clone();
    for t in 1..=iterations {
        let step = exact_step(p_data, r, r_tilde, phi, lambda, t, &mut hist, &mut hist_rts, &p_prev)
            .map_err(|e| Error::Iteration(t, Box::new(e)))?;
        p_prev = hist.last().expect("pushed this iteration").clone();
        trajectory.steps.push(step);
    }
    Ok(trajectory)
}

#[allow(clippy::too_many_arguments)]
fn exact_step(
    p_data: &DiscreteDistribution,
    r: &RewardFunction,
    r_tilde: &RewardFunction,
    phi: f64,
    lambda: SyntheticWeight,
    t: usize,
    hist: &mut Vec<DiscreteDistribution>,
    hist_rts: &mut Vec<RewardFunction>,
    p_prev: &DiscreteDistribution,
) -> Result<StepRecord> {
    let sandwich = kinf_moment_bounds(p_prev, r, r_tilde, phi)?;
    let floor = covariance_floor(p_prev, r, r_tilde, phi)?;
    let cov_prev = cov_exp_rewards(p_prev, r, r_tilde)?;
    let cov_floor = BoundReport::assess(
        floor,
        f64::INFINITY,
        sandwich.observed,
        0.0,
        phi * cov_prev,
        None,
    );

    let p_cur = update_exact_kinf(p_prev, r, r_tilde, phi)?;
    let p_next = match lambda {
        SyntheticWeight::Infinite => p_cur,
        SyntheticWeight::Finite(l) => mixed_update(p_data, &p_cur, l)?,
    };

    hist.push(p_next.clone());
    hist_rts.push(r_tilde.clone());
    let (horizon_stated, horizon_proofsum) = match lambda {
        SyntheticWeight::Infinite => (None, None),
        SyntheticWeight::Finite(l) => {
            let stated = mixed_horizon_floor(hist, r, hist_rts, l, phi, FloorVariant::OnePlusLambda)?;
            let proofsum = mixed_horizon_floor(hist, r, hist_rts, l, phi, FloorVariant::GeometricSum)?;
            (stated.into_iter().next_back(), proofsum.into_iter().next_back())
        }
    };

    Ok(StepRecord {
        t,
        proportions: p_next.probs().to_vec(),
        e_r: expect_reward(&p_next, r)?,
        e_exp_r: expect_exp_reward(&p_next, r)?,
        cov: cov_exp_rewards(&p_next, r, r_tilde)?,
        sandwich,
        cov_floor,
        horizon_stated,
        horizon_proofsum,
        flips: 0,
        objective: None,
    })
}

/// The full sampled retraining loop on an environment.
///
/// Per iteration: draw preference pairs from the current distribution
/// and label them by the true reward; fit the benign reward model; run
/// the configured label-flip attack (if any) to obtain the corrupted
/// model; curate a batch where a `phi` share of selections is scored by
/// the adversary's reward; then retrain, anchored on real data when
/// `lambda` is finite. Deterministic for a fixed (environment, config).
pub fn run_retraining(env: &Environment, cfg: &LoopConfig) -> Result<Trajectory> {
    cfg.validate()?;
    env.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (p_data, r_true) = build_environment(env, cfg.atoms_per_mode, &mut rng)?;
    let map = cfg.feature_map.clone().unwrap_or_else(|| env.default_feature_map());
    let tilde_map = cfg.tilde_feature_map.clone().unwrap_or_else(|| map.clone());
    let preset_rt = if cfg.method == AttackMethod::None {
        Some(adversarial_reward_preset(cfg.preset, &r_true)?)
    } else {
        None
    };

    let mut trajectory = Trajectory::new(env.proportion_names());
    let mut hist = vec![p_data.clone()];
    let mut hist_rts: Vec<RewardFunction> = Vec::new();
    let mut p_prev = p_data.clone();
    for t in 1..=cfg.iterations {
        let ctx = StepContext {
            env,
            cfg,
            p_data: &p_data,
            r_true: &r_true,
            map: &map,
            tilde_map: &tilde_map,
            preset_rt: preset_rt.as_ref(),
        };
        let step = loop_step(&ctx, t, &p_prev, &mut hist, &mut hist_rts, &mut rng)
            .map_err(|e| Error::Iteration(t, Box::new(e)))?;
        p_prev = hist.last().expect("pushed this iteration").clone();
        trajectory.steps.push(step);
    }
    Ok(trajectory)
}

struct StepContext<'a> {
    env: &'a Environment,
    cfg: &'a LoopConfig,
    p_data: &'a DiscreteDistribution,
    r_true: &'a RewardFunction,
    map: &'a FeatureMap,
    tilde_map: &'a FeatureMap,
    preset_rt: Option<&'a RewardFunction>,
}

fn loop_step(
    ctx: &StepContext<'_>,
    t: usize,
    p_prev: &DiscreteDistribution,
    hist: &mut Vec<DiscreteDistribution>,
    hist_rts: &mut Vec<RewardFunction>,
    rng: &mut ChaCha8Rng,
) -> Result<StepRecord> {
    let cfg = ctx.cfg;
    let points = p_prev.sample(2 * cfg.pairs_per_iter, rng)?;
    let mut pairs = Vec::with_capacity(cfg.pairs_per_iter);
    let mut iter = points.into_iter();
    while let (Some(x), Some(z)) = (iter.next(), iter.next()) {
        pairs.push((x, z));
    }
    let data = gen_labels_deterministic(pairs, |x| ctx.r_true.eval_point(ctx.p_data, x))?;

    // Per-iteration attack seed so repeated rounds do not replay the
    // exact same perturbation path on fresh data.
    let attack_cfg =
        AttackConfig { seed: cfg.attack.seed.wrapping_add(t as u64), ..cfg.attack.clone() };
    let fitted = match cfg.method {
        AttackMethod::None => {
            let benign = fit_mle(&data, &LinearRewardModel::zeros(ctx.map.clone()), &cfg.fit)?;
            FittedStep { benign, tilde: None, flips: 0, objective: None }
        }
        AttackMethod::Gradient => {
            let batch = p_prev.sample(cfg.attack.cov_batch, rng)?;
            let out = gradient_attack(&data, ctx.map, ctx.tilde_map, &batch, &attack_cfg, &cfg.fit)?;
            FittedStep {
                benign: out.model_benign,
                tilde: Some(out.model_tilde),
                flips: out.mask.flip_count(),
                objective: Some(out.final_objective),
            }
        }
        AttackMethod::Pareto => {
            let batch = p_prev.sample(cfg.attack.cov_batch, rng)?;
            let out = pareto_attack(
                &data,
                ctx.map,
                ctx.tilde_map,
                &batch,
                &attack_cfg,
                &cfg.fit,
                cfg.pool_size,
                ParetoSelection::MinSum,
            )?;
            FittedStep {
                benign: out.model_benign,
                tilde: Some(out.model_tilde),
                flips: out.mask.flip_count(),
                objective: Some(out.pool_objectives[out.selected]),
            }
        }
        AttackMethod::HeuristicDiff | AttackMethod::HeuristicMaxAbs => {
            let mode = if cfg.method == AttackMethod::HeuristicDiff {
                HeuristicMode::Diff
            } else {
                HeuristicMode::MaxAbs
            };
            let benign = fit_mle(&data, &LinearRewardModel::zeros(ctx.map.clone()), &cfg.fit)?;
            let mask = heuristic_rank(&data, &benign, mode, cfg.attack.kappa)?;
            let tilde = refit_on_flips(&data, &mask, &benign, ctx.map, ctx.tilde_map, &cfg.fit)?;
            FittedStep { benign, tilde: Some(tilde), flips: mask.flip_count(), objective: None }
        }
        AttackMethod::Random => {
            let benign = fit_mle(&data, &LinearRewardModel::zeros(ctx.map.clone()), &cfg.fit)?;
            let (mask, _clipped) = random_attack(&data, cfg.attack.kappa, rng)?;
            let tilde = refit_on_flips(&data, &mask, &benign, ctx.map, ctx.tilde_map, &cfg.fit)?;
            FittedStep { benign, tilde: Some(tilde), flips: mask.flip_count(), objective: None }
        }
    };

    let r_cur = RewardFunction::Linear(fitted.benign.clone());
    let rt_cur = match &fitted.tilde {
        Some(model) => RewardFunction::Linear(model.clone()),
        None => ctx.preset_rt.expect("preset precomputed for attack-free runs").clone(),
    };

    let sandwich =
        finite_k_moment_bounds(p_prev, &r_cur, &rt_cur, cfg.curation.phi, cfg.curation.k)?;
    let floor = covariance_floor(p_prev, &r_cur, &rt_cur, cfg.curation.phi)?;
    let cov_prev = cov_exp_rewards(p_prev, &r_cur, &rt_cur)?;
    let cov_floor = BoundReport::assess(
        floor,
        f64::INFINITY,
        sandwich.observed,
        0.0,
        cfg.curation.phi * cov_prev,
        sandwich.observed_stderr,
    );

    let p_cur =
        curate_monte_carlo(p_prev, &r_cur, &rt_cur, &cfg.curation, cfg.curated_per_iter(), rng)?;
    let p_next = match cfg.curation.lambda {
        SyntheticWeight::Infinite => p_cur,
        SyntheticWeight::Finite(l) => mixed_update(ctx.p_data, &p_cur, l)?,
    };

    hist.push(p_next.clone());
    hist_rts.push(rt_cur.clone());
    let (horizon_stated, horizon_proofsum) = match cfg.curation.lambda {
        SyntheticWeight::Infinite => (None, None),
        SyntheticWeight::Finite(l) => {
            let stated = mixed_horizon_floor(
                hist,
                ctx.r_true,
                hist_rts,
                l,
                cfg.curation.phi,
                FloorVariant::OnePlusLambda,
            )?;
            let proofsum = mixed_horizon_floor(
                hist,
                ctx.r_true,
                hist_rts,
                l,
                cfg.curation.phi,
                FloorVariant::GeometricSum,
            )?;
            (stated.into_iter().next_back(), proofsum.into_iter().next_back())
        }
    };

    Ok(StepRecord {
        t,
        proportions: mode_proportions(ctx.env, &p_next)?,
        e_r: expect_reward(&p_next, ctx.r_true)?,
        e_exp_r: expect_exp_reward(&p_next, ctx.r_true)?,
        cov: cov_exp_rewards(&p_next, &r_cur, &rt_cur)?,
        sandwich,
        cov_floor,
        horizon_stated,
        horizon_proofsum,
        flips: fitted.flips,
        objective: fitted.objective,
    })
}

struct FittedStep {
    benign: LinearRewardModel,
    tilde: Option<LinearRewardModel>,
    flips: usize,
    objective: Option<ObjectiveValue>,
}

pub(crate) fn refit_on_flips(
    data: &PreferenceDataset,
    mask: &crate::attack::FlipMask,
    benign: &LinearRewardModel,
    map: &FeatureMap,
    tilde_map: &FeatureMap,
    fit: &FitConfig,
) -> Result<LinearRewardModel> {
    let flipped = apply_flips(data, mask)?;
    let init = if tilde_map == map {
        benign.clone()
    } else {
        LinearRewardModel::zeros(tilde_map.clone())
    };
    fit_mle(&flipped, &init, fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::tv_distance;

    fn pt(coords: &[f64]) -> SupportPoint {
        SupportPoint::new(coords.to_vec()).unwrap()
    }

    #[test]
    fn reward_matches_clipped_distance() {
        let mu = pt(&[2.0, 0.0]);
        assert_eq!(gaussian8_reward(&mu, &mu, 3.0, -10.0).unwrap(), 0.0);
        let boundary = pt(&[-1.0, 0.0]);
        assert_eq!(gaussian8_reward(&boundary, &mu, 3.0, -10.0).unwrap(), 0.0);
        let outside = pt(&[-2.0, 0.0]);
        assert!((gaussian8_reward(&outside, &mu, 3.0, -10.0).unwrap() - 10.0).abs() < 1e-12);
        assert!(gaussian8_reward(&pt(&[0.0]), &mu, 3.0, -10.0).is_err());
    }

    #[test]
    fn classes_environment_is_uniform_with_descending_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (p, r) = build_environment(&Environment::classes(10), 1, &mut rng).unwrap();
        assert_eq!(p.len(), 10);
        for prob in p.probs() {
            assert!((prob - 0.1).abs() < 1e-15);
        }
        match &r {
            RewardFunction::Tabular(vals) => {
                assert_eq!(vals, &vec![10.0, 9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
            }
            other => panic!("expected a tabular reward, got {other:?}"),
        }
        assert!(build_environment(&Environment::classes(7), 1, &mut rng).is_err());
    }

    #[test]
    fn noiseless_circle_hits_the_exact_centers() {
        let mut env = Environment::gaussian8();
        if let Environment::Gaussian8 { sigma, .. } = &mut env {
            *sigma = 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (p, r) = build_environment(&env, 1, &mut rng).unwrap();
        assert_eq!(p.len(), 8);
        for (atom, center) in p.atoms().iter().zip(mode_centers(2.0)) {
            assert!(atom.approx_eq(&center, 1e-12));
        }
        // Only the far side of the circle clears the clip radius: the
        // opposite mode by a full unit, its two neighbors by 0.6955.
        let vals = r.values_on(&p).unwrap();
        assert!((vals[4] - 10.0).abs() < 1e-12);
        assert!((vals[3] - 6.9551813004514695).abs() < 1e-12);
        assert!((vals[5] - 6.9551813004514695).abs() < 1e-12);
        for t in [0usize, 1, 2, 6, 7] {
            assert_eq!(vals[t], 0.0, "mode {t}");
        }
    }

    #[test]
    fn jittered_circle_keeps_mode_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let env = Environment::gaussian8();
        let (p, _) = build_environment(&env, 3, &mut rng).unwrap();
        assert_eq!(p.len(), 24);
        let props = mode_proportions(&env, &p).unwrap();
        assert_eq!(props.len(), 8);
        for prop in &props {
            assert!((prop - 0.125).abs() < 1e-12);
        }
        assert!((props.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn presets_transform_the_base_reward() {
        let base = RewardFunction::Tabular(vec![10.0, 9.0, 8.0]);
        match adversarial_reward_preset(AdversaryPreset::Negated, &base).unwrap() {
            RewardFunction::Tabular(v) => assert_eq!(v, vec![-10.0, -9.0, -8.0]),
            other => panic!("unexpected {other:?}"),
        }
        match adversarial_reward_preset(AdversaryPreset::ShiftedTarget, &base).unwrap() {
            RewardFunction::Tabular(v) => assert_eq!(v, vec![1.0, 2.0, 3.0]),
            other => panic!("unexpected {other:?}"),
        }
        let model = LinearRewardModel::new(vec![0.5], FeatureMap::Identity { dim: 1 }).unwrap();
        let linear = RewardFunction::Linear(model);
        assert!(adversarial_reward_preset(AdversaryPreset::ShiftedTarget, &linear).is_err());
        assert!(adversarial_reward_preset(AdversaryPreset::LearnedFromAttack, &base).is_err());
        let wrapped =
            adversarial_reward_preset(AdversaryPreset::LearnedFromAttack, &linear).unwrap();
        let p = DiscreteDistribution::uniform(vec![pt(&[0.0]), pt(&[2.0])]).unwrap();
        assert_eq!(wrapped.values_on(&p).unwrap(), linear.values_on(&p).unwrap());
    }

    #[test]
    fn negated_constant_reward_has_zero_covariance() {
        let base = RewardFunction::Tabular(vec![1.3, 1.3, 1.3]);
        let neg = adversarial_reward_preset(AdversaryPreset::Negated, &base).unwrap();
        let p = DiscreteDistribution::uniform(vec![pt(&[0.0]), pt(&[1.0]), pt(&[2.0])]).unwrap();
        assert!(cov_exp_rewards(&p, &base, &neg).unwrap().abs() < 1e-15);
    }

    fn two_atom() -> (DiscreteDistribution, RewardFunction, RewardFunction) {
        let p = DiscreteDistribution::new(vec![pt(&[0.0]), pt(&[1.0])], vec![0.5, 0.5]).unwrap();
        let r = RewardFunction::Tabular(vec![0.0, 3.0f64.ln()]);
        (p, r.negated(), r)
    }

    #[test]
    fn exact_run_with_zero_anchor_weight_stays_at_the_data() {
        let (p, rt, r) = two_atom();
        let traj =
            run_exact_retraining(&p, &r, &rt, 0.3, SyntheticWeight::Finite(0.0), 4).unwrap();
        assert_eq!(traj.steps().len(), 4);
        for s in traj.steps() {
            for (prob, orig) in s.proportions.iter().zip(p.probs()) {
                assert!((prob - orig).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn benign_exact_run_raises_expected_reward_monotonically() {
        let (p, _, r) = two_atom();
        let traj = run_exact_retraining(&p, &r, &r, 0.0, SyntheticWeight::Infinite, 30).unwrap();
        let mut prev = expect_exp_reward(&p, &r).unwrap();
        for s in traj.steps() {
            assert!(s.e_exp_r >= prev - 1e-12, "step {}: {} < {prev}", s.t, s.e_exp_r);
            assert!(s.sandwich.satisfied);
            assert!(s.horizon_stated.is_none());
            prev = s.e_exp_r;
        }
        // Mass concentrates on the higher-reward atom.
        let last = traj.last().unwrap();
        assert!(last.proportions[1] > 0.99);
    }

    #[test]
    fn anchored_exact_run_reports_horizon_floors() {
        let (p, rt, r) = two_atom();
        let traj =
            run_exact_retraining(&p, &r, &rt, 0.3, SyntheticWeight::Finite(1.0), 6).unwrap();
        for s in traj.steps() {
            let stated = s.horizon_stated.as_ref().unwrap();
            let proofsum = s.horizon_proofsum.as_ref().unwrap();
            assert!(stated.satisfied && proofsum.satisfied);
            // The proof-sum prefactor is the smaller of the two.
            assert!(proofsum.lower >= stated.lower - 1e-12);
        }
        let table = traj.to_table();
        assert!(table.lines().next().unwrap().starts_with("t,E_r,E_exp_r,cov,lemma2_lower"));
        assert!(!table.contains("na"));
    }

    #[test]
    fn unanchored_table_marks_horizon_cells_na() {
        let (p, rt, r) = two_atom();
        let traj = run_exact_retraining(&p, &r, &rt, 0.2, SyntheticWeight::Infinite, 2).unwrap();
        let table = traj.to_table();
        let row = table.lines().nth(1).unwrap();
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[8], "na");
        assert_eq!(cells[9], "na");
        assert_eq!(cells[10], "0");
        assert_eq!(cells.len(), 11 + 2);
    }

    #[test]
    fn bound_summary_counts_and_flags_violations() {
        let (p, rt, r) = two_atom();
        let traj =
            run_exact_retraining(&p, &r, &rt, 0.3, SyntheticWeight::Finite(1.0), 5).unwrap();
        let summary = check_bounds(&traj);
        assert_eq!(summary.steps, 5);
        assert_eq!(summary.sandwich_ok, 5);
        assert_eq!(summary.horizon_stated_total, 5);
        assert_eq!(summary.horizon_proofsum_total, 5);
        assert!(summary.all_ok());

        // A doctored trajectory must surface the step and margin.
        let mut bad = traj.clone();
        bad.steps[2].sandwich.satisfied = false;
        bad.steps[2].sandwich.observed = bad.steps[2].sandwich.lower - 0.5;
        let summary = check_bounds(&bad);
        assert!(!summary.all_ok());
        assert_eq!(summary.sandwich_ok, 4);
        assert_eq!(summary.violations.len(), 1);
        assert_eq!(summary.violations[0].step, 3);
        assert_eq!(summary.violations[0].kind, BoundKind::Sandwich);
        assert!((summary.violations[0].margin - 0.5).abs() < 1e-12);
    }

    fn small_loop_cfg() -> LoopConfig {
        LoopConfig {
            iterations: 3,
            n_gen: 400,
            pairs_per_iter: 48,
            seed: 11,
            ..LoopConfig::default()
        }
    }

    #[test]
    fn sampled_loop_is_deterministic() {
        let env = Environment::classes(10);
        let cfg = small_loop_cfg();
        let a = run_retraining(&env, &cfg).unwrap();
        let b = run_retraining(&env, &cfg).unwrap();
        assert_eq!(a.to_table(), b.to_table());
        let mut other_seed = cfg.clone();
        other_seed.seed = 12;
        let c = run_retraining(&env, &other_seed).unwrap();
        assert_ne!(a.to_table(), c.to_table());
    }

    #[test]
    fn benign_sampled_loop_drifts_toward_the_top_class() {
        let env = Environment::classes(10);
        let cfg = LoopConfig {
            iterations: 10,
            n_gen: 2000,
            pairs_per_iter: 256,
            seed: 3,
            ..LoopConfig::default()
        };
        let traj = run_retraining(&env, &cfg).unwrap();
        // The sampled loop climbs strictly while there is room to climb;
        // once the top class holds ~everything, only sampling noise is
        // left, so the tail is checked as non-decreasing within noise.
        let noise = 3.0 * (0.01f64 / 1000.0).sqrt();
        let mut prev_prop = 0.1;
        let mut prev_er = expect_reward(
            &DiscreteDistribution::uniform((0..10).map(|i| pt(&[i as f64])).collect()).unwrap(),
            &RewardFunction::Tabular((0..10).map(|i| (10 - i) as f64).collect()),
        )
        .unwrap();
        for s in traj.steps() {
            if prev_prop < 0.99 {
                assert!(
                    s.proportions[0] > prev_prop,
                    "step {}: class-0 mass {} did not grow past {prev_prop}",
                    s.t,
                    s.proportions[0]
                );
            } else {
                assert!(
                    s.proportions[0] >= prev_prop - noise,
                    "step {}: class-0 mass {} fell below {prev_prop}",
                    s.t,
                    s.proportions[0]
                );
            }
            assert!(s.e_r >= prev_er - 1e-9, "step {}: E[r] {} fell below {prev_er}", s.t, s.e_r);
            assert!((s.proportions.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prev_prop = s.proportions[0];
            prev_er = s.e_r;
        }
        assert!(traj.last().unwrap().proportions[0] >= 0.99);
    }

    #[test]
    fn benign_exact_ten_class_proportion_strictly_increases() {
        let atoms: Vec<SupportPoint> = (0..10).map(|i| pt(&[i as f64])).collect();
        let p = DiscreteDistribution::uniform(atoms).unwrap();
        let r = RewardFunction::Tabular((0..10).map(|i| (10 - i) as f64).collect());
        let rt = r.clone();
        let traj = run_exact_retraining(&p, &r, &rt, 0.0, SyntheticWeight::Infinite, 10).unwrap();
        let mut prev = 0.1;
        for s in traj.steps() {
            assert!(s.proportions[0] > prev, "step {}: {} <= {prev}", s.t, s.proportions[0]);
            assert!(s.proportions[0] < 1.0);
            prev = s.proportions[0];
        }
    }

    #[test]
    fn sampled_loop_with_zero_anchor_weight_stays_at_the_data() {
        let env = Environment::classes(10);
        let mut cfg = small_loop_cfg();
        cfg.curation.lambda = SyntheticWeight::Finite(0.0);
        cfg.curation.phi = 0.4;
        let traj = run_retraining(&env, &cfg).unwrap();
        for s in traj.steps() {
            for prop in &s.proportions {
                assert!((prop - 0.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attacked_loop_records_flips_and_objectives() {
        let env = Environment::classes(10);
        let mut cfg = LoopConfig {
            iterations: 2,
            n_gen: 300,
            pairs_per_iter: 40,
            seed: 5,
            method: AttackMethod::Gradient,
            preset: AdversaryPreset::LearnedFromAttack,
            ..LoopConfig::default()
        };
        cfg.curation.phi = 0.5;
        cfg.attack.attack_iters = 4;
        cfg.attack.cov_batch = 128;
        let traj = run_retraining(&env, &cfg).unwrap();
        for s in traj.steps() {
            assert_eq!(s.flips, 8, "floor(0.2 * 40)");
            assert!(s.objective.is_some());
        }
        let table = traj.to_table();
        let row = table.lines().nth(1).unwrap();
        assert_eq!(row.split(',').nth(10).unwrap(), "8");
    }

    #[test]
    fn mixed_anchor_stays_closer_to_data_than_unanchored() {
        let env = Environment::classes(10);
        let base = LoopConfig {
            iterations: 6,
            n_gen: 1000,
            pairs_per_iter: 128,
            seed: 17,
            ..LoopConfig::default()
        };
        let mut anchored = base.clone();
        anchored.curation.phi = 0.5;
        anchored.curation.lambda = SyntheticWeight::Finite(1.0);
        let mut unanchored = base;
        unanchored.curation.phi = 0.5;
        let (p_data, _) = build_environment(
            &env,
            1,
            &mut ChaCha8Rng::seed_from_u64(17),
        )
        .unwrap();
        let run = |cfg: &LoopConfig| {
            let traj = run_retraining(&env, cfg).unwrap();
            let last = traj.last().unwrap().proportions.clone();
            DiscreteDistribution::new(p_data.atoms().to_vec(), last).unwrap()
        };
        let p_anchored = run(&anchored);
        let p_free = run(&unanchored);
        let d_anchored = tv_distance(&p_anchored, &p_data).unwrap();
        let d_free = tv_distance(&p_free, &p_data).unwrap();
        assert!(
            d_anchored <= d_free,
            "anchored drifted farther ({d_anchored} vs {d_free})"
        );
    }

    #[test]
    fn loop_config_rejects_inconsistent_settings() {
        let mut cfg = LoopConfig::default();
        cfg.beta = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = LoopConfig::default();
        cfg.preset = AdversaryPreset::LearnedFromAttack;
        assert!(cfg.validate().is_err());
        cfg.method = AttackMethod::Random;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn method_and_preset_names_round_trip() {
        for m in [
            AttackMethod::None,
            AttackMethod::Gradient,
            AttackMethod::HeuristicDiff,
            AttackMethod::HeuristicMaxAbs,
            AttackMethod::Pareto,
            AttackMethod::Random,
        ] {
            assert_eq!(m.to_string().parse::<AttackMethod>().unwrap(), m);
        }
        for p in [
            AdversaryPreset::Negated,
            AdversaryPreset::ShiftedTarget,
            AdversaryPreset::LearnedFromAttack,
        ] {
            assert_eq!(p.to_string().parse::<AdversaryPreset>().unwrap(), p);
        }
        assert!("softmax".parse::<AttackMethod>().is_err());
    }
}
