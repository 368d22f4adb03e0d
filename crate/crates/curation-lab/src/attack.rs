//! Label-flip attack optimizers and their shared objective.
//!
//! The adversary sees a preference dataset and a budget of `floor(kappa *
//! n)` flips, and wants the reward model refit on the flipped data to
//! pull curated sampling away from the true preferences. The shared
//! objective is [`objective_j`]: the batch covariance between the benign
//! and corrupted exp-rewards, plus a penalty on how far the corrupted
//! model visibly strays. Four optimizers produce masks: a relaxed
//! gradient method that differentiates through the refit
//! ([`gradient_attack`]), two reward ranking heuristics
//! ([`heuristic_rank`]), a random-pool Pareto search ([`pareto_attack`]),
//! and a uniform baseline ([`random_attack`]).

use nalgebra::{DMatrix, DVector};
use rand::distributions::Uniform;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dist::{SupportPoint, MAX_EXP_REWARD};
use crate::error::{Error, Result};
use crate::preference::{
    cross_deriv_loss, fit_mle, hessian_loss, FeatureMap, FitConfig, LinearRewardModel,
    PreferenceDataset,
};

/// Ridge added to the refit Hessian before inverting it for the implicit
/// derivative; guards collinear feature differences on top of the fit's
/// own l2 term.
pub const HESSIAN_DAMP: f64 = 1e-8;

/// Whether a mask carries soft perturbations or hard flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipPhase {
    /// Each entry may sit anywhere with `o + delta` in `[0, 1]`.
    Relaxed,
    /// Entries are in `{-1, 0, +1}`, only on pairs with a hard label,
    /// and map `o` to the opposite hard label.
    Discrete,
}

/// A per-pair label perturbation over a whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipMask {
    delta: Vec<f64>,
    phase: FlipPhase,
}

impl FlipMask {
    /// A discrete mask with no flips.
    pub fn empty(n: usize) -> Self {
        Self { delta: vec![0.0; n], phase: FlipPhase::Discrete }
    }

    /// Soft perturbations; every `o_i + delta_i` must stay in `[0, 1]`.
    pub fn relaxed(delta: Vec<f64>, data: &PreferenceDataset) -> Result<Self> {
        if delta.len() != data.len() {
            return Err(Error::InvalidInput(format!(
                "mask has {} entries for {} pairs",
                delta.len(),
                data.len()
            )));
        }
        for (i, (d, o)) in delta.iter().zip(data.labels()).enumerate() {
            let moved = o + d;
            if !d.is_finite() || !(0.0..=1.0).contains(&moved) {
                return Err(Error::InvalidFlip(format!(
                    "entry {i}: label {o} + delta {d} leaves [0, 1]"
                )));
            }
        }
        Ok(Self { delta, phase: FlipPhase::Relaxed })
    }

    /// Hard flips on `flip_indices`, which must be distinct pairs with
    /// hard labels, at most `floor(kappa * n)` of them.
    pub fn discrete(
        data: &PreferenceDataset,
        flip_indices: &[usize],
        kappa: f64,
    ) -> Result<Self> {
        check_kappa(kappa)?;
        let n = data.len();
        let budget = flip_budget(kappa, n);
        if flip_indices.len() > budget {
            return Err(Error::InvalidFlip(format!(
                "{} flips exceed the budget floor({kappa} * {n}) = {budget}",
                flip_indices.len()
            )));
        }
        let mut seen = vec![false; n];
        let mut delta = vec![0.0; n];
        for &i in flip_indices {
            if i >= n {
                return Err(Error::InvalidFlip(format!("index {i} is out of range for {n} pairs")));
            }
            if seen[i] {
                return Err(Error::InvalidFlip(format!("index {i} flipped twice")));
            }
            seen[i] = true;
            let o = data.pair(i).o;
            if o != 0.0 && o != 1.0 {
                return Err(Error::InvalidFlip(format!(
                    "pair {i} has tie label {o}; only hard labels can flip"
                )));
            }
            delta[i] = 1.0 - 2.0 * o;
        }
        Ok(Self { delta, phase: FlipPhase::Discrete })
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn phase(&self) -> FlipPhase {
        self.phase
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    /// Indices with a nonzero perturbation, ascending.
    pub fn touched_indices(&self) -> Vec<usize> {
        self.delta
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn flip_count(&self) -> usize {
        self.delta.iter().filter(|d| **d != 0.0).count()
    }

    /// One `index new_label` record per touched pair. Lines with `#` are
    /// comments. The dataset supplies the base labels.
    pub fn to_text(&self, data: &PreferenceDataset) -> Result<String> {
        if self.delta.len() != data.len() {
            return Err(Error::InvalidInput(format!(
                "mask has {} entries for {} pairs",
                self.delta.len(),
                data.len()
            )));
        }
        let mut out = String::new();
        for i in self.touched_indices() {
            let new_label = data.pair(i).o + self.delta[i];
            out.push_str(&format!("{i} {new_label}\n"));
        }
        Ok(out)
    }

    /// Parses [`FlipMask::to_text`] output against the same dataset. The
    /// phase is discrete when every record moves a hard label to the
    /// opposite hard label, relaxed otherwise.
    pub fn from_text(text: &str, data: &PreferenceDataset) -> Result<Self> {
        let mut delta = vec![0.0; data.len()];
        let mut discrete = true;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let bad = || Error::Parse(format!("line {}: expected `index new_label`", lineno + 1));
            let idx: usize = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let new_label: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if parts.next().is_some() {
                return Err(bad());
            }
            if idx >= data.len() {
                return Err(Error::Parse(format!(
                    "line {}: index {idx} is out of range for {} pairs",
                    lineno + 1,
                    data.len()
                )));
            }
            let o = data.pair(idx).o;
            delta[idx] = new_label - o;
            let hard_flip = (o == 0.0 || o == 1.0) && new_label == 1.0 - o;
            discrete &= hard_flip;
        }
        if discrete {
            Ok(Self { delta, phase: FlipPhase::Discrete })
        } else {
            Self::relaxed(delta, data)
        }
    }
}

/// Knobs for the attack optimizers.
#[derive(Debug, Clone)]
pub struct AttackConfig {
    /// Fraction of pairs the adversary may flip; budget is `floor(kappa * n)`.
    pub kappa: f64,
    /// Weight of the visibility penalty inside the objective.
    pub alpha: f64,
    /// How many model samples the caller should draw for moment estimates.
    pub cov_batch: usize,
    /// Largest per-round label movement during the relaxed updates. Each
    /// round's gradient is rescaled to unit max magnitude before stepping,
    /// so the optimizer behaves the same whether the exponentiated rewards
    /// sit at order one or blow past 1e10 on sharply separable data.
    pub attack_lr: f64,
    /// Relaxed optimization rounds before hard selection.
    pub attack_iters: usize,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { kappa: 0.2, alpha: 1.0, cov_batch: 1024, attack_lr: 0.05, attack_iters: 20, seed: 0 }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        check_kappa(self.kappa)?;
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::InvalidInput(format!("alpha {} must be >= 0", self.alpha)));
        }
        if self.cov_batch == 0 {
            return Err(Error::InvalidInput("cov_batch must be at least 1".into()));
        }
        if !self.attack_lr.is_finite() || self.attack_lr <= 0.0 {
            return Err(Error::InvalidInput(format!("attack_lr {} must be positive", self.attack_lr)));
        }
        Ok(())
    }
}

/// The attack objective split into its two parts.
///
/// `total = cov_term + alpha * dist_term`; a more negative covariance
/// means curation under the corrupted model works against the benign
/// one, while a small distance keeps the corruption inconspicuous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub cov_term: f64,
    pub dist_term: f64,
    pub total: f64,
}

impl ObjectiveValue {
    fn new(cov_term: f64, dist_term: f64, alpha: f64) -> Self {
        Self { cov_term, dist_term, total: cov_term + alpha * dist_term }
    }

    /// Unweighted `cov_term + dist_term`, the default Pareto tiebreak.
    pub fn plain_sum(&self) -> f64 {
        self.cov_term + self.dist_term
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !kappa.is_finite() || kappa <= 0.0 || kappa >= 1.0 {
        return Err(Error::InvalidInput(format!("kappa {kappa} must lie strictly inside (0, 1)")));
    }
    Ok(())
}

fn flip_budget(kappa: f64, n: usize) -> usize {
    (kappa * n as f64).floor() as usize
}

/// Pairs whose label a discrete flip may touch.
fn eligible_indices(data: &PreferenceDataset) -> Vec<usize> {
    data.labels()
        .iter()
        .enumerate()
        .filter(|(_, o)| **o == 0.0 || **o == 1.0)
        .map(|(i, _)| i)
        .collect()
}

/// Evaluates the attack objective on a batch of model samples: the
/// empirical covariance of `(e^R, e^R_tilde)` plus `alpha` times the mean
/// squared reward difference.
pub fn objective_j(
    model_benign: &LinearRewardModel,
    model_tilde: &LinearRewardModel,
    batch: &[SupportPoint],
    alpha: f64,
) -> Result<ObjectiveValue> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("objective batch is empty".into()));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidInput(format!("alpha {alpha} must be >= 0")));
    }
    let b = batch.len() as f64;
    let mut sum_a = 0.0;
    let mut sum_t = 0.0;
    let mut sum_at = 0.0;
    let mut sum_sq = 0.0;
    for x in batch {
        let r = model_benign.reward(x)?;
        let rt = model_tilde.reward(x)?;
        check_exp_range(r)?;
        check_exp_range(rt)?;
        let (a, t) = (r.exp(), rt.exp());
        sum_a += a;
        sum_t += t;
        sum_at += a * t;
        sum_sq += (r - rt) * (r - rt);
    }
    let cov = sum_at / b - (sum_a / b) * (sum_t / b);
    Ok(ObjectiveValue::new(cov, sum_sq / b, alpha))
}

fn check_exp_range(r: f64) -> Result<()> {
    if r.abs() > MAX_EXP_REWARD {
        return Err(Error::InvalidInput(format!(
            "reward value {r} exceeds the exponentiation cap {MAX_EXP_REWARD}"
        )));
    }
    Ok(())
}

/// How the refit parameters move with the label perturbations:
/// `-(H + damp I)^{-1} dGrad/dDelta`, a `q x n` matrix. `model_tilde`
/// must already (approximately) minimize the fit loss on the perturbed
/// data, so the stationarity condition anchors the derivative.
pub fn implicit_dtheta_ddelta(
    data: &PreferenceDataset,
    model_tilde: &LinearRewardModel,
    l2_reg: f64,
) -> Result<DMatrix<f64>> {
    let mut h = hessian_loss(data, model_tilde, l2_reg)?;
    for i in 0..h.nrows() {
        h[(i, i)] += HESSIAN_DAMP;
    }
    let chol = nalgebra::Cholesky::new(h).ok_or_else(|| {
        Error::SingularHessian(format!(
            "refit Hessian is not positive definite even with damping {HESSIAN_DAMP}"
        ))
    })?;
    let cross = cross_deriv_loss(data, model_tilde)?;
    Ok(-chol.solve(&cross))
}

/// Everything the relaxed gradient attack produces.
#[derive(Debug, Clone)]
pub struct GradientAttackOutcome {
    pub mask: FlipMask,
    pub model_benign: LinearRewardModel,
    /// Refit on the hard-flipped dataset.
    pub model_tilde: LinearRewardModel,
    /// Objective after each relaxed round, in order.
    pub objective_log: Vec<ObjectiveValue>,
    /// Objective of the final hard mask.
    pub final_objective: ObjectiveValue,
}

/// Relaxed-then-rounded label-flip attack.
///
/// Fits the benign model, initializes a small random soft perturbation,
/// and for `attack_iters` rounds refits the corrupted model on the soft
/// labels (warm-started), backpropagates the objective through the refit
/// via [`implicit_dtheta_ddelta`], and takes a clamped gradient step on
/// the perturbation. The step is normalized to unit max magnitude, with
/// `attack_lr` setting the largest per-round movement; raw steps would
/// slam every perturbation into its box bound in one round whenever the
/// exponentiated covariance term is large, reducing the final selection
/// to index order. The `floor(kappa * n)` hard-labeled pairs with the
/// largest final perturbation magnitudes are flipped (ties to the lower
/// index), and the returned corrupted model is refit on that flipped
/// dataset.
pub fn gradient_attack(
    data: &PreferenceDataset,
    map: &FeatureMap,
    tilde_map: &FeatureMap,
    batch: &[SupportPoint],
    attack: &AttackConfig,
    fit: &FitConfig,
) -> Result<GradientAttackOutcome> {
    attack.validate()?;
    fit.validate()?;
    let n = data.len();
    let model_benign = fit_mle(data, &LinearRewardModel::zeros(map.clone()), fit)?;

    // Benign-side batch quantities never change during the attack.
    let mut bench_r = Vec::with_capacity(batch.len());
    for x in batch {
        let r = model_benign.reward(x)?;
        check_exp_range(r)?;
        bench_r.push(r);
    }
    let tilde_feats: Vec<DVector<f64>> =
        batch.iter().map(|x| tilde_map.eval(x)).collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(attack.seed);
    let labels = data.labels();
    // A tiny random perturbation keeps the final magnitude ranking driven
    // by accumulated gradient signal rather than by where each coordinate
    // happened to start; spread starts drown that signal in init noise.
    let jitter = Uniform::new(-0.01f64, 0.01f64);
    let mut delta: Vec<f64> = labels
        .iter()
        .map(|o| rng.sample(jitter).clamp(-o, 1.0 - o))
        .collect();

    let mut tilde = if tilde_map == map {
        model_benign.clone()
    } else {
        LinearRewardModel::zeros(tilde_map.clone())
    };
    let mut objective_log = Vec::with_capacity(attack.attack_iters);
    for _ in 0..attack.attack_iters {
        let soft: Vec<f64> = labels.iter().zip(&delta).map(|(o, d)| o + d).collect();
        let soft_data = data.with_labels(&soft)?;
        tilde = fit_mle(&soft_data, &tilde, fit)?;
        objective_log.push(objective_j(&model_benign, &tilde, batch, attack.alpha)?);

        let grad_theta = grad_theta_objective(&bench_r, &tilde, &tilde_feats, attack.alpha)?;
        let sensitivity = implicit_dtheta_ddelta(&soft_data, &tilde, fit.l2_reg)?;
        let grad_delta = sensitivity.transpose() * grad_theta;
        // Coordinates pinned at a box bound with the gradient pointing
        // outward cannot move; excluding them from the normalization lets
        // the free coordinates keep developing ranking signal instead of
        // idling below a clamped dominant one.
        let blocked = |i: usize| {
            (delta[i] <= -labels[i] && grad_delta[i] > 0.0)
                || (delta[i] >= 1.0 - labels[i] && grad_delta[i] < 0.0)
        };
        let scale = (0..n)
            .filter(|&i| !blocked(i))
            .fold(0.0_f64, |m, i| m.max(grad_delta[i].abs()));
        if scale == 0.0 {
            break;
        }
        for i in 0..n {
            let moved = delta[i] - attack.attack_lr * grad_delta[i] / scale;
            delta[i] = moved.clamp(-labels[i], 1.0 - labels[i]);
        }
    }

    // Hard selection: largest |delta| among hard-labeled pairs.
    let budget = flip_budget(attack.kappa, n);
    let mut ranked = eligible_indices(data);
    ranked.sort_by(|&a, &b| {
        delta[b]
            .abs()
            .partial_cmp(&delta[a].abs())
            .expect("perturbations stay finite")
            .then(a.cmp(&b))
    });
    ranked.truncate(budget);
    let mask = FlipMask::discrete(data, &ranked, attack.kappa)?;
    let flipped = apply_flips(data, &mask)?;
    let model_tilde = fit_mle(&flipped, &tilde, fit)?;
    let final_objective = objective_j(&model_benign, &model_tilde, batch, attack.alpha)?;
    Ok(GradientAttackOutcome { mask, model_benign, model_tilde, objective_log, final_objective })
}

/// Gradient of the attack objective in the corrupted model's parameters,
/// on the fixed batch.
fn grad_theta_objective(
    bench_r: &[f64],
    tilde: &LinearRewardModel,
    tilde_feats: &[DVector<f64>],
    alpha: f64,
) -> Result<DVector<f64>> {
    let b = bench_r.len() as f64;
    let a_vals: Vec<f64> = bench_r.iter().map(|r| r.exp()).collect();
    let a_mean = a_vals.iter().sum::<f64>() / b;
    let mut grad = DVector::zeros(tilde.theta().len());
    for (i, phi) in tilde_feats.iter().enumerate() {
        let rt = tilde.theta().dot(phi);
        check_exp_range(rt)?;
        let w = (a_vals[i] - a_mean) * rt.exp() / b + alpha * 2.0 * (rt - bench_r[i]) / b;
        grad.axpy(w, phi, 1.0);
    }
    Ok(grad)
}

/// Which pair statistic the ranking heuristic scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeuristicMode {
    /// `|R(x) - R(z)|`: flip the most decided pairs.
    Diff,
    /// `max(|R(x)|, |R(z)|)`: flip the pairs holding the largest rewards.
    MaxAbs,
}

/// Flips the `floor(kappa * n)` hard-labeled pairs with the highest score
/// under the benign model; ties break toward the lower index.
pub fn heuristic_rank(
    data: &PreferenceDataset,
    model_benign: &LinearRewardModel,
    mode: HeuristicMode,
    kappa: f64,
) -> Result<FlipMask> {
    check_kappa(kappa)?;
    let mut scored = Vec::new();
    for i in eligible_indices(data) {
        let pair = data.pair(i);
        let rx = model_benign.reward(&pair.x)?;
        let rz = model_benign.reward(&pair.z)?;
        let score = match mode {
            HeuristicMode::Diff => (rx - rz).abs(),
            HeuristicMode::MaxAbs => rx.abs().max(rz.abs()),
        };
        scored.push((i, score));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("rewards are finite").then(a.0.cmp(&b.0)));
    scored.truncate(flip_budget(kappa, data.len()));
    let indices: Vec<usize> = scored.into_iter().map(|(i, _)| i).collect();
    FlipMask::discrete(data, &indices, kappa)
}

/// Indices of the points no other point beats on both coordinates
/// (minimizing; one strict inequality required, so exact duplicates are
/// mutually non-dominated). Ascending order.
pub fn non_dominated_front(points: &[(f64, f64)]) -> Result<Vec<usize>> {
    for (i, (f1, f2)) in points.iter().enumerate() {
        if !f1.is_finite() || !f2.is_finite() {
            return Err(Error::InvalidInput(format!("point {i} = ({f1}, {f2}) is not finite")));
        }
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .partial_cmp(&points[b])
            .expect("finite values compare")
            .then(a.cmp(&b))
    });
    let mut front = Vec::new();
    // Sweep blocks of equal f1: within a block only the smallest f2 group
    // can survive, and it survives iff no earlier block reached an f2 at
    // or below it.
    let mut best_f2_before = f64::INFINITY;
    let mut i = 0;
    while i < order.len() {
        let f1 = points[order[i]].0;
        let block_f2 = points[order[i]].1;
        let mut j = i;
        while j < order.len() && points[order[j]].0 == f1 {
            if points[order[j]].1 == block_f2 && best_f2_before > block_f2 {
                front.push(order[j]);
            }
            j += 1;
        }
        best_f2_before = best_f2_before.min(block_f2);
        i = j;
    }
    front.sort_unstable();
    Ok(front)
}

/// How [`pareto_attack`] picks its winner off the front.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParetoSelection {
    /// Smallest `cov_term + dist_term`.
    MinSum,
    /// Smallest `cov_term` alone.
    MinCov,
}

/// What the Pareto pool search produces; the pool diagnostics stay
/// available so callers can audit the front.
#[derive(Debug, Clone)]
pub struct ParetoOutcome {
    pub mask: FlipMask,
    pub model_benign: LinearRewardModel,
    /// Refit on the selected mask's flipped dataset.
    pub model_tilde: LinearRewardModel,
    pub pool_objectives: Vec<ObjectiveValue>,
    /// Front member positions within the pool, ascending.
    pub front: Vec<usize>,
    /// Pool position of the returned mask.
    pub selected: usize,
}

/// Samples `pool_size` random masks that each flip `floor(kappa * n)`
/// hard-labeled pairs (clipped to the eligible count), refits the
/// corrupted model for each, and returns the Pareto-front member that
/// minimizes the selection criterion; ties go to the earliest pool entry.
#[allow(clippy::too_many_arguments)]
pub fn pareto_attack(
    data: &PreferenceDataset,
    map: &FeatureMap,
    tilde_map: &FeatureMap,
    batch: &[SupportPoint],
    attack: &AttackConfig,
    fit: &FitConfig,
    pool_size: usize,
    selection: ParetoSelection,
) -> Result<ParetoOutcome> {
    attack.validate()?;
    fit.validate()?;
    if pool_size == 0 {
        return Err(Error::InvalidInput("pool_size must be at least 1".into()));
    }
    let eligible = eligible_indices(data);
    if eligible.is_empty() {
        return Err(Error::InvalidInput(
            "no pair has a hard label, so no flip mask can be built".into(),
        ));
    }
    let budget = flip_budget(attack.kappa, data.len()).min(eligible.len());
    let model_benign = fit_mle(data, &LinearRewardModel::zeros(map.clone()), fit)?;
    let warm = if tilde_map == map {
        model_benign.clone()
    } else {
        LinearRewardModel::zeros(tilde_map.clone())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(attack.seed);
    let mut masks = Vec::with_capacity(pool_size);
    let mut pool_objectives = Vec::with_capacity(pool_size);
    for _ in 0..pool_size {
        let chosen: Vec<usize> =
            eligible.choose_multiple(&mut rng, budget).copied().collect();
        let mask = FlipMask::discrete(data, &chosen, attack.kappa)?;
        let flipped = apply_flips(data, &mask)?;
        let tilde = fit_mle(&flipped, &warm, fit)?;
        pool_objectives.push(objective_j(&model_benign, &tilde, batch, attack.alpha)?);
        masks.push(mask);
    }

    let coords: Vec<(f64, f64)> =
        pool_objectives.iter().map(|o| (o.cov_term, o.dist_term)).collect();
    let front = non_dominated_front(&coords)?;
    let mut selected = front[0];
    let mut best = f64::INFINITY;
    for &i in &front {
        let value = match selection {
            ParetoSelection::MinSum => pool_objectives[i].plain_sum(),
            ParetoSelection::MinCov => pool_objectives[i].cov_term,
        };
        if value < best {
            best = value;
            selected = i;
        }
    }
    let mask = masks.swap_remove(selected);
    let flipped = apply_flips(data, &mask)?;
    let model_tilde = fit_mle(&flipped, &warm, fit)?;
    Ok(ParetoOutcome { mask, model_benign, model_tilde, pool_objectives, front, selected })
}

/// Uniformly flips `floor(kappa * n)` hard-labeled pairs without
/// replacement. The flag reports whether the budget had to be clipped to
/// the eligible count.
pub fn random_attack<R: Rng>(
    data: &PreferenceDataset,
    kappa: f64,
    rng: &mut R,
) -> Result<(FlipMask, bool)> {
    check_kappa(kappa)?;
    let eligible = eligible_indices(data);
    if eligible.is_empty() {
        return Err(Error::InvalidInput(
            "no pair has a hard label, so no flip mask can be built".into(),
        ));
    }
    let budget = flip_budget(kappa, data.len());
    let clipped = budget > eligible.len();
    let take = budget.min(eligible.len());
    let chosen: Vec<usize> = eligible.choose_multiple(rng, take).copied().collect();
    Ok((FlipMask::discrete(data, &chosen, kappa)?, clipped))
}

/// Applies a discrete mask: flipped pairs get the opposite hard label,
/// everything else is untouched. Applying the same mask twice restores
/// the original dataset.
pub fn apply_flips(data: &PreferenceDataset, mask: &FlipMask) -> Result<PreferenceDataset> {
    if mask.phase() != FlipPhase::Discrete {
        return Err(Error::InvalidFlip("only discrete masks can be applied".into()));
    }
    if mask.len() != data.len() {
        return Err(Error::InvalidInput(format!(
            "mask has {} entries for {} pairs",
            mask.len(),
            data.len()
        )));
    }
    let mut labels = data.labels();
    for (i, d) in mask.delta().iter().enumerate() {
        if *d == 0.0 {
            continue;
        }
        let o = labels[i];
        if o != 0.0 && o != 1.0 {
            return Err(Error::InvalidFlip(format!(
                "pair {i} has tie label {o}; only hard labels can flip"
            )));
        }
        if d.abs() != 1.0 {
            return Err(Error::InvalidFlip(format!(
                "entry {i}: delta {d} is not a whole flip"
            )));
        }
        labels[i] = 1.0 - o;
    }
    data.with_labels(&labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preference::PreferencePair;
    use proptest::prelude::*;

    fn pt(coords: &[f64]) -> SupportPoint {
        SupportPoint::new(coords.to_vec()).unwrap()
    }

    fn line_model(theta: f64) -> LinearRewardModel {
        LinearRewardModel::new(vec![theta], FeatureMap::Identity { dim: 1 }).unwrap()
    }

    fn line_batch() -> Vec<SupportPoint> {
        [0.0, 1.0, 2.0, 3.0].iter().map(|v| pt(&[*v])).collect()
    }

    /// Pairs over 1-D points labeled by "prefer the larger coordinate".
    fn line_dataset(points: &[(f64, f64)]) -> PreferenceDataset {
        let pairs = points
            .iter()
            .map(|(x, z)| {
                let o = if x > z {
                    0.0
                } else if x < z {
                    1.0
                } else {
                    0.5
                };
                PreferencePair::new(pt(&[*x]), pt(&[*z]), o).unwrap()
            })
            .collect();
        PreferenceDataset::new(pairs).unwrap()
    }

    #[test]
    fn objective_identical_models_is_variance() {
        // Frozen from an independent numpy computation.
        let m = line_model(0.8);
        let value = objective_j(&m, &m, &line_batch(), 0.5).unwrap();
        assert!((value.cov_term - 14.954795483241842).abs() < 1e-12);
        assert_eq!(value.dist_term, 0.0);
        assert!((value.total - value.cov_term).abs() < 1e-12);
    }

    #[test]
    fn objective_negated_model_matches_direct_summation() {
        let benign = line_model(0.8);
        let tilde = benign.negated();
        let value = objective_j(&benign, &tilde, &line_batch(), 0.5).unwrap();
        assert!((value.cov_term - -1.090522618533727).abs() < 1e-13);
        assert!((value.dist_term - 8.960000000000003).abs() < 1e-12);
        assert!((value.total - 3.3894773814662744).abs() < 1e-12);
    }

    #[test]
    fn objective_constant_tilde_has_zero_covariance() {
        let benign = line_model(0.8);
        let constant = line_model(0.0);
        let value = objective_j(&benign, &constant, &line_batch(), 1.0).unwrap();
        assert!(value.cov_term.abs() < 1e-12);
        assert!(objective_j(&benign, &constant, &[], 1.0).is_err());
    }

    #[test]
    fn grad_theta_objective_matches_finite_differences() {
        let benign = line_model(0.8);
        let tilde =
            LinearRewardModel::new(vec![0.4, -0.2], FeatureMap::IdentityWithBias { dim: 1 })
                .unwrap();
        let batch = line_batch();
        let map = tilde.feature_map().clone();
        let bench_r: Vec<f64> = batch.iter().map(|x| benign.reward(x).unwrap()).collect();
        let feats: Vec<DVector<f64>> = batch.iter().map(|x| map.eval(x).unwrap()).collect();
        let alpha = 0.7;
        let grad = grad_theta_objective(&bench_r, &tilde, &feats, alpha).unwrap();
        let eps = 1e-6;
        for k in 0..2 {
            let mut plus = tilde.theta().as_slice().to_vec();
            let mut minus = plus.clone();
            plus[k] += eps;
            minus[k] -= eps;
            let j = |theta: Vec<f64>| {
                let m = LinearRewardModel::new(theta, map.clone()).unwrap();
                objective_j(&benign, &m, &batch, alpha).unwrap().total
            };
            let fd = (j(plus) - j(minus)) / (2.0 * eps);
            assert!((grad[k] - fd).abs() < 1e-6, "component {k}: {} vs {fd}", grad[k]);
        }
    }

    /// Matches the frozen two-pair instance used by the derivative tests
    /// in the preference module.
    #[test]
    fn implicit_derivative_matches_reference() {
        let data = PreferenceDataset::new(vec![
            PreferencePair::new(pt(&[1.0, 2.0]), pt(&[0.5, -1.0]), 1.0).unwrap(),
            PreferencePair::new(pt(&[-0.3, 0.4]), pt(&[0.8, 0.2]), 0.0).unwrap(),
        ])
        .unwrap();
        let model =
            LinearRewardModel::new(vec![0.3, -0.7, 0.1], FeatureMap::IdentityWithBias { dim: 2 })
                .unwrap();
        let m = implicit_dtheta_ddelta(&data, &model, 0.01).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (3, 2));
        let expect = [
            [-0.5262607314114961, 3.49165862498629],
            [-2.9098265522451547, -0.5829692727965101],
            [0.0, 0.0],
        ];
        for (r, row) in expect.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert!((m[(r, c)] - v).abs() < 1e-12, "entry ({r}, {c}) = {}", m[(r, c)]);
            }
        }
    }

    #[test]
    fn implicit_derivative_scalar_closed_form() {
        let data = PreferenceDataset::new(vec![PreferencePair::new(
            pt(&[2.0]),
            pt(&[0.5]),
            1.0,
        )
        .unwrap()])
        .unwrap();
        let model = line_model(0.4);
        let m = implicit_dtheta_ddelta(&data, &model, 0.01).unwrap();
        let g = 1.5;
        let s = crate::preference::sigmoid(0.4 * g);
        let expect = -g / (s * (1.0 - s) * g * g + 2.0 * 0.01 + HESSIAN_DAMP);
        assert!((m[(0, 0)] - expect).abs() < 1e-12);
    }

    #[test]
    fn implicit_derivative_zero_column_for_identical_features() {
        let data = PreferenceDataset::new(vec![
            PreferencePair::new(pt(&[1.0]), pt(&[1.0]), 0.5).unwrap(),
            PreferencePair::new(pt(&[2.0]), pt(&[0.0]), 1.0).unwrap(),
        ])
        .unwrap();
        let m = implicit_dtheta_ddelta(&data, &line_model(0.1), 0.01).unwrap();
        assert_eq!(m[(0, 0)], 0.0);
        assert!(m[(0, 1)] != 0.0);
    }

    #[test]
    fn implicit_derivative_column_matches_refit_differences() {
        // Interior labels keep the central differences two-sided.
        let hard = line_dataset(&[(0.0, 1.0), (2.0, 0.5), (1.5, 1.0), (0.2, 2.0)]);
        let data = hard.with_labels(&[0.8, 0.2, 0.3, 0.6]).unwrap();
        let fit = FitConfig { grad_tol: 1e-12, l2_reg: 1e-2, ..FitConfig::default() };
        let map = FeatureMap::Identity { dim: 1 };
        let base = fit_mle(&data, &LinearRewardModel::zeros(map.clone()), &fit).unwrap();
        let m = implicit_dtheta_ddelta(&data, &base, fit.l2_reg).unwrap();
        let eps = 1e-4;
        let labels = data.labels();
        for col in 0..data.len() {
            let mut plus = labels.clone();
            let mut minus = labels.clone();
            plus[col] += eps;
            minus[col] -= eps;
            let tp = fit_mle(&data.with_labels(&plus).unwrap(), &base, &fit).unwrap();
            let tm = fit_mle(&data.with_labels(&minus).unwrap(), &base, &fit).unwrap();
            let fd = (tp.theta()[0] - tm.theta()[0]) / (2.0 * eps);
            let rel = (m[(0, col)] - fd).abs() / fd.abs().max(1e-12);
            assert!(rel < 1e-3, "column {col}: implicit {} vs refit {fd}", m[(0, col)]);
        }
    }

    #[test]
    fn discrete_mask_validates_budget_and_ties() {
        let data = line_dataset(&[(0.0, 1.0), (1.0, 1.0), (3.0, 0.0), (0.5, 2.0)]);
        assert!(FlipMask::discrete(&data, &[0], 0.3).is_ok());
        // Budget floor(0.3 * 4) = 1.
        assert!(matches!(
            FlipMask::discrete(&data, &[0, 2], 0.3),
            Err(Error::InvalidFlip(_))
        ));
        // Pair 1 is a tie.
        assert!(matches!(FlipMask::discrete(&data, &[1], 0.3), Err(Error::InvalidFlip(_))));
        assert!(matches!(FlipMask::discrete(&data, &[9], 0.3), Err(Error::InvalidFlip(_))));
        assert!(matches!(
            FlipMask::discrete(&data, &[0, 0], 0.9),
            Err(Error::InvalidFlip(_))
        ));
    }

    #[test]
    fn relaxed_mask_keeps_labels_in_range() {
        let data = line_dataset(&[(0.0, 1.0), (2.0, 1.0)]);
        assert!(FlipMask::relaxed(vec![-0.4, 0.3], &data).is_ok());
        // First label is 1.0, so +0.2 leaves [0, 1].
        assert!(FlipMask::relaxed(vec![0.2, 0.0], &data).is_err());
        assert!(FlipMask::relaxed(vec![0.0], &data).is_err());
    }

    #[test]
    fn mask_text_round_trips() {
        let data = line_dataset(&[(0.0, 1.0), (1.0, 1.0), (3.0, 0.0), (0.5, 2.0)]);
        let mask = FlipMask::discrete(&data, &[2, 0], 0.6).unwrap();
        let text = mask.to_text(&data).unwrap();
        let back = FlipMask::from_text(&text, &data).unwrap();
        assert_eq!(back, mask);
        assert_eq!(back.phase(), FlipPhase::Discrete);

        let soft = FlipMask::relaxed(vec![-0.25, 0.125, 0.0, 0.0], &data).unwrap();
        let back = FlipMask::from_text(&soft.to_text(&data).unwrap(), &data).unwrap();
        assert_eq!(back, soft);
        assert_eq!(back.phase(), FlipPhase::Relaxed);

        assert!(FlipMask::from_text("0 1 junk", &data).is_err());
        assert!(FlipMask::from_text("17 1", &data).is_err());
    }

    #[test]
    fn apply_flips_is_an_involution() {
        let data = line_dataset(&[(0.0, 1.0), (1.0, 1.0), (3.0, 0.0), (0.5, 2.0)]);
        let mask = FlipMask::discrete(&data, &[0, 3], 0.6).unwrap();
        let flipped = apply_flips(&data, &mask).unwrap();
        assert_eq!(flipped.labels(), vec![0.0, 0.5, 0.0, 0.0]);
        let back = apply_flips(&flipped, &mask).unwrap();
        assert_eq!(back.labels(), data.labels());

        let empty = FlipMask::empty(4);
        assert_eq!(apply_flips(&data, &empty).unwrap().labels(), data.labels());

        let relaxed = FlipMask::relaxed(vec![0.0; 4], &data).unwrap();
        assert!(matches!(apply_flips(&data, &relaxed), Err(Error::InvalidFlip(_))));
    }

    #[test]
    fn heuristic_diff_flips_most_decided_pair() {
        // Reward gaps 5, 1, 3 with unit slope; budget 1.
        let data = line_dataset(&[(5.0, 0.0), (1.0, 0.0), (0.0, 3.0)]);
        let mask = heuristic_rank(&data, &line_model(1.0), HeuristicMode::Diff, 0.34).unwrap();
        assert_eq!(mask.touched_indices(), vec![0]);
    }

    #[test]
    fn heuristic_max_abs_follows_largest_magnitude() {
        let data = line_dataset(&[(0.1, -9.0), (2.0, 3.0)]);
        let mask = heuristic_rank(&data, &line_model(1.0), HeuristicMode::MaxAbs, 0.5).unwrap();
        assert_eq!(mask.touched_indices(), vec![0]);
    }

    #[test]
    fn heuristic_ties_break_toward_low_index() {
        let data = line_dataset(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0)]);
        let mask = heuristic_rank(&data, &line_model(1.0), HeuristicMode::Diff, 0.55).unwrap();
        assert_eq!(mask.touched_indices(), vec![0, 1]);
    }

    #[test]
    fn front_handles_singletons_ties_and_duplicates() {
        assert_eq!(non_dominated_front(&[(3.0, 4.0)]).unwrap(), vec![0]);
        assert_eq!(
            non_dominated_front(&[(1.0, 2.0), (2.0, 1.0), (2.0, 2.0)]).unwrap(),
            vec![0, 1]
        );
        let same = vec![(1.5, 2.5); 5];
        assert_eq!(non_dominated_front(&same).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(non_dominated_front(&[(f64::NAN, 0.0)]).is_err());
        assert_eq!(non_dominated_front(&[]).unwrap(), Vec::<usize>::new());
    }

    fn brute_force_front(points: &[(f64, f64)]) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| {
                !points.iter().any(|q| {
                    q.0 <= points[i].0
                        && q.1 <= points[i].1
                        && (q.0 < points[i].0 || q.1 < points[i].1)
                })
            })
            .collect()
    }

    proptest! {
        #[test]
        fn front_matches_brute_force(
            points in prop::collection::vec((0i8..6, 0i8..6), 1..40)
        ) {
            // A coarse grid forces plenty of ties and exact duplicates.
            let pts: Vec<(f64, f64)> =
                points.iter().map(|(a, b)| (*a as f64, *b as f64)).collect();
            prop_assert_eq!(non_dominated_front(&pts).unwrap(), brute_force_front(&pts));
        }
    }

    #[test]
    fn random_attack_saturates_and_reproduces() {
        let data = line_dataset(&[(0.0, 1.0), (1.0, 1.0), (3.0, 0.0), (0.5, 2.0), (2.0, 2.0)]);
        // floor(0.9 * 5) = 4 exceeds the 3 eligible pairs.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mask, clipped) = random_attack(&data, 0.9, &mut rng).unwrap();
        assert!(clipped);
        assert_eq!(mask.touched_indices(), vec![0, 2, 3]);

        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        let (ma, _) = random_attack(&data, 0.5, &mut a).unwrap();
        let (mb, _) = random_attack(&data, 0.5, &mut b).unwrap();
        assert_eq!(ma, mb);

        let ties = line_dataset(&[(1.0, 1.0)]);
        assert!(random_attack(&ties, 0.5, &mut rng).is_err());
    }

    #[test]
    fn random_attack_overlap_matches_hypergeometric_rate() {
        // All 10 pairs eligible, budget 2: two independent masks share
        // 2 * 2 / 10 = 0.4 indices in expectation.
        let points: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, i as f64 + 1.0)).collect();
        let data = line_dataset(&points);
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let trials = 10_000;
        let mut overlap = 0usize;
        for _ in 0..trials {
            let (a, _) = random_attack(&data, 0.2, &mut rng).unwrap();
            let (b, _) = random_attack(&data, 0.2, &mut rng).unwrap();
            let ia = a.touched_indices();
            overlap += b.touched_indices().iter().filter(|i| ia.contains(i)).count();
        }
        let mean = overlap as f64 / trials as f64;
        assert!((mean - 0.4).abs() < 0.02, "mean overlap = {mean}");
    }

    fn attack_dataset() -> PreferenceDataset {
        // Larger coordinate preferred; a mix of gaps and directions.
        line_dataset(&[
            (0.0, 3.0),
            (2.5, 0.5),
            (1.0, 2.0),
            (3.0, 1.5),
            (0.2, 2.8),
            (2.2, 0.1),
            (0.8, 1.6),
            (2.9, 0.4),
            (0.3, 1.1),
            (1.9, 0.6),
        ])
    }

    #[test]
    fn gradient_attack_zero_budget_reduces_to_benign() {
        let data = attack_dataset();
        let map = FeatureMap::Identity { dim: 1 };
        let attack = AttackConfig { kappa: 0.05, attack_iters: 3, seed: 9, ..Default::default() };
        let out =
            gradient_attack(&data, &map, &map, &line_batch(), &attack, &FitConfig::default())
                .unwrap();
        assert_eq!(out.mask.flip_count(), 0);
        let benign_loss =
            crate::preference::bt_loss(&data, &out.model_benign, 1e-4).unwrap();
        let tilde_loss = crate::preference::bt_loss(&data, &out.model_tilde, 1e-4).unwrap();
        assert!((benign_loss - tilde_loss).abs() <= 1e-6);
    }

    #[test]
    fn gradient_attack_is_deterministic_and_beats_random_masks() {
        let data = attack_dataset();
        let map = FeatureMap::Identity { dim: 1 };
        let batch = line_batch();
        let attack = AttackConfig {
            kappa: 0.25,
            alpha: 0.05,
            attack_lr: 0.2,
            attack_iters: 8,
            seed: 42,
            ..Default::default()
        };
        let fit = FitConfig::default();
        let a = gradient_attack(&data, &map, &map, &batch, &attack, &fit).unwrap();
        let b = gradient_attack(&data, &map, &map, &batch, &attack, &fit).unwrap();
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.model_tilde.theta(), b.model_tilde.theta());
        assert_eq!(a.mask.flip_count(), 2);
        assert_eq!(a.objective_log.len(), 8);

        // The optimized mask should push covariance below the random-mask
        // average on this easy instance.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sum = 0.0;
        let trials = 30;
        for _ in 0..trials {
            let (mask, _) = random_attack(&data, attack.kappa, &mut rng).unwrap();
            let flipped = apply_flips(&data, &mask).unwrap();
            let tilde = fit_mle(&flipped, &a.model_benign, &fit).unwrap();
            sum += objective_j(&a.model_benign, &tilde, &batch, attack.alpha)
                .unwrap()
                .cov_term;
        }
        assert!(
            a.final_objective.cov_term < sum / trials as f64,
            "attack {} vs random mean {}",
            a.final_objective.cov_term,
            sum / trials as f64
        );
    }

    #[test]
    fn pareto_attack_selects_off_its_own_front() {
        let data = attack_dataset();
        let map = FeatureMap::Identity { dim: 1 };
        let batch = line_batch();
        let attack = AttackConfig { kappa: 0.25, alpha: 0.1, seed: 3, ..Default::default() };
        let fit = FitConfig::default();
        let out =
            pareto_attack(&data, &map, &map, &batch, &attack, &fit, 16, ParetoSelection::MinSum)
                .unwrap();
        assert_eq!(out.pool_objectives.len(), 16);
        assert!(out.front.contains(&out.selected));
        // The selected point is non-dominated within the whole pool.
        let sel = out.pool_objectives[out.selected];
        for o in &out.pool_objectives {
            let beats = o.cov_term <= sel.cov_term
                && o.dist_term <= sel.dist_term
                && (o.cov_term < sel.cov_term || o.dist_term < sel.dist_term);
            assert!(!beats);
        }
        // And it minimizes the plain sum across the front.
        for &i in &out.front {
            assert!(sel.plain_sum() <= out.pool_objectives[i].plain_sum() + 1e-12);
        }

        let single =
            pareto_attack(&data, &map, &map, &batch, &attack, &fit, 1, ParetoSelection::MinCov)
                .unwrap();
        assert_eq!(single.selected, 0);
        assert_eq!(single.front, vec![0]);

        let ties = line_dataset(&[(1.0, 1.0), (2.0, 2.0)]);
        assert!(pareto_attack(
            &ties,
            &map,
            &map,
            &batch,
            &attack,
            &fit,
            4,
            ParetoSelection::MinSum
        )
        .is_err());
    }

    #[test]
    fn pareto_min_cov_lands_at_or_below_pool_median() {
        let data = attack_dataset();
        let map = FeatureMap::Identity { dim: 1 };
        let batch = line_batch();
        let attack = AttackConfig { kappa: 0.25, alpha: 0.1, seed: 21, ..Default::default() };
        let out = pareto_attack(
            &data,
            &map,
            &map,
            &batch,
            &attack,
            &FitConfig::default(),
            20,
            ParetoSelection::MinCov,
        )
        .unwrap();
        let mut covs: Vec<f64> = out.pool_objectives.iter().map(|o| o.cov_term).collect();
        covs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = covs[covs.len() / 2];
        assert!(out.pool_objectives[out.selected].cov_term <= median);
    }
}
