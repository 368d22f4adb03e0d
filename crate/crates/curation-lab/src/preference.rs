//! Pairwise preference data and reward-model fitting.
//!
//! A comparison presents two points `x` and `z`; the label `o` is 1 when `z`
//! is preferred, 0 when `x` is preferred, and 0.5 for a tie. Relaxed
//! (attacked) datasets may hold any label in `[0, 1]`. Reward models are
//! linear in a feature map, and the fitting loss is the standard pairwise
//! logistic likelihood
//!
//! ```text
//! L(theta) = -sum_i [(1 - o_i) log sig(d_i) + o_i log sig(-d_i)] + l2 |theta|^2,
//! d_i = R(x_i) - R(z_i),
//! ```
//!
//! whose gradient, Hessian, and label cross-derivatives have closed forms in
//! the per-pair feature differences `g_i = f(x_i) - f(z_i)`:
//! gradient `sum_i (sig(d_i) - (1 - o_i)) g_i + 2 l2 theta`, Hessian
//! `sum_i sig(d_i)(1 - sig(d_i)) g_i g_i^T + 2 l2 I`, and the derivative of
//! the gradient with respect to label `i` is just `g_i`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dist::SupportPoint;
use crate::error::{Error, Result};

/// Numerically stable logistic function.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log(sigmoid(t))`.
pub fn log_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

/// Deterministic feature transforms for linear reward models.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    /// Raw coordinates.
    Identity { dim: usize },
    /// Raw coordinates followed by a constant 1.
    IdentityWithBias { dim: usize },
    /// One indicator per class for one-dimensional integer-coded points.
    OneHot { classes: usize },
    /// Gaussian bumps `exp(-gamma |x - c|^2)` around fixed centers,
    /// optionally followed by a constant 1.
    RadialBasis {
        centers: Vec<SupportPoint>,
        gamma: f64,
        bias: bool,
    },
}

impl FeatureMap {
    pub fn output_dim(&self) -> usize {
        match self {
            FeatureMap::Identity { dim } => *dim,
            FeatureMap::IdentityWithBias { dim } => dim + 1,
            FeatureMap::OneHot { classes } => *classes,
            FeatureMap::RadialBasis { centers, bias, .. } => centers.len() + usize::from(*bias),
        }
    }

    /// Evaluates the features of one point.
    pub fn eval(&self, x: &SupportPoint) -> Result<DVector<f64>> {
        match self {
            FeatureMap::Identity { dim } => {
                self.check_dim(x, *dim)?;
                Ok(DVector::from_column_slice(x.coords()))
            }
            FeatureMap::IdentityWithBias { dim } => {
                self.check_dim(x, *dim)?;
                let mut v = x.coords().to_vec();
                v.push(1.0);
                Ok(DVector::from_vec(v))
            }
            FeatureMap::OneHot { classes } => {
                self.check_dim(x, 1)?;
                let idx = x.coords()[0].round();
                if idx < 0.0 || idx >= *classes as f64 {
                    return Err(Error::DomainMismatch(format!(
                        "coordinate {} is outside the {} one-hot classes",
                        x.coords()[0],
                        classes
                    )));
                }
                let mut v = DVector::zeros(*classes);
                v[idx as usize] = 1.0;
                Ok(v)
            }
            FeatureMap::RadialBasis { centers, gamma, bias } => {
                if centers.is_empty() {
                    return Err(Error::InvalidInput("radial basis needs at least one center".into()));
                }
                if !gamma.is_finite() || *gamma <= 0.0 {
                    return Err(Error::InvalidInput(format!("radial basis gamma {gamma} must be positive")));
                }
                self.check_dim(x, centers[0].dim())?;
                let mut v = Vec::with_capacity(self.output_dim());
                for c in centers {
                    v.push((-gamma * x.dist_sq(c)).exp());
                }
                if *bias {
                    v.push(1.0);
                }
                Ok(DVector::from_vec(v))
            }
        }
    }

    fn check_dim(&self, x: &SupportPoint, expected: usize) -> Result<()> {
        if x.dim() != expected {
            return Err(Error::DomainMismatch(format!(
                "point has dimension {}, feature map expects {}",
                x.dim(),
                expected
            )));
        }
        Ok(())
    }
}

/// A reward model linear in a feature map: `R(x) = theta . f(x)`.
#[derive(Debug, Clone)]
pub struct LinearRewardModel {
    theta: DVector<f64>,
    map: FeatureMap,
}

impl LinearRewardModel {
    pub fn new(theta: Vec<f64>, map: FeatureMap) -> Result<Self> {
        if theta.len() != map.output_dim() {
            return Err(Error::InvalidInput(format!(
                "theta has {} entries, feature map produces {}",
                theta.len(),
                map.output_dim()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("theta must be finite".into()));
        }
        Ok(Self { theta: DVector::from_vec(theta), map })
    }

    /// The zero model for a map; the usual fitting start.
    pub fn zeros(map: FeatureMap) -> Self {
        let q = map.output_dim();
        Self { theta: DVector::zeros(q), map }
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.map
    }

    pub fn reward(&self, x: &SupportPoint) -> Result<f64> {
        Ok(self.theta.dot(&self.map.eval(x)?))
    }

    pub fn negated(&self) -> Self {
        Self { theta: -self.theta.clone(), map: self.map.clone() }
    }

    fn with_theta(&self, theta: DVector<f64>) -> Self {
        Self { theta, map: self.map.clone() }
    }
}

/// One pairwise comparison. `o = 1` means `z` is preferred over `x`.
#[derive(Debug, Clone)]
pub struct PreferencePair {
    pub x: SupportPoint,
    pub z: SupportPoint,
    pub o: f64,
}

impl PreferencePair {
    pub fn new(x: SupportPoint, z: SupportPoint, o: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&o) || !o.is_finite() {
            return Err(Error::InvalidInput(format!("label {o} outside [0, 1]")));
        }
        if x.dim() != z.dim() {
            return Err(Error::InvalidInput("pair points must share a dimension".into()));
        }
        Ok(Self { x, z, o })
    }
}

/// A non-empty set of comparisons over points of one dimension.
#[derive(Debug, Clone)]
pub struct PreferenceDataset {
    pairs: Vec<PreferencePair>,
}

impl PreferenceDataset {
    pub fn new(pairs: Vec<PreferencePair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidInput("a preference dataset needs at least one pair".into()));
        }
        let dim = pairs[0].x.dim();
        for (i, p) in pairs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p.o) || !p.o.is_finite() {
                return Err(Error::InvalidInput(format!("pair {i}: label {} outside [0, 1]", p.o)));
            }
            if p.x.dim() != dim || p.z.dim() != dim {
                return Err(Error::InvalidInput(format!("pair {i}: inconsistent point dimension")));
            }
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[PreferencePair] {
        &self.pairs
    }

    pub fn pair(&self, i: usize) -> &PreferencePair {
        &self.pairs[i]
    }

    pub fn dim(&self) -> usize {
        self.pairs[0].x.dim()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.o).collect()
    }

    /// Copy of the dataset with every label replaced. Lengths must match and
    /// each label must lie in `[0, 1]`.
    pub fn with_labels(&self, labels: &[f64]) -> Result<Self> {
        if labels.len() != self.pairs.len() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} pairs",
                labels.len(),
                self.pairs.len()
            )));
        }
        let pairs = self
            .pairs
            .iter()
            .zip(labels)
            .map(|(p, &o)| PreferencePair::new(p.x.clone(), p.z.clone(), o))
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs)
    }

    /// Serializes as one line per pair: `x coords | z coords | label`,
    /// using shortest-round-trip float formatting so parsing restores the
    /// exact bits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            let xs: Vec<String> = p.x.coords().iter().map(|c| format!("{c}")).collect();
            let zs: Vec<String> = p.z.coords().iter().map(|c| format!("{c}")).collect();
            out.push_str(&format!("{} | {} | {}\n", xs.join(" "), zs.join(" "), p.o));
        }
        out
    }

    /// Parses the [`PreferenceDataset::to_text`] format. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let sections: Vec<&str> = line.split('|').collect();
            if sections.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected `x | z | label`, got {} sections",
                    lineno + 1,
                    sections.len()
                )));
            }
            let parse_coords = |s: &str| -> Result<Vec<f64>> {
                s.split_whitespace()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| Error::Parse(format!("line {}: bad number `{t}`", lineno + 1)))
                    })
                    .collect()
            };
            let x = SupportPoint::new(parse_coords(sections[0])?)?;
            let z = SupportPoint::new(parse_coords(sections[1])?)?;
            let o = sections[2]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {}: bad label", lineno + 1)))?;
            pairs.push(PreferencePair::new(x, z, o)?);
        }
        Self::new(pairs)
    }
}

/// Labels pairs from a reward: `o = 1` when `r(x) < r(z)`, `0` when
/// `r(x) > r(z)`, `0.5` on exact ties.
pub fn gen_labels_deterministic<F>(
    points: Vec<(SupportPoint, SupportPoint)>,
    mut reward: F,
) -> Result<PreferenceDataset>
where
    F: FnMut(&SupportPoint) -> Result<f64>,
{
    let mut pairs = Vec::with_capacity(points.len());
    for (x, z) in points {
        let rx = reward(&x)?;
        let rz = reward(&z)?;
        let o = if rx < rz {
            1.0
        } else if rx > rz {
            0.0
        } else {
            0.5
        };
        pairs.push(PreferencePair::new(x, z, o)?);
    }
    PreferenceDataset::new(pairs)
}

/// Labels pairs by the logistic choice rule: `o ~ Bernoulli(sig(r(z) - r(x)))`.
pub fn gen_labels_stochastic<F, R>(
    points: Vec<(SupportPoint, SupportPoint)>,
    mut reward: F,
    rng: &mut R,
) -> Result<PreferenceDataset>
where
    F: FnMut(&SupportPoint) -> Result<f64>,
    R: Rng + ?Sized,
{
    let mut pairs = Vec::with_capacity(points.len());
    for (x, z) in points {
        let rx = reward(&x)?;
        let rz = reward(&z)?;
        let p_prefer_z = sigmoid(rz - rx);
        let o = if rng.gen::<f64>() < p_prefer_z { 1.0 } else { 0.0 };
        pairs.push(PreferencePair::new(x, z, o)?);
    }
    PreferenceDataset::new(pairs)
}

/// Per-pair feature differences `g_i = f(x_i) - f(z_i)` and labels, the
/// sufficient statistics for the loss family below.
pub(crate) struct PairFeatures {
    pub g: Vec<DVector<f64>>,
    pub o: Vec<f64>,
}

pub(crate) fn pair_features(data: &PreferenceDataset, map: &FeatureMap) -> Result<PairFeatures> {
    let mut g = Vec::with_capacity(data.len());
    let mut o = Vec::with_capacity(data.len());
    for p in data.pairs() {
        g.push(map.eval(&p.x)? - map.eval(&p.z)?);
        o.push(p.o);
    }
    Ok(PairFeatures { g, o })
}

fn check_l2(l2_reg: f64) -> Result<()> {
    if !l2_reg.is_finite() || l2_reg < 0.0 {
        return Err(Error::InvalidInput(format!("l2_reg {l2_reg} must be non-negative")));
    }
    Ok(())
}

pub(crate) fn loss_from_parts(parts: &PairFeatures, theta: &DVector<f64>, l2_reg: f64) -> f64 {
    let mut loss = l2_reg * theta.dot(theta);
    for (g, o) in parts.g.iter().zip(&parts.o) {
        let d = theta.dot(g);
        loss -= (1.0 - o) * log_sigmoid(d) + o * log_sigmoid(-d);
    }
    loss
}

pub(crate) fn grad_from_parts(parts: &PairFeatures, theta: &DVector<f64>, l2_reg: f64) -> DVector<f64> {
    let mut grad = theta * (2.0 * l2_reg);
    for (g, o) in parts.g.iter().zip(&parts.o) {
        let d = theta.dot(g);
        grad += g * (sigmoid(d) - (1.0 - o));
    }
    grad
}

/// Pairwise logistic loss with an `l2_reg |theta|^2` penalty.
pub fn bt_loss(data: &PreferenceDataset, model: &LinearRewardModel, l2_reg: f64) -> Result<f64> {
    check_l2(l2_reg)?;
    let parts = pair_features(data, model.feature_map())?;
    Ok(loss_from_parts(&parts, model.theta(), l2_reg))
}

/// Gradient of [`bt_loss`] in `theta`.
pub fn grad_loss(
    data: &PreferenceDataset,
    model: &LinearRewardModel,
    l2_reg: f64,
) -> Result<DVector<f64>> {
    check_l2(l2_reg)?;
    let parts = pair_features(data, model.feature_map())?;
    Ok(grad_from_parts(&parts, model.theta(), l2_reg))
}

/// Hessian of [`bt_loss`] in `theta`: positive definite whenever
/// `l2_reg > 0`.
pub fn hessian_loss(
    data: &PreferenceDataset,
    model: &LinearRewardModel,
    l2_reg: f64,
) -> Result<DMatrix<f64>> {
    check_l2(l2_reg)?;
    let parts = pair_features(data, model.feature_map())?;
    let q = model.theta().len();
    let mut h = DMatrix::from_diagonal_element(q, q, 2.0 * l2_reg);
    for g in &parts.g {
        let d = model.theta().dot(g);
        let s = sigmoid(d);
        let w = s * (1.0 - s);
        h.ger(w, g, g, 1.0);
    }
    Ok(h)
}

/// Derivative of the loss gradient with respect to each label, as a
/// `q x n` matrix whose column `i` is `g_i`. For a linear model this does
/// not depend on `theta`.
pub fn cross_deriv_loss(data: &PreferenceDataset, model: &LinearRewardModel) -> Result<DMatrix<f64>> {
    let parts = pair_features(data, model.feature_map())?;
    let q = model.theta().len();
    let mut m = DMatrix::zeros(q, data.len());
    for (i, g) in parts.g.iter().enumerate() {
        m.set_column(i, g);
    }
    Ok(m)
}

/// Optimizer settings for [`fit_mle`].
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Initial step size; the line search backs off from here.
    pub learning_rate: f64,
    pub max_iters: usize,
    pub l2_reg: f64,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { learning_rate: 0.5, max_iters: 5000, l2_reg: 1e-4, grad_tol: 1e-8 }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        check_l2(self.l2_reg)?;
        if !self.grad_tol.is_finite() || self.grad_tol <= 0.0 {
            return Err(Error::InvalidInput(format!("grad_tol {} must be positive", self.grad_tol)));
        }
        Ok(())
    }
}

/// Fits the model by gradient descent with a backtracking line search.
///
/// Runs until the gradient norm drops below `grad_tol`, the iteration cap is
/// hit, or no further descent is possible at `f64` resolution. The returned
/// loss never exceeds the loss at `init`. Deterministic in its inputs.
pub fn fit_mle(
    data: &PreferenceDataset,
    init: &LinearRewardModel,
    cfg: &FitConfig,
) -> Result<LinearRewardModel> {
    cfg.validate()?;
    let parts = pair_features(data, init.feature_map())?;
    let mut theta = init.theta().clone();
    let mut loss = loss_from_parts(&parts, &theta, cfg.l2_reg);
    if !loss.is_finite() {
        return Err(Error::Divergence(format!(
            "loss is {loss} at the initial point; rescale the data or shrink learning_rate"
        )));
    }
    for _ in 0..cfg.max_iters {
        let grad = grad_from_parts(&parts, &theta, cfg.l2_reg);
        let gnorm_sq = grad.norm_squared();
        if !gnorm_sq.is_finite() {
            return Err(Error::Divergence("gradient overflowed during descent".into()));
        }
        if gnorm_sq.sqrt() <= cfg.grad_tol {
            break;
        }
        let mut step = cfg.learning_rate;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &theta - &grad * step;
            let cand_loss = loss_from_parts(&parts, &cand, cfg.l2_reg);
            if cand_loss.is_finite() && cand_loss <= loss - 1e-4 * step * gnorm_sq {
                theta = cand;
                loss = cand_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No step of any size decreases the loss: numerically converged.
            break;
        }
    }
    Ok(init.with_theta(theta))
}
