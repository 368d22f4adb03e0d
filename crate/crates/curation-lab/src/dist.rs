//! Finite-support distributions over points in `R^d`, reward functions on
//! those supports, and the exponential-reward moments the curation analysis
//! is built from.
//!
//! Everything downstream works with `E[e^r]`, `Var[e^r]`, and
//! `Cov[e^r, e^r']` under a finite-support distribution, so those moments
//! live here with one shared summation path (the variance is the covariance
//! of a reward with itself, clamped at zero).

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::preference::LinearRewardModel;

/// Two support points whose coordinates all differ by at most this are
/// treated as the same atom when merging supports.
pub const ATOM_MERGE_TOL: f64 = 1e-12;

/// Probabilities must sum to one within this tolerance.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Largest reward magnitude accepted by operations that exponentiate
/// rewards. Second moments square `exp(r)`, so the cap must keep
/// `exp(2r)` finite; 300 leaves headroom below the `f64` overflow point
/// near `exp(354)` while still rejecting obviously broken reward scales.
/// The 100-class environment's top reward of 100 has to fit.
pub const MAX_EXP_REWARD: f64 = 300.0;

/// A point of a finite support. Coordinates are finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPoint {
    coords: Vec<f64>,
}

impl SupportPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("support point needs at least one coordinate".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("support point coordinates must be finite".into()));
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// True when both points have the same dimension and every coordinate
    /// differs by at most `tol`.
    pub fn approx_eq(&self, other: &SupportPoint, tol: f64) -> bool {
        self.coords.len() == other.coords.len()
            && self
                .coords
                .iter()
                .zip(&other.coords)
                .all(|(a, b)| (a - b).abs() <= tol)
    }

    /// Squared Euclidean distance to another point of the same dimension.
    pub fn dist_sq(&self, other: &SupportPoint) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// A probability distribution with finitely many atoms.
///
/// Invariants: at least one atom, all atoms share a dimension and are
/// pairwise distinct (no two within [`ATOM_MERGE_TOL`] of each other), all
/// probabilities are non-negative, and the probabilities sum to one within
/// [`PROB_SUM_TOL`]. Individual probabilities may be exactly zero.
#[derive(Debug, Clone)]
pub struct DiscreteDistribution {
    atoms: Vec<SupportPoint>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Builds a distribution from atoms and probabilities, validating every
    /// invariant. Does not renormalize; use [`DiscreteDistribution::from_weights`]
    /// for that.
    pub fn new(atoms: Vec<SupportPoint>, probs: Vec<f64>) -> Result<Self> {
        Self::validate_atoms(&atoms)?;
        if probs.len() != atoms.len() {
            return Err(Error::InvalidInput(format!(
                "{} atoms but {} probabilities",
                atoms.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidInput("probabilities must be finite and non-negative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, expected 1 within {PROB_SUM_TOL}"
            )));
        }
        Ok(Self { atoms, probs })
    }

    /// Builds a distribution by normalizing non-negative weights.
    pub fn from_weights(atoms: Vec<SupportPoint>, weights: Vec<f64>) -> Result<Self> {
        Self::validate_atoms(&atoms)?;
        if weights.len() != atoms.len() {
            return Err(Error::InvalidInput(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidInput("weights must have a positive sum".into()));
        }
        let mut probs: Vec<f64> = weights.iter().map(|w| w / sum).collect();
        // One correction pass keeps the sum within tolerance even for large
        // supports where a single division leaves a few ulps of drift.
        let sum2: f64 = probs.iter().sum();
        if (sum2 - 1.0).abs() > PROB_SUM_TOL {
            for p in &mut probs {
                *p /= sum2;
            }
        }
        Ok(Self { atoms, probs })
    }

    /// Uniform distribution over the given atoms.
    pub fn uniform(atoms: Vec<SupportPoint>) -> Result<Self> {
        let n = atoms.len();
        Self::from_weights(atoms, vec![1.0; n])
    }

    fn validate_atoms(atoms: &[SupportPoint]) -> Result<()> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("a distribution needs at least one atom".into()));
        }
        let dim = atoms[0].dim();
        if atoms.iter().any(|a| a.dim() != dim) {
            return Err(Error::InvalidInput("all atoms must share one dimension".into()));
        }
        for i in 0..atoms.len() {
            for j in (i + 1)..atoms.len() {
                if atoms[i].approx_eq(&atoms[j], ATOM_MERGE_TOL) {
                    return Err(Error::InvalidInput(format!(
                        "atoms {i} and {j} coincide within {ATOM_MERGE_TOL}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    pub fn atoms(&self) -> &[SupportPoint] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn atom(&self, i: usize) -> &SupportPoint {
        &self.atoms[i]
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// Index of the atom matching `point` within `tol`, if any.
    pub fn find_atom(&self, point: &SupportPoint, tol: f64) -> Option<usize> {
        self.atoms.iter().position(|a| a.approx_eq(point, tol))
    }

    /// Draws `n` atom indices i.i.d. from the distribution. Deterministic
    /// for a given seeded generator.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        let table = WeightedIndex::new(self.probs.iter().copied())
            .map_err(|e| Error::InvalidInput(format!("cannot sample: {e}")))?;
        Ok((0..n).map(|_| table.sample(rng)).collect())
    }

    /// Draws `n` points i.i.d. from the distribution.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<SupportPoint>> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| self.atoms[i].clone())
            .collect())
    }
}

/// Mixes two distributions: `w` on `p` and `1 - w` on `q`.
///
/// Atoms of `q` that match an atom of `p` within [`ATOM_MERGE_TOL`] merge
/// their probability; the rest extend the support. `w = 1` returns `p`
/// unchanged and `w = 0` returns `q` unchanged.
pub fn mix(p: &DiscreteDistribution, q: &DiscreteDistribution, w: f64) -> Result<DiscreteDistribution> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidInput(format!("mix weight {w} outside [0, 1]")));
    }
    if p.dim() != q.dim() {
        return Err(Error::InvalidInput(format!(
            "cannot mix supports of dimension {} and {}",
            p.dim(),
            q.dim()
        )));
    }
    if w == 1.0 {
        return Ok(p.clone());
    }
    if w == 0.0 {
        return Ok(q.clone());
    }
    let mut atoms = p.atoms.clone();
    let mut weights: Vec<f64> = p.probs.iter().map(|pi| w * pi).collect();
    for (atom, qj) in q.atoms.iter().zip(&q.probs) {
        match atoms.iter().position(|a| a.approx_eq(atom, ATOM_MERGE_TOL)) {
            Some(i) => weights[i] += (1.0 - w) * qj,
            None => {
                atoms.push(atom.clone());
                weights.push((1.0 - w) * qj);
            }
        }
    }
    DiscreteDistribution::from_weights(atoms, weights)
}

/// Total variation distance: half the L1 distance over the merged support.
/// Always in `[0, 1]`.
pub fn tv_distance(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::InvalidInput(format!(
            "cannot compare supports of dimension {} and {}",
            p.dim(),
            q.dim()
        )));
    }
    let mut l1 = 0.0;
    let mut matched_q = vec![false; q.len()];
    for (atom, pi) in p.atoms.iter().zip(&p.probs) {
        match q.find_atom(atom, ATOM_MERGE_TOL) {
            Some(j) => {
                matched_q[j] = true;
                l1 += (pi - q.probs[j]).abs();
            }
            None => l1 += pi,
        }
    }
    for (j, qj) in q.probs.iter().enumerate() {
        if !matched_q[j] {
            l1 += qj;
        }
    }
    Ok((0.5 * l1).min(1.0))
}

/// A reward defined on a support.
#[derive(Debug, Clone)]
pub enum RewardFunction {
    /// One value per atom of a specific support, matched by index.
    Tabular(Vec<f64>),
    /// A fitted model evaluated pointwise at each atom.
    Linear(LinearRewardModel),
}

impl RewardFunction {
    /// Reward value at every atom of `p`, in atom order.
    ///
    /// Errors when a tabular reward's length does not match the support or
    /// when any value comes out non-finite.
    pub fn values_on(&self, p: &DiscreteDistribution) -> Result<Vec<f64>> {
        let vals = match self {
            RewardFunction::Tabular(values) => {
                if values.len() != p.len() {
                    return Err(Error::DomainMismatch(format!(
                        "tabular reward has {} values but the support has {} atoms",
                        values.len(),
                        p.len()
                    )));
                }
                values.clone()
            }
            RewardFunction::Linear(model) => {
                p.atoms.iter().map(|a| model.reward(a)).collect::<Result<Vec<_>>>()?
            }
        };
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::DomainMismatch("reward is non-finite on the support".into()));
        }
        Ok(vals)
    }

    /// Reward at one atom of `p`.
    pub fn value_at(&self, p: &DiscreteDistribution, index: usize) -> Result<f64> {
        if index >= p.len() {
            return Err(Error::InvalidInput(format!(
                "atom index {index} out of range for support of size {}",
                p.len()
            )));
        }
        match self {
            RewardFunction::Tabular(values) => {
                if values.len() != p.len() {
                    return Err(Error::DomainMismatch(format!(
                        "tabular reward has {} values but the support has {} atoms",
                        values.len(),
                        p.len()
                    )));
                }
                Ok(values[index])
            }
            RewardFunction::Linear(model) => model.reward(p.atom(index)),
        }
    }

    /// Reward at an arbitrary point. Tabular rewards resolve the point
    /// against the support; points off the support are a domain error.
    pub fn eval_point(&self, p: &DiscreteDistribution, point: &SupportPoint) -> Result<f64> {
        match self {
            RewardFunction::Tabular(_) => match p.find_atom(point, ATOM_MERGE_TOL) {
                Some(i) => self.value_at(p, i),
                None => Err(Error::DomainMismatch(
                    "point does not match any atom of the support".into(),
                )),
            },
            RewardFunction::Linear(model) => model.reward(point),
        }
    }

    /// The reward with its sign flipped.
    pub fn negated(&self) -> RewardFunction {
        match self {
            RewardFunction::Tabular(values) => {
                RewardFunction::Tabular(values.iter().map(|v| -v).collect())
            }
            RewardFunction::Linear(model) => RewardFunction::Linear(model.negated()),
        }
    }
}

pub(crate) fn checked_exp_values(p: &DiscreteDistribution, r: &RewardFunction) -> Result<Vec<f64>> {
    let vals = r.values_on(p)?;
    if let Some(v) = vals.iter().find(|v| v.abs() > MAX_EXP_REWARD) {
        return Err(Error::InvalidInput(format!(
            "reward value {v} exceeds the exponentiation cap {MAX_EXP_REWARD}"
        )));
    }
    Ok(vals.iter().map(|v| v.exp()).collect())
}

/// `E_p[r]`.
pub fn expect_reward(p: &DiscreteDistribution, r: &RewardFunction) -> Result<f64> {
    let vals = r.values_on(p)?;
    Ok(p.probs.iter().zip(&vals).map(|(pi, vi)| pi * vi).sum())
}

/// `E_p[e^r]`.
pub fn expect_exp_reward(p: &DiscreteDistribution, r: &RewardFunction) -> Result<f64> {
    let a = checked_exp_values(p, r)?;
    Ok(p.probs.iter().zip(&a).map(|(pi, ai)| pi * ai).sum())
}

/// `Cov_p[e^r, e^{r2}] = E[e^r e^{r2}] - E[e^r] E[e^{r2}]`. May be negative.
pub fn cov_exp_rewards(
    p: &DiscreteDistribution,
    r: &RewardFunction,
    r2: &RewardFunction,
) -> Result<f64> {
    let a = checked_exp_values(p, r)?;
    let b = checked_exp_values(p, r2)?;
    let mut e_ab = 0.0;
    let mut e_a = 0.0;
    let mut e_b = 0.0;
    for ((pi, ai), bi) in p.probs.iter().zip(&a).zip(&b) {
        e_ab += pi * ai * bi;
        e_a += pi * ai;
        e_b += pi * bi;
    }
    Ok(e_ab - e_a * e_b)
}

/// `Var_p[e^r]`, computed through the same summation path as
/// [`cov_exp_rewards`] and clamped so round-off cannot make it negative.
pub fn var_exp_reward(p: &DiscreteDistribution, r: &RewardFunction) -> Result<f64> {
    Ok(cov_exp_rewards(p, r, r)?.max(0.0))
}
