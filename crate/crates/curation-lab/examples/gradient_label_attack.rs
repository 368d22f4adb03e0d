//! Mounts the relaxed label-flip attack against a reward model fitted on
//! clean comparisons, then measures how much the chosen flips hurt
//! relative to random flips of the same size.
//!
//! The attack objective J couples the benign and corrupted models through
//! the covariance of their exponentiated rewards on a batch; driving it
//! negative means curation scored by the corrupted model favors exactly
//! what the benign model dislikes.

use curation_lab::attack::{
    apply_flips, gradient_attack, objective_j, random_attack, AttackConfig,
};
use curation_lab::preference::{fit_mle, gen_labels_deterministic, FitConfig};
use curation_lab::sim::{build_environment, Environment};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let env = Environment::classes(10);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (p, r_true) = build_environment(&env, 1, &mut rng).unwrap();

    let points = p.sample(128, &mut rng).unwrap();
    let mut pairs = Vec::with_capacity(64);
    let mut it = points.into_iter();
    while let (Some(x), Some(z)) = (it.next(), it.next()) {
        pairs.push((x, z));
    }
    let data = gen_labels_deterministic(pairs, |x| r_true.eval_point(&p, x)).unwrap();
    let map = env.default_feature_map();
    let batch = p.sample(512, &mut rng).unwrap();

    // The attack differentiates through the refit Hessian, so give the
    // fit a real ridge; it keeps the implicit solves well conditioned.
    let fit = FitConfig { l2_reg: 1e-2, max_iters: 600, ..FitConfig::default() };
    let attack = AttackConfig { cov_batch: 512, seed: 5, ..AttackConfig::default() };
    let out = gradient_attack(&data, &map, &map, &batch, &attack, &fit).unwrap();

    println!(
        "attacked a reward model fitted on {} clean pairs; budget floor(0.2 * n) = {} flips",
        data.len(),
        out.mask.flip_count()
    );
    println!();

    let first = out.objective_log.first().unwrap();
    let last = out.objective_log.last().unwrap();
    println!("relaxed optimization, {} rounds:", out.objective_log.len());
    println!("  J at round 1:  {:>14.4e}  (cov {:+.4e})", first.total, first.cov_term);
    println!("  J at round {}: {:>14.4e}  (cov {:+.4e})", out.objective_log.len(), last.total, last.cov_term);
    println!("  J of the hard mask: {:>11.4e}", out.final_objective.total);
    println!();

    println!("chosen flips (pair index, label change):");
    let labels = data.labels();
    for &i in &out.mask.touched_indices() {
        println!("  pair {i:>3}: {} -> {}", labels[i], 1.0 - labels[i]);
    }
    println!();

    // Same-budget random masks as the baseline.
    let trials = 50;
    let mut random_total = 0.0;
    for t in 0..trials {
        let mut mask_rng = ChaCha8Rng::seed_from_u64(1000 + t);
        let (mask, _) = random_attack(&data, attack.kappa, &mut mask_rng).unwrap();
        let flipped = apply_flips(&data, &mask).unwrap();
        let tilde = fit_mle(&flipped, &out.model_benign, &fit).unwrap();
        random_total +=
            objective_j(&out.model_benign, &tilde, &batch, attack.alpha).unwrap().total;
    }
    let random_mean = random_total / trials as f64;
    println!("objective comparison (lower = more damage):");
    println!("  gradient mask       {:>14.4e}", out.final_objective.total);
    println!("  random mask (mean of {trials})  {random_mean:>9.4e}");
    assert!(
        out.final_objective.total < random_mean,
        "the optimized mask should beat random flipping"
    );
    println!();
    println!("the optimized flips anti-align the corrupted model with the benign one;");
    println!("random flips of the same size mostly add label noise");
}
