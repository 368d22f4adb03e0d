//! Reward-model fitting from pairwise comparisons, two ways: recovering a
//! planted linear reward from noisy choices, and learning per-class
//! rewards from deterministic preferences.

use curation_lab::preference::{
    fit_mle, gen_labels_deterministic, gen_labels_stochastic, FeatureMap, FitConfig,
    LinearRewardModel,
};
use curation_lab::dist::SupportPoint;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    // Part 1: plant a direction in R^4 and label pairs stochastically by
    // the choice model the fit assumes. Preference data only identifies
    // the reward up to scale, so the comparison is directional.
    let q = 4;
    let star = {
        let v: Vec<f64> = (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        DVector::from_vec(v.iter().map(|x| x / n).collect())
    };
    let pairs: Vec<(SupportPoint, SupportPoint)> = (0..3000)
        .map(|_| {
            let draw = |rng: &mut ChaCha8Rng| {
                SupportPoint::new((0..q).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
            };
            (draw(&mut rng), draw(&mut rng))
        })
        .collect();
    let data = gen_labels_stochastic(
        pairs,
        |x| Ok(star.dot(&DVector::from_column_slice(x.coords()))),
        &mut rng,
    )
    .unwrap();

    let map = FeatureMap::Identity { dim: q };
    // Noisy labels give an interior optimum, so a few hundred passes are
    // plenty; the direction is already pinned down well before that.
    let fit = FitConfig { max_iters: 400, ..FitConfig::default() };
    let model = fit_mle(&data, &LinearRewardModel::zeros(map), &fit).unwrap();
    let theta = model.theta();
    let cosine = theta.dot(&star) / theta.norm();

    println!("planted-direction recovery from 3000 stochastic comparisons:");
    println!("  coordinate   planted    fitted (rescaled)");
    let scale = theta.norm();
    for i in 0..q {
        println!("  {:>10}   {:>7.4}    {:>7.4}", i, star[i], theta[i] / scale);
    }
    println!("  cosine(theta_hat, theta_star) = {cosine:.4}");

    // Part 2: ten classes, deterministic labels from a tabular reward.
    // The fitted one-hot rewards are only defined up to a shared offset,
    // so center them before reading off the ranking.
    let class_reward = |c: &SupportPoint| Ok(10.0 - c.coords()[0]);
    let pairs: Vec<(SupportPoint, SupportPoint)> = (0..400)
        .map(|_| {
            let draw = |rng: &mut ChaCha8Rng| {
                SupportPoint::new(vec![rng.gen_range(0..10) as f64]).unwrap()
            };
            (draw(&mut rng), draw(&mut rng))
        })
        .collect();
    let data = gen_labels_deterministic(pairs, class_reward).unwrap();
    let map = FeatureMap::OneHot { classes: 10 };
    let fit = FitConfig { max_iters: 300, ..FitConfig::default() };
    let model = fit_mle(&data, &LinearRewardModel::zeros(map), &fit).unwrap();

    let fitted = model.theta();
    let mean = fitted.mean();
    println!();
    println!("per-class rewards from 400 deterministic comparisons (centered):");
    print!("  ");
    for c in 0..10 {
        print!("{:>7.2}", fitted[c] - mean);
    }
    println!();
    let ranking_ok = (1..10).all(|c| fitted[c - 1] > fitted[c]);
    println!(
        "  class ranking matches the true reward order: {}",
        if ranking_ok { "yes" } else { "no" }
    );
    println!(
        "  (separable deterministic labels push the fitted gaps as wide as the \
         optimizer budget allows; only the ordering is identified)"
    );
}
