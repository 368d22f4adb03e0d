//! The full self-consuming loop, clean versus poisoned: each iteration
//! draws comparisons from the current population, fits a reward model,
//! optionally corrupts it through label flips, curates a fresh batch with
//! the (possibly corrupted) model, and retrains on the survivors.

use curation_lab::attack::AttackConfig;
use curation_lab::preference::FitConfig;
use curation_lab::sim::{run_retraining, AttackMethod, Environment, LoopConfig};

fn main() {
    let env = Environment::classes(10);
    let base = LoopConfig {
        iterations: 10,
        n_gen: 600,
        pairs_per_iter: 96,
        fit: FitConfig { max_iters: 600, ..FitConfig::default() },
        seed: 2,
        ..LoopConfig::default()
    };

    let benign = run_retraining(&env, &base).unwrap();

    let mut cfg = base.clone();
    cfg.method = AttackMethod::Gradient;
    cfg.attack = AttackConfig { cov_batch: 512, attack_iters: 12, ..AttackConfig::default() };
    // Every curation decision scored by the corrupted model.
    cfg.curation.phi = 1.0;
    let attacked = run_retraining(&env, &cfg).unwrap();

    println!("10 classes, 10 iterations, 96 comparisons per round, flip budget 20%");
    println!();
    println!("{:>2}  {:>12}  {:>14}  {:>7}", "t", "clean E[r]", "attacked E[r]", "flips");
    for (b, a) in benign.steps().iter().zip(attacked.steps()) {
        println!("{:>2}  {:>12.4}  {:>14.4}  {:>7}", b.t, b.e_r, a.e_r, a.flips);
    }

    let (b_last, a_last) = (benign.last().unwrap(), attacked.last().unwrap());
    println!();
    println!("final top-class mass: clean {:.4}, attacked {:.4}", b_last.proportions[0], a_last.proportions[0]);
    println!(
        "the clean loop climbs toward the preferred class; the poisoned reward model \
         steers curation away from it, and retraining compounds the drift ({:+.4} E[r])",
        a_last.e_r - b_last.e_r
    );
}
