//! Runs the attack benchmark end to end via the experiment-spec API and
//! prints the post-round expected reward per attack method: one curated
//! retraining round per (method, seed) on identical preference data.

use curation_lab::cli::{execute, parse_spec};

fn main() {
    let spec = parse_spec(
        "command = attack-bench\n\
         environment = classes\n\
         classes = 10\n\
         n_gen = 400\n\
         beta = 0.5\n\
         pairs_per_iter = 96\n\
         kappa = 0.2\n\
         attack_iters = 12\n\
         max_iters = 600\n\
         l2_reg = 1e-2\n\
         methods = none, random, heuristic-diff, heuristic-maxabs, gradient, pareto\n\
         seeds = 11, 12, 13\n",
    )
    .unwrap();

    let out_dir = std::env::temp_dir().join("curation-lab-attack-comparison");
    let outcome = execute(&spec, &out_dir).unwrap();

    let summary = std::fs::read_to_string(out_dir.join("bench_summary.csv")).unwrap();
    let mut rows: Vec<(String, f64)> = summary
        .lines()
        .skip(1)
        .map(|l| {
            let (m, v) = l.split_once(',').unwrap();
            (m.to_string(), v.parse().unwrap())
        })
        .collect();

    println!("one curated retraining round, 10 classes, flip budget 20% of 96 pairs,");
    println!("mean post-round E[r] over 3 seeds (higher = healthier population):");
    println!();
    rows.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let benign = rows.iter().find(|(m, _)| m == "none").unwrap().1;
    for (method, mean) in &rows {
        let damage = benign - mean;
        println!("  {method:>16}  {mean:>8.4}   damage {damage:>7.4}");
    }

    println!();
    println!("every attack drags the curated population below the clean round;");
    println!("the flip lists per (method, seed) are in {}", out_dir.display());
    println!("({} files written)", outcome.files.len());
}
