//! Runs the synthetic shift benchmark over a few seeds and prints the
//! per-seed and mean summary rows.
//!
//! ```text
//! cargo run --release --example shift_benchmark -- 1 2 3 4 5
//! ```

use calibkit::benchmark::{aggregate, run_seed, BenchmarkConfig};

fn main() -> calibkit::Result<()> {
    let seeds: Vec<u64> = std::env::args()
        .skip(1)
        .map(|s| s.parse().expect("seed must be an integer"))
        .collect();
    let seeds = if seeds.is_empty() { vec![1, 2, 3] } else { seeds };

    let config = BenchmarkConfig::default();
    let mut rows = Vec::new();
    for seed in seeds {
        rows.extend(run_seed(&config, seed)?.summary_rows());
    }
    rows.extend(aggregate(&rows));

    println!("seed  model  calibration         T     id_acc  id_ece  ood_acc ood_ece");
    for r in &rows {
        println!(
            "{:<5} {:<6} {:<18} {:>5.2}  {:.4}  {:.4}  {:.4}  {:.4}",
            r.seed, r.objective, r.calibration, r.temperature, r.id_accuracy, r.id_ece, r.ood_accuracy, r.ood_ece
        );
    }
    Ok(())
}
