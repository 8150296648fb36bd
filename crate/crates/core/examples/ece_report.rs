//! Out-of-the-box accuracy and ECE for a prediction log on disk.
//!
//! Pass a JSONL or CSV log as the first argument, or run with no arguments
//! to score a small synthetic log.
//!
//! ```text
//! cargo run --example ece_report -- preds.jsonl
//! ```

use calibkit::metrics::{evaluate, BinSpec};
use calibkit::store::{ingest, write_predictions_to_path, Format, PredictionRecord, PredictionSet, SplitTag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synthetic_log(path: &std::path::Path) -> calibkit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let records = (0..2000)
        .map(|_| {
            let gold = rng.random_range(0..4);
            let mut logits: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            // a sharp model that is right about 70% of the time
            let favoured = if rng.random_bool(0.7) {
                gold
            } else {
                rng.random_range(0..4)
            };
            logits[favoured] += rng.random_range(0.5..5.0);
            PredictionRecord::new(logits, gold)
        })
        .collect();
    let set = PredictionSet::new(records, SplitTag::InDomainTest)?;
    write_predictions_to_path(&set, Format::Jsonl, path)
}

fn main() -> calibkit::Result<()> {
    let path = match std::env::args_os().nth(1) {
        Some(p) => std::path::PathBuf::from(p),
        None => {
            let p = std::env::temp_dir().join("calibkit_ece_report.jsonl");
            synthetic_log(&p)?;
            p
        }
    };
    let format = Format::from_path(&path).unwrap_or(Format::Jsonl);
    let set = ingest(&path, format, SplitTag::InDomainTest)?;

    println!(
        "{}: {} predictions over {} classes",
        path.display(),
        set.len(),
        set.num_classes()
    );
    for bins in [5, 10, 20] {
        for spec in [BinSpec::equal_width(bins)?, BinSpec::equal_mass(bins)?] {
            let eval = evaluate(&set, 1.0, spec)?;
            println!(
                "{:>2} {:<11} accuracy {:.4}  ece {:.4}",
                bins,
                spec.scheme().as_str(),
                eval.accuracy,
                eval.ece
            );
        }
    }
    Ok(())
}
