//! Prints a text reliability diagram and the matching CSV table.

use calibkit::metrics::{reliability_table, BinSpec};
use calibkit::numerics::ConfidenceOutcome;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> calibkit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // overconfident: true accuracy is the square of the stated confidence
    let outcomes: Vec<ConfidenceOutcome> = (0..5000)
        .map(|_| {
            let confidence = rng.random_range(0.34..=1.0);
            ConfidenceOutcome {
                predicted_label: 0,
                confidence,
                correct: rng.random_bool(confidence * confidence),
            }
        })
        .collect();

    let table = reliability_table(&outcomes, BinSpec::equal_width(10)?)?;
    println!("bin          n     conf   acc    accuracy");
    for bin in &table.bins {
        let (Some(conf), Some(acc)) = (bin.mean_confidence, bin.accuracy) else {
            println!("[{:.1}, {:.1})  {:>5}", bin.lo, bin.hi, 0);
            continue;
        };
        let bar = "#".repeat((acc * 40.0).round() as usize);
        println!(
            "[{:.1}, {:.1})  {:>5}  {:.3}  {:.3}  {bar}",
            bin.lo, bin.hi, bin.count, conf, acc
        );
    }
    println!("ece {:.4}\n", table.ece());

    table.write_csv(std::io::stdout().lock()).expect("stdout");
    Ok(())
}
