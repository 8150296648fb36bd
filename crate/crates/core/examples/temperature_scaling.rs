//! Fits a temperature on half of an overconfident log and scores the other
//! half before and after rescaling.

use calibkit::metrics::{evaluate, BinSpec};
use calibkit::numerics::softmax;
use calibkit::store::{split_half, PredictionRecord, PredictionSet, SplitTag};
use calibkit::temperature::{fit_temperature, Objective, SearchGrid};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> calibkit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // labels drawn from softmax(z), logits reported as 2.5 z
    let records = (0..6000)
        .map(|_| {
            let z: Vec<f64> = (0..5).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let p = softmax(&z).expect("finite");
            let gold = WeightedIndex::new(p.probs()).expect("weights").sample(&mut rng);
            PredictionRecord::new(z.iter().map(|v| 2.5 * v).collect(), gold)
        })
        .collect();
    let set = PredictionSet::new(records, SplitTag::InDomainTest)?;
    let (dev, test) = split_half(&set, 0)?;
    let dev = dev.with_split_tag(SplitTag::InDomainDev);

    let bins = BinSpec::default();
    let grid = SearchGrid::default();
    for objective in [Objective::ece(bins), Objective::nll()] {
        let fit = fit_temperature(&dev, &grid, &objective)?;
        let before = evaluate(&test, 1.0, bins)?;
        let after = evaluate(&test, fit.temperature, bins)?;
        println!(
            "objective {:<3}  T {:.2}  test ece {:.4} -> {:.4}  (accuracy {:.4} both ways)",
            objective.kind, fit.temperature, before.ece, after.ece, after.accuracy
        );
    }
    Ok(())
}
