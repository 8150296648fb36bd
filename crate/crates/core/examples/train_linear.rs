//! Trains a linear softmax model with and without label smoothing and
//! compares how confident each one is on held-out data.

use calibkit::benchmark::generate_shift_benchmark;
use calibkit::metrics::{evaluate, BinSpec};
use calibkit::store::SplitTag;
use calibkit::train::{mean_loss, train, LinearSoftmaxModel, TrainConfig, TrainObjective};

fn main() -> calibkit::Result<()> {
    let bench = generate_shift_benchmark(3, 32, 300, 0.0, 5)?;
    let config = TrainConfig {
        epochs: 200,
        batch_size: 32,
        learning_rate: 0.2,
        seed: 5,
    };
    for objective in [TrainObjective::Mle, TrainObjective::LabelSmoothing(0.1)] {
        let init = LinearSoftmaxModel::zeros(3, 32);
        let trained = train(init, &bench.train_id, objective, &config)?;
        let losses = &trained.epoch_losses;
        let held_out = trained.model.predict(&bench.test_id, SplitTag::InDomainTest)?;
        let eval = evaluate(&held_out, 1.0, BinSpec::default())?;
        let mean_conf = eval
            .table
            .bins
            .iter()
            .filter_map(|b| b.mean_confidence.map(|c| c * b.count as f64))
            .sum::<f64>()
            / eval.table.total as f64;
        println!(
            "{objective}: train loss {:.4} -> {:.4}, test loss {:.4}, accuracy {:.4}, mean confidence {:.4}, ece {:.4}",
            losses[0],
            losses[losses.len() - 1],
            mean_loss(&trained.model, &bench.test_id, objective)?,
            eval.accuracy,
            mean_conf,
            eval.ece
        );
    }
    Ok(())
}
