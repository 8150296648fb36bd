#![allow(dead_code)]

use calibkit::numerics::softmax;
use calibkit::store::{PredictionRecord, PredictionSet, SplitTag};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rand_distr::StandardNormal;

/// A random prediction set. About one set in four uses small integer
/// logits, which produces tied logits and repeated confidences.
pub fn random_set<R: Rng>(rng: &mut R, max_n: usize, max_classes: usize) -> PredictionSet {
    let n = rng.random_range(1..=max_n);
    let k = rng.random_range(2..=max_classes);
    let integer = rng.random_bool(0.25);
    let scale = rng.random_range(0.1..6.0);
    let records = (0..n)
        .map(|_| {
            let logits = (0..k)
                .map(|_| {
                    if integer {
                        rng.random_range(-2..=2) as f64
                    } else {
                        scale * rng.sample::<f64, _>(StandardNormal)
                    }
                })
                .collect();
            PredictionRecord::new(logits, rng.random_range(0..k))
        })
        .collect();
    PredictionSet::new(records, SplitTag::InDomainTest).unwrap()
}

/// Labels drawn from softmax(z), logits reported as `scale · z`.
pub fn scaled_softmax_set<R: Rng>(rng: &mut R, n: usize, k: usize, scale: f64) -> PredictionSet {
    let records = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let p = softmax(&z).unwrap();
            let gold = WeightedIndex::new(p.probs()).unwrap().sample(rng);
            PredictionRecord::new(z.iter().map(|v| scale * v).collect(), gold)
        })
        .collect();
    PredictionSet::new(records, SplitTag::InDomainDev).unwrap()
}
