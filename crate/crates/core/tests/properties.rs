use calibkit::metrics::{evaluate, outcomes_at, reliability_table, BinScheme, BinSpec};
use calibkit::numerics::{argmax, entropy, kl_divergence, nll, softmax, ConfidenceOutcome, ProbabilityVector};
use calibkit::smoothing::{smooth_targets, smoothed_loss, SmoothingConfig};
use calibkit::store::{
    read_predictions, split_half, write_predictions, Format, IngestOptions, PredictionRecord, PredictionSet, SplitTag,
};
use calibkit::temperature::{CachedLogits, Objective};
use proptest::prelude::*;

fn logits(k: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    k.prop_flat_map(|k| prop::collection::vec(-30.0f64..30.0, k))
}

fn prediction_set() -> impl Strategy<Value = PredictionSet> {
    (2usize..=5, 1usize..=60).prop_flat_map(|(k, n)| {
        prop::collection::vec((prop::collection::vec(-8.0f64..8.0, k), 0..k), n).prop_map(|rows| {
            let records = rows.into_iter().map(|(z, y)| PredictionRecord::new(z, y)).collect();
            PredictionSet::new(records, SplitTag::InDomainTest).unwrap()
        })
    })
}

fn scheme() -> impl Strategy<Value = BinScheme> {
    prop_oneof![Just(BinScheme::EqualWidth), Just(BinScheme::EqualMass)]
}

fn outcomes() -> impl Strategy<Value = Vec<ConfidenceOutcome>> {
    prop::collection::vec((0.2f64..=1.0, any::<bool>()), 1..100).prop_map(|v| {
        v.into_iter()
            .map(|(confidence, correct)| ConfidenceOutcome {
                predicted_label: 0,
                confidence,
                correct,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn softmax_sums_to_one_and_ignores_shifts(z in logits(2..=8), c in -50.0f64..50.0) {
        let p = softmax(&z).unwrap();
        prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let q = softmax(&shifted).unwrap();
        for (a, b) in p.probs().iter().zip(q.probs()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn argmax_of_softmax_matches_logits(z in logits(2..=8)) {
        prop_assert_eq!(softmax(&z).unwrap().argmax(), argmax(&z));
    }

    #[test]
    fn kl_is_nonnegative(a in logits(2..=6), b in logits(2..=6)) {
        let k = a.len().min(b.len());
        let p = softmax(&a[..k]).unwrap();
        let q = softmax(&b[..k]).unwrap();
        prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-15);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn nll_is_kl_from_one_hot(z in logits(2..=6), pick in any::<prop::sample::Index>()) {
        let p = softmax(&z).unwrap();
        let y = pick.index(z.len());
        let one_hot = ProbabilityVector::one_hot(y, z.len()).unwrap();
        prop_assert!((nll(&p, y).unwrap() - kl_divergence(&one_hot, &p).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn entropy_is_bounded(z in logits(2..=8)) {
        let h = entropy(&softmax(&z).unwrap());
        prop_assert!(h >= -1e-15 && h <= (z.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn bins_partition_the_set(o in outcomes(), k in 1usize..=20, s in scheme()) {
        let table = reliability_table(&o, BinSpec::new(k, s).unwrap()).unwrap();
        prop_assert_eq!(table.bins.len(), k);
        prop_assert_eq!(table.bins.iter().map(|b| b.count).sum::<usize>(), o.len());
        prop_assert_eq!(table.total, o.len());
        for b in &table.bins {
            prop_assert!(b.lo <= b.hi);
            if let Some(c) = b.mean_confidence {
                prop_assert!(c >= b.lo - 1e-12 && c <= b.hi + 1e-12);
            }
        }
    }

    #[test]
    fn ece_lies_in_unit_interval(o in outcomes(), k in 1usize..=20, s in scheme()) {
        let e = reliability_table(&o, BinSpec::new(k, s).unwrap()).unwrap().ece();
        prop_assert!((0.0..=1.0).contains(&e));
    }

    #[test]
    fn ece_is_permutation_invariant(o in outcomes(), k in 1usize..=20, s in scheme(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let spec = BinSpec::new(k, s).unwrap();
        let mut shuffled = o.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = reliability_table(&o, spec).unwrap();
        let b = reliability_table(&shuffled, spec).unwrap();
        prop_assert_eq!(a.ece().to_bits(), b.ece().to_bits());
    }

    #[test]
    fn single_bin_ece_is_accuracy_gap(o in outcomes(), s in scheme()) {
        let e = reliability_table(&o, BinSpec::new(1, s).unwrap()).unwrap().ece();
        let n = o.len() as f64;
        let acc = o.iter().filter(|x| x.correct).count() as f64 / n;
        let conf = o.iter().map(|x| x.confidence).sum::<f64>() / n;
        prop_assert!((e - (acc - conf).abs()).abs() <= 1e-12);
    }

    #[test]
    fn prediction_logs_round_trip(set in prediction_set(), csv in any::<bool>()) {
        let format = if csv { Format::Csv } else { Format::Jsonl };
        let mut buf = Vec::new();
        write_predictions(&set, format, &mut buf).unwrap();
        let back = read_predictions(buf.as_slice(), format, set.split_tag(), IngestOptions::default()).unwrap();
        prop_assert_eq!(back, set);
    }

    #[test]
    fn split_half_partitions(set in prediction_set(), seed in any::<u64>()) {
        prop_assume!(set.len() >= 2);
        let (a, b) = split_half(&set, seed).unwrap();
        prop_assert_eq!(a.len(), set.len().div_ceil(2));
        prop_assert_eq!(a.len() + b.len(), set.len());
        let key = |r: &PredictionRecord| (r.logits.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), r.gold_label);
        let mut all: Vec<_> = set.records().iter().map(key).collect();
        let mut parts: Vec<_> = a.records().iter().chain(b.records()).map(key).collect();
        all.sort();
        parts.sort();
        prop_assert_eq!(all, parts);
    }

    #[test]
    fn nll_objective_ignores_logit_shifts(set in prediction_set(), c in -20.0f64..20.0, t in 0.05f64..5.0) {
        let shifted = PredictionSet::new(
            set.records()
                .iter()
                .map(|r| PredictionRecord::new(r.logits.iter().map(|v| v + c).collect(), r.gold_label))
                .collect(),
            set.split_tag(),
        )
        .unwrap();
        let a = CachedLogits::new(&set).objective(t, &Objective::nll()).unwrap();
        let b = CachedLogits::new(&shifted).objective(t, &Objective::nll()).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn temperature_never_moves_accuracy(set in prediction_set(), t in 0.01f64..5.0) {
        let base = evaluate(&set, 1.0, BinSpec::default()).unwrap();
        let scaled = evaluate(&set, t, BinSpec::default()).unwrap();
        prop_assert_eq!(base.accuracy, scaled.accuracy);
        let labels = |o: Vec<ConfidenceOutcome>| o.into_iter().map(|x| x.predicted_label).collect::<Vec<_>>();
        prop_assert_eq!(labels(outcomes_at(&set, 1.0).unwrap()), labels(outcomes_at(&set, t).unwrap()));
    }

    #[test]
    fn smoothed_targets_are_distributions(k in 2usize..=50, alpha in 0.0f64..0.99, pick in any::<prop::sample::Index>()) {
        let y = pick.index(k);
        let t = smooth_targets(y, &SmoothingConfig::new(alpha, k).unwrap()).unwrap();
        prop_assert!((t.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let mut distinct: Vec<u64> = t.probs().iter().map(|v| v.to_bits()).collect();
        distinct.sort();
        distinct.dedup();
        prop_assert!(distinct.len() <= 2);
        prop_assert_eq!(t.probs()[y], 1.0 - alpha);
    }

    #[test]
    fn zero_alpha_loss_is_nll(z in logits(2..=8), pick in any::<prop::sample::Index>()) {
        let y = pick.index(z.len());
        let t = smooth_targets(y, &SmoothingConfig::new(0.0, z.len()).unwrap()).unwrap();
        let want = nll(&softmax(&z).unwrap(), y).unwrap();
        prop_assert!((smoothed_loss(&z, &t).unwrap() - want).abs() <= 1e-12);
    }
}
