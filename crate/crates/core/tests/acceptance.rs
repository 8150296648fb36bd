//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use calibkit::benchmark::{run_seed, BenchmarkConfig};
use calibkit::metrics::{accuracy, evaluate, outcomes_at, reliability_table, BinScheme, BinSpec};
use calibkit::numerics::{apply_temperature, entropy, softmax};
use calibkit::smoothing::{loss_gradient, smooth_targets, smoothed_loss, SmoothingConfig};
use calibkit::store::{write_predictions_to_path, Format, PredictionSet};
use calibkit::temperature::{fit_temperature, CachedLogits, Objective, SearchGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, format!("took {elapsed:?}, limit {limit:?}"))
}

/// Brute-force ECE written without any toolkit binning code.
fn oracle_ece(set: &PredictionSet, k: usize, scheme: BinScheme) -> f64 {
    let mut items: Vec<(f64, bool)> = set
        .records()
        .iter()
        .map(|r| {
            let mut best = 0;
            for j in 1..r.logits.len() {
                if r.logits[j] > r.logits[best] {
                    best = j;
                }
            }
            let m = r.logits[best];
            let denom: f64 = r.logits.iter().map(|z| (z - m).exp()).sum();
            (1.0 / denom, best == r.gold_label)
        })
        .collect();
    let n = items.len();
    let mut groups: Vec<Vec<(f64, bool)>> = vec![Vec::new(); k];
    match scheme {
        BinScheme::EqualWidth => {
            for &(c, ok) in &items {
                let mut bin = k - 1;
                for i in 0..k {
                    let lo = i as f64 / k as f64;
                    let hi = (i + 1) as f64 / k as f64;
                    if c >= lo && c < hi {
                        bin = i;
                        break;
                    }
                }
                groups[bin].push((c, ok));
            }
        }
        BinScheme::EqualMass => {
            items.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            for (pos, item) in items.iter().enumerate() {
                let bin = (0..k).find(|&j| pos < (j + 1) * n / k).unwrap();
                groups[bin].push(*item);
            }
        }
    }
    groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let size = g.len() as f64;
            let conf = g.iter().map(|x| x.0).sum::<f64>() / size;
            let acc = g.iter().filter(|x| x.1).count() as f64 / size;
            size / n as f64 * (acc - conf).abs()
        })
        .sum()
}

fn ece_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let set = common::random_set(&mut rng, 64, 5);
        for k in [1, 5, 10] {
            for scheme in [BinScheme::EqualWidth, BinScheme::EqualMass] {
                let got = evaluate(&set, 1.0, BinSpec::new(k, scheme).unwrap()).unwrap().ece;
                let want = oracle_ece(&set, k, scheme);
                worst = worst.max((got - want).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-12, format!("max |ece − oracle| = {worst:e}"))?;
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!("6000 comparisons, max diff {worst:.1e}, {elapsed:.2?}"))
}

fn smoothing_targets_exact() -> Outcome {
    let target = smooth_targets(0, &SmoothingConfig::new(0.1, 3).unwrap()).unwrap();
    let worst = target
        .probs()
        .iter()
        .zip([0.9, 0.05, 0.05])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-15, format!("target {:?}", target.probs()))?;
    Ok(format!("{:?}", target.probs()))
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(2..=6);
        let alpha = rng.random_range(0.0..=0.5);
        let gold = rng.random_range(0..k);
        let logits: Vec<f64> = (0..k).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let target = smooth_targets(gold, &SmoothingConfig::new(alpha, k).unwrap()).unwrap();
        let grad = loss_gradient(&logits, &target).unwrap();
        for i in 0..k {
            let mut up = logits.clone();
            let mut down = logits.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (smoothed_loss(&up, &target).unwrap() - smoothed_loss(&down, &target).unwrap()) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    ensure(worst < 1e-5, format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.1e}"))
}

fn fitter_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let dev = common::scaled_softmax_set(&mut rng, 10_000, 3, 3.0);
    let start = Instant::now();
    let fit = fit_temperature(&dev, &SearchGrid::default(), &Objective::nll()).unwrap();
    let elapsed = start.elapsed();
    ensure(
        (2.7..=3.3).contains(&fit.temperature),
        format!("T = {}", fit.temperature),
    )?;
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!("T = {:.2}, {elapsed:.2?}", fit.temperature))
}

fn accuracy_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let grid = SearchGrid::default().points();
    for s in 0..100 {
        let set = common::random_set(&mut rng, 200, 6);
        let base = outcomes_at(&set, 1.0).unwrap();
        let base_acc = accuracy(&base).unwrap();
        let fitted = fit_temperature(&set, &SearchGrid::default(), &Objective::default())
            .unwrap()
            .temperature;
        let mut temps: Vec<f64> = (0..20).map(|_| grid[rng.random_range(0..grid.len())]).collect();
        temps.push(fitted);
        for t in temps {
            let at = outcomes_at(&set, t).unwrap();
            ensure(
                accuracy(&at).unwrap() == base_acc,
                format!("set {s}: accuracy changed at T={t}"),
            )?;
            ensure(
                at.iter()
                    .zip(&base)
                    .all(|(a, b)| a.predicted_label == b.predicted_label),
                format!("set {s}: a predicted label changed at T={t}"),
            )?;
        }
    }
    Ok("100 sets × 21 temperatures".into())
}

fn entropy_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let grid = SearchGrid::default().points();
    let mut pairs = 0usize;
    for v in 0..1000 {
        let k = rng.random_range(2..=8);
        let scale = rng.random_range(0.1..10.0);
        let z: Vec<f64> = (0..k).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let entropies: Vec<f64> = grid
            .iter()
            .map(|&t| entropy(&softmax(&apply_temperature(&z, t).unwrap()).unwrap()))
            .collect();
        for (i, w) in entropies.windows(2).enumerate() {
            ensure(
                w[1] >= w[0] - 1e-12,
                format!(
                    "vector {v}: H(T={}) = {} > H(T={}) = {}",
                    grid[i],
                    w[0],
                    grid[i + 1],
                    w[1]
                ),
            )?;
            pairs += 1;
        }
    }
    Ok(format!("{pairs} adjacent pairs"))
}

fn benchmark_trends() -> Outcome {
    let start = Instant::now();
    let config = BenchmarkConfig::default();
    let (mut a, mut b, mut c) = (0, 0, 0);
    for seed in 1..=10 {
        let run = run_seed(&config, seed).map_err(|e| format!("seed {seed}: {e}"))?;
        a += usize::from(run.mle.temperature_scaled.in_domain.ece < run.mle.out_of_the_box.in_domain.ece);
        b += usize::from(run.ls.out_of_the_box.out_of_domain.ece < run.mle.out_of_the_box.out_of_domain.ece);
        c += usize::from(run.mle.out_of_the_box.in_domain.ece < run.ls.out_of_the_box.in_domain.ece);
    }
    let elapsed = start.elapsed();
    let summary = format!("a {a}/10, b {b}/10, c {c}/10, {elapsed:.2?}");
    ensure(a >= 8 && b >= 8 && c >= 8, summary.clone())?;
    within(elapsed, Duration::from_secs(120))?;
    Ok(summary)
}

fn performance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let big = common::scaled_softmax_set(&mut rng, 1_000_000, 4, 2.0);
    let cache = CachedLogits::new(&big);
    let start = Instant::now();
    let table = reliability_table(&cache.outcomes(1.0), BinSpec::default()).unwrap();
    let ece_time = start.elapsed();
    ensure(table.total == 1_000_000, "wrong total")?;
    within(ece_time, Duration::from_secs(1))?;

    let dev = common::scaled_softmax_set(&mut rng, 10_000, 4, 2.0);
    let start = Instant::now();
    let fit = fit_temperature(&dev, &SearchGrid::default(), &Objective::default()).unwrap();
    let search_time = start.elapsed();
    ensure(fit.curve.len() == 500, "grid is not 500 points")?;
    within(search_time, Duration::from_secs(10))?;
    Ok(format!(
        "1M-prediction ECE {ece_time:.2?}, 500-point line search {search_time:.2?}"
    ))
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let dev = root.join("dev.jsonl");
    let test = root.join("test.csv");
    write_predictions_to_path(&common::scaled_softmax_set(&mut rng, 500, 4, 2.0), Format::Jsonl, &dev).unwrap();
    write_predictions_to_path(&common::scaled_softmax_set(&mut rng, 500, 4, 2.0), Format::Csv, &test).unwrap();
    let out = root.join("out");
    let (dev, test, out) = (dev.to_str().unwrap(), test.to_str().unwrap(), out.to_str().unwrap());

    let commands: Vec<Vec<&str>> = vec![
        vec!["ece", test, "--temperature", "1.5", "--out", out],
        vec![
            "reliability",
            dev,
            "--bins",
            "15",
            "--scheme",
            "equal-mass",
            "--out",
            out,
        ],
        vec!["fit-temp", dev, "--eval", test, "--objective", "nll", "--out", out],
        vec!["benchmark", "--seeds", "1,2", "--write-splits", "--out", out],
    ];
    let mut files = 0;
    for args in &commands {
        let mut runs = Vec::new();
        for _ in 0..2 {
            let _ = std::fs::remove_dir_all(out);
            let status = Command::new(env!("CARGO_BIN_EXE_calibkit"))
                .args(args)
                .output()
                .unwrap();
            ensure(status.status.success(), format!("{} failed", args[0]))?;
            runs.push((status.stdout, snapshot(Path::new(out))));
        }
        ensure(runs[0] == runs[1], format!("{} output differs between runs", args[0]))?;
        files += runs[0].1.len();
    }
    Ok(format!("4 commands, {files} files byte-identical"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("ECE oracle equivalence", ece_oracle_equivalence),
        ("smoothing targets exact", smoothing_targets_exact),
        ("gradient vs finite differences", gradient_correctness),
        ("temperature recovery", fitter_recovery),
        ("accuracy invariance under temperature", accuracy_invariance),
        ("entropy monotone in temperature", entropy_monotonicity),
        ("shift benchmark trends", benchmark_trends),
        ("performance", performance),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS  {}. {name}: {detail}", i + 1),
            Ok(Err(detail)) => {
                failed += 1;
                println!("FAIL  {}. {name}: {detail}", i + 1);
            }
            Err(_) => {
                failed += 1;
                println!("FAIL  {}. {name}: panicked", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
