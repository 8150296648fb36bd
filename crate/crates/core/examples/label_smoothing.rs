//! Smoothed targets, the KL loss and its gradient, checked against central
//! finite differences.

use calibkit::numerics::{entropy, softmax};
use calibkit::smoothing::{loss_gradient, smooth_targets, smoothed_loss, SmoothingConfig};

fn main() -> calibkit::Result<()> {
    let logits = [2.0, -0.5, 0.3, 1.1];
    for alpha in [0.0, 0.1, 0.3] {
        let config = SmoothingConfig::new(alpha, logits.len())?;
        let target = smooth_targets(0, &config)?;
        let loss = smoothed_loss(&logits, &target)?;
        let grad = loss_gradient(&logits, &target)?;

        let h = 1e-5;
        let fd: Vec<f64> = (0..logits.len())
            .map(|i| {
                let mut up = logits;
                let mut down = logits;
                up[i] += h;
                down[i] -= h;
                (smoothed_loss(&up, &target).unwrap() - smoothed_loss(&down, &target).unwrap()) / (2.0 * h)
            })
            .collect();
        let worst = grad.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

        println!("alpha {alpha:.1}  target {:?}", target.probs());
        println!(
            "  loss {loss:.6}  target entropy {:.6}",
            entropy(target.as_distribution())
        );
        println!("  grad {grad:.5?}");
        println!("  max |grad - finite difference| {worst:.2e}");
    }
    println!("predicted {:.4?}", softmax(&logits)?.probs());
    Ok(())
}
