//! Cross-validated L1 logistic regression on a sparse synthetic problem:
//! three informative features out of fifteen.
//!
//! ```text
//! cargo run --release --example train_lasso
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use jargon::model::{fit_model, lambda_grid, CdOptions, LambdaPolicy, SelectionRule};

fn main() -> jargon::Result<()> {
    let (n, d) = (500, 15);
    let truth = [(0, 2.0), (4, -1.5), (9, 1.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let y: Vec<f64> = x
        .iter()
        .map(|r| {
            let z: f64 = truth.iter().map(|&(j, w)| w * r[j]).sum();
            (rng.gen::<f64>() < 1.0 / (1.0 + (-z).exp())) as u8 as f64
        })
        .collect();
    let names: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    let policy = LambdaPolicy::CrossValidated {
        grid: lambda_grid(1e-3, 0.3, 12),
        folds: 5,
        rule: SelectionRule::OneStandardError,
    };
    let (model, cv) = fit_model(&names, &x, &y, &vec![false; d], &policy, &CdOptions::default())?;
    let cv = cv.expect("cross-validated policy");
    println!("{:>10} {:>8} {:>8}", "lambda", "mean F1", "std err");
    for ((l, m), s) in cv.lambdas.iter().zip(&cv.mean_f1).zip(&cv.std_err) {
        let mark = if *l == cv.chosen { " <" } else { "" };
        println!("{l:>10.5} {m:>8.4} {s:>8.4}{mark}");
    }
    println!(
        "\ntrue support: {:?}",
        truth.iter().map(|(j, _)| names[*j].as_str()).collect::<Vec<_>>()
    );
    println!("recovered (standardized weights):");
    for (name, w) in model.nonzero_coefficients(1e-8) {
        println!("  {name:>4} {w:+.4}");
    }
    println!("converged in {} iterations", model.convergence.iterations);
    Ok(())
}
