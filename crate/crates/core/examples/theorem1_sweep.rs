//! Randomized check that, for linear classifiers, the two robustness
//! values of a pair of points add up to the distance between them times
//! the alignment of that distance with the logit-gap gradient.
//!
//! ```text
//! cargo run --release --example theorem1_sweep -- [trials] [dim] [classes]
//! ```

use gradalign::table::fmt_num;
use gradalign::theory::{theorem1_sweep, verify_theorem1, prediction_and_closest};
use gradalign::LinearModel;

fn main() -> gradalign::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let trials = args.first().copied().unwrap_or(1000);
    let dim = args.get(1).copied().unwrap_or(10);
    let classes = args.get(2).copied().unwrap_or(4);

    // A hand-made binary example first.
    let model = LinearModel::from_columns(&[vec![1.0, 0.0], vec![-1.0, 0.5]], vec![0.0, 0.2])?;
    let (x_i, x_j) = ([-1.0, 0.3], [2.0, -0.4]);
    let (m, c) = prediction_and_closest(&model, &x_i);
    println!("x_i predicted {m}, closest other class {c}");
    println!("single pair residual {}", fmt_num(verify_theorem1(&model, &x_i, &x_j, m, c)?));

    let sweep = theorem1_sweep(trials, dim, classes, 0)?;
    println!("{trials} random models, n = {dim}, {classes} classes");
    println!("  max residual          {}", fmt_num(sweep.max_residual));
    println!("  max relative residual {}", fmt_num(sweep.max_relative_residual));
    println!("  mean residual         {}", fmt_num(sweep.mean_residual));
    println!("  rejected draws        {}", fmt_num(sweep.filtered_fraction()));
    Ok(())
}
