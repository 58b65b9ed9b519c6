//! Load the MNIST IDX files, keep the digits 3 and 5, and relabel them
//! 0 and 1.
//!
//! ```text
//! cargo run --release --example mnist_three_five -- path/to/mnist
//! ```

use std::path::PathBuf;

use gradalign::data::{filter_classes, load_mnist_idx};

fn main() -> gradalign::Result<()> {
    let Some(dir) = std::env::args_os().nth(1).map(PathBuf::from) else {
        eprintln!("usage: mnist_three_five <dir with train-images-idx3-ubyte and train-labels-idx1-ubyte>");
        std::process::exit(2);
    };
    let all = load_mnist_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?;
    let pair = filter_classes(&all, &[3, 5])?;
    let fives = pair.labels().iter().filter(|&&y| y == 1).count();
    println!("{} images, {} are 3 or 5 ({} fives), {} features in [-1, 1]", all.len(), pair.len(), fives, pair.n);
    Ok(())
}
