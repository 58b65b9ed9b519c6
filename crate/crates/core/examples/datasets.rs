//! Generate the synthetic datasets, save them in the binary dataset
//! format and read them back.

use gradalign::data::{gen_squares, load_dataset, sample_spheres, save_dataset, SquaresConfig};

fn main() -> gradalign::Result<()> {
    let dir = std::env::temp_dir().join("gradalign_datasets");
    std::fs::create_dir_all(&dir)?;

    let spheres = sample_spheres(1000, 500, 1)?;
    let s = &spheres.samples[0];
    let radius = s.x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let step = s.delta_x.as_ref().map(|d| d.iter().map(|v| v * v).sum::<f64>().sqrt());
    println!("spheres: {} samples, first has label {} radius {radius:.3} and residual length {step:?}", spheres.len(), s.y);

    let sq = SquaresConfig::default();
    let squares = gen_squares(200, &sq, 1)?;
    println!("squares: {} images of {}x{}, classes {:?}", squares.len(), sq.side, sq.side, &squares.labels()[..8]);

    for ds in [&spheres, &squares] {
        let path = dir.join(format!("{}.gda", ds.name));
        save_dataset(ds, &path)?;
        let back = load_dataset(&path)?;
        println!("{} -> {} samples of {} features", path.display(), back.len(), back.n);
    }
    Ok(())
}
