//! Accuracy-versus-budget curves for PGD (L-inf and L2) and the Square
//! Attack on a small trained squares classifier, written as CSV and SVG.

use gradalign::attacks::{
    default_grid, epsilon_50, robustness_curve, write_curve_csv, AttackConfig, AttackKind, Norm, SquareConfig,
};
use gradalign::data::{gen_squares, SquaresConfig};
use gradalign::report::emit_curve_svg;
use gradalign::training::{train, Method, TrainConfig};
use gradalign::{Mlp, Rng};

fn main() -> gradalign::Result<()> {
    let sq = SquaresConfig::default();
    let train_ds = gen_squares(600, &sq, 1)?;
    let val = gen_squares(100, &sq, 2)?;
    let test = gen_squares(100, &sq, 3)?;
    let clamp = Some((-1.0, 1.0));

    let mut cfg = TrainConfig::new(Method::Baseline, 0.2, 0.02);
    cfg.epochs = 3;
    cfg.batch_size = 12;
    cfg.lr = 1e-3;
    cfg.val_attack.clamp = clamp;
    let model = Mlp::new(&[sq.dim(), 128, 128, 2], &mut Rng::new(1))?;
    let (model, _) = train(model, &train_ds, &val, &cfg)?;

    let mut linf = AttackConfig::pgd(Norm::Inf, 0.0, 0.02);
    linf.clamp = clamp;
    let mut l2 = AttackConfig::pgd(Norm::Two, 0.0, 0.02);
    l2.clamp = clamp;
    let square = SquareConfig { queries: 500, ..SquareConfig::default() };
    let l2_scale = (sq.dim() as f64).sqrt();
    let runs = [
        (AttackKind::Pgd(linf.clone()), default_grid(0.2)),
        (AttackKind::Pgd(l2), default_grid(0.2 * l2_scale)),
        (AttackKind::Square(linf, square), default_grid(0.2)),
    ];

    let dir = std::env::temp_dir().join("gradalign_curves");
    std::fs::create_dir_all(&dir)?;
    for (kind, grid) in &runs {
        let curve = robustness_curve(&model, &test, kind, grid)?;
        let name = kind.descriptor();
        write_curve_csv(&curve, dir.join(format!("{name}.csv")))?;
        emit_curve_svg(&curve, dir.join(format!("{name}.svg")))?;
        match epsilon_50(&curve) {
            Ok(e) => println!("{name}: eps50 {e:.4}"),
            Err(e) => println!("{name}: {e}"),
        }
    }
    println!("curves in {}", dir.display());
    Ok(())
}
