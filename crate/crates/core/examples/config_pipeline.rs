//! The config-driven pipeline behind the command-line tool, at toy scale:
//! data, training, attacks, alignment, residual generator and report.

use gradalign::experiment::{align_run, attack_run, eps50_or_nan, gan_run, gen_data, parse_config, train_run};
use gradalign::report::write_report;

fn main() -> gradalign::Result<()> {
    let out = std::env::temp_dir().join("gradalign_pipeline");
    let _ = std::fs::remove_dir_all(&out);
    let cfg = parse_config(&format!(
        "# toy spheres run
dataset = spheres
dim = 16
per_epoch = 5000
val_count = 100
test_count = 100
hidden = 32, 32
epochs = 5
lr = 0.001
eps_train = 0.02
step = 0.008
method = pgd
attack_samples = 100
square_samples = 20
square_queries = 200
gan_epochs = 5
gan_hidden = 32, 32
out = {}
",
        out.display()
    ))?;
    let seed = 1;
    for path in gen_data(&cfg, seed)? {
        println!("wrote {}", path.display());
    }
    let (dir, history) = train_run(&cfg, seed)?;
    println!("trained {} (best epoch {:?})", dir.display(), history.best_epoch);
    for curve in attack_run(&cfg, seed)? {
        println!("{} eps50 {:.4}", curve.attack, eps50_or_nan(&curve));
    }
    let report = align_run(&cfg, seed)?;
    println!("alpha_dx {:.3}, alpha_x {:.3}", report.alpha_dx_mean, report.alpha_x_mean);
    let (_, gan) = gan_run(&cfg, seed)?;
    println!("generator similarity {:.3}", gan.sim_mean);
    let table = write_report(&out)?;
    println!("report over {} runs in {}", table.rows.len(), out.join("report").display());
    Ok(())
}
