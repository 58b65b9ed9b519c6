//! Results and correlation tables from run directories, with a few
//! hand-written runs standing in for trained ones.

use gradalign::alignment::{write_alignment_csv, AlignmentRecord, AlignmentReport};
use gradalign::attacks::{write_curve_csv, RobustnessCurve};
use gradalign::data::write_manifest;
use gradalign::experiment::{ALIGNMENT_FILE, CURVE_LINF_FILE, RUN_MANIFEST};
use gradalign::report::write_report;

fn main() -> gradalign::Result<()> {
    let root = std::env::temp_dir().join("gradalign_report_demo");
    let _ = std::fs::remove_dir_all(&root);
    for (k, eps) in [0.002, 0.005, 0.01].into_iter().enumerate() {
        for seed in 1..=2u64 {
            let dir = root.join(format!("pgd_spheres_eps{k}_seed{seed}"));
            std::fs::create_dir_all(&dir)?;
            write_manifest(
                dir.join(RUN_MANIFEST),
                &[
                    ("setup", format!("pgd_eps{eps}")),
                    ("dataset", "spheres".into()),
                    ("seed", seed.to_string()),
                    ("eps_train", eps.to_string()),
                ],
            )?;
            let alpha = 0.6 + 20.0 * eps + 0.01 * seed as f64;
            let records = (0..10)
                .map(|i| AlignmentRecord {
                    index: i,
                    y: i % 2,
                    m_x: i % 2,
                    tilde_c: 1 - i % 2,
                    alpha_dx: alpha,
                    alpha_x: alpha - 0.05,
                    rho_lemma1: 0.1,
                })
                .collect();
            write_alignment_csv(&AlignmentReport::from_records(records), dir.join(ALIGNMENT_FILE))?;
            let e50 = 0.004 + 0.3 * eps;
            let curve = RobustnessCurve {
                points: vec![(0.0, 1.0), (e50 / 2.0, 0.9), (e50 * 2.0, 0.1)],
                attack: "pgd-linf".into(),
            };
            write_curve_csv(&curve, dir.join(CURVE_LINF_FILE))?;
        }
    }
    let table = write_report(&root)?;
    for w in &table.warnings {
        println!("warning: {w}");
    }
    println!("{}", std::fs::read_to_string(root.join("report/results.csv"))?);
    println!("{}", std::fs::read_to_string(root.join("report/correlation.csv"))?);
    Ok(())
}
