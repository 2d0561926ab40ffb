//! SDRE tracking against the fitted velocity plan on the built-in walk,
//! writing the full report set.
//!
//! `cargo run --release --example compare_methods [out_dir]`

use std::path::PathBuf;

use sdre_gait::commands::run_compare;
use sdre_gait::RunConfig;

fn main() -> sdre_gait::Result<()> {
    let out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("sdre-gait-compare"));
    let mut cfg = RunConfig { out_dir: out_dir.clone(), ..RunConfig::default() };
    cfg.optimizer.starts = 2;
    cfg.optimizer.max_evals = 5_000;

    let report = run_compare(&cfg)?;
    print!("{}", report.to_text());
    let mut files: Vec<_> = std::fs::read_dir(&out_dir)?.map(|e| e.map(|e| e.file_name())).collect::<Result<_, _>>()?;
    files.sort();
    println!("\nwrote to {}: {:?}", out_dir.display(), files);
    Ok(())
}
