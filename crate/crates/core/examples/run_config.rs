//! Configuration files: parse TOML, override a field, and see the config hash
//! that stamps every output.
//!
//! `cargo run --example run_config`

use sdre_gait::RunConfig;

const CONFIG: &str = r#"
profile = "builtin:squat"
reference = "human"

[sim]
dt = 0.002

[gains]
q_diag = [800.0, 800.0, 20.0, 20.0, 1.0]

[bounds]
w_min = -4.0
w_max = 4.0
alpha_min = -30.0
alpha_max = 30.0
"#;

fn main() -> sdre_gait::Result<()> {
    let cfg = RunConfig::from_toml(CONFIG)?;
    cfg.validate()?;
    println!("hash {}", cfg.hash());

    let mut other = cfg.clone();
    other.out_dir = "elsewhere".into();
    println!("output directory does not change the hash: {}", other.hash() == cfg.hash());
    other.gains.eta = 2.0;
    println!("eta does: {}", other.hash() != cfg.hash());

    let mut bad = cfg.clone();
    bad.bounds.alpha_min = 50.0;
    match bad.validate() {
        Ok(()) => println!("unexpectedly valid"),
        Err(e) => println!("inverted bounds rejected with exit code {}: {e}", e.exit_code()),
    }

    println!("\nfull configuration:\n{}", cfg.to_toml());
    Ok(())
}
