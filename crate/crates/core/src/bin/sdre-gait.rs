use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sdre_gait::commands::{gen_profile, run_check, run_compare, run_parameterize, run_simulate, Motion};
use sdre_gait::config::{parse_bounds, ProfileSource, ReferenceSource, RunConfig};
use sdre_gait::gait::CurvatureMode;
use sdre_gait::{Error, Result};

#[derive(Parser)]
#[command(name = "sdre-gait", version, about = "SDRE gait tracking and motor velocity planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track the motion with the SDRE controller.
    Simulate(Common),
    /// Fit velocity command plans to the reference torque.
    Parameterize(Common),
    /// Compare SDRE tracking against the velocity plans.
    Compare(Common),
    /// Stabilizability, detectability and CARE checks along the motion.
    Check(Common),
    /// Write a synthetic two-leg motion as CSV.
    GenProfile(GenArgs),
}

#[derive(Args)]
struct Common {
    /// Motion CSV, or builtin:walk / builtin:squat.
    #[arg(long)]
    profile: Option<String>,
    /// TOML configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    care_every: Option<usize>,
    /// w_min,w_max,a_min,a_max
    #[arg(long, allow_hyphen_values = true)]
    bounds: Option<String>,
    /// sdre or human
    #[arg(long)]
    reference: Option<String>,
    /// accel or graph
    #[arg(long)]
    curvature_mode: Option<String>,
}

#[derive(Args)]
struct GenArgs {
    /// walk or squat
    motion: String,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn into_config(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.profile {
            cfg.profile = p.parse::<ProfileSource>()?;
        }
        if let Some(v) = self.dt {
            cfg.sim.dt = v;
        }
        if let Some(v) = self.eta {
            cfg.gains.eta = v;
        }
        if let Some(v) = self.seed {
            cfg.optimizer.seed = v;
        }
        if let Some(v) = self.out_dir {
            cfg.out_dir = v;
        }
        if let Some(v) = self.care_every {
            cfg.sim.care_every = v;
        }
        if let Some(v) = self.bounds {
            cfg.bounds = parse_bounds(&v)?;
        }
        if let Some(v) = self.reference {
            cfg.reference = v.parse::<ReferenceSource>()?;
        }
        if let Some(v) = self.curvature_mode {
            cfg.nodes.curvature_mode = v.parse::<CurvatureMode>()?;
        }
        Ok(cfg)
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(c) => {
            let s = run_simulate(&c.into_config()?)?;
            for leg in &s.legs {
                println!(
                    "{}: angle RMSE hip {:.4} deg, knee {:.4} deg",
                    leg.leg, leg.angle_rmse_deg[0], leg.angle_rmse_deg[1]
                );
            }
        }
        Command::Parameterize(c) => {
            let s = run_parameterize(&c.into_config()?)?;
            for w in s.warnings() {
                eprintln!("warning: {w}");
            }
            for d in &s.legs {
                println!(
                    "{}: {} segments, cost {:.6} (initial {:.6})",
                    d.leg, d.segments, d.cost, d.initial_cost
                );
            }
        }
        Command::Compare(c) => {
            let r = run_compare(&c.into_config()?)?;
            print!("{}", r.to_text());
        }
        Command::Check(c) => {
            let r = run_check(&c.into_config()?)?;
            println!("all checks passed ({} legs)", r.legs.len());
        }
        Command::GenProfile(g) => {
            let motion: Motion = g.motion.parse()?;
            match g.out {
                Some(path) => gen_profile(motion, g.dt, File::create(path)?)?,
                None => gen_profile(motion, g.dt, io::stdout().lock())?,
            }
        }
    }
    Ok(())
}

fn report_error(e: &Error) {
    let doc = serde_json::json!({
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": e.exit_code(),
    });
    let _ = writeln!(io::stderr(), "{doc}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
