//! Characteristic times of a motion: curvature peaks of each joint angle.
//!
//! `cargo run --example select_nodes`

use std::f64::consts::PI;

use nalgebra::Vector2;
use sdre_gait::gait::{
    read_profiles, select_nodes, synthetic_squat, synthetic_walk, write_profiles, CurvatureMode, GaitProfile,
    NodeOptions,
};

fn main() -> sdre_gait::Result<()> {
    let sine = GaitProfile::from_fn("sine", 1e-3, 1.0, |t| Vector2::new((2.0 * PI * t).sin(), 0.0))?;
    println!("sine: {:?}", select_nodes(&sine, &NodeOptions::default())?.times());

    for profile in [synthetic_walk(1e-3)?, synthetic_squat(1e-3)?] {
        for mode in [CurvatureMode::Accel, CurvatureMode::Graph] {
            let opts = NodeOptions { mode, ..NodeOptions::default() };
            let nodes = select_nodes(&profile, &opts)?;
            let times: Vec<String> = nodes.times().iter().map(|t| format!("{t:.3}")).collect();
            println!("{} ({mode:?}): {} nodes [{}]", profile.label, nodes.len(), times.join(", "));
        }
    }

    // Profiles round-trip through CSV; a coarser spacing keeps the same nodes.
    let mut buf = Vec::new();
    write_profiles(&[synthetic_walk(5e-3)?], &mut buf)?;
    let coarse = read_profiles(buf.as_slice(), "walk")?;
    let nodes = select_nodes(&coarse[0], &NodeOptions::default())?;
    println!("walk from CSV at dt=5e-3: {:?}", nodes.times());
    Ok(())
}
