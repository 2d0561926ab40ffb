//! Error metrics and method comparison tables.
//!
//! Angles are radians everywhere except in the reported RMSE columns, which
//! are in degrees. Torque RMSE is in N·m.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-component root mean square of a sequence of 2-vectors.
pub fn rmse(err: &[Vector2<f64>]) -> Vector2<f64> {
    if err.is_empty() {
        return Vector2::zeros();
    }
    let n = err.len() as f64;
    let sum = err.iter().fold(Vector2::zeros(), |acc, e| acc + e.component_mul(e));
    (sum / n).map(f64::sqrt)
}

/// Per-component RMS of `a - b`.
pub fn rmse_between(a: &[Vector2<f64>], b: &[Vector2<f64>]) -> Result<Vector2<f64>> {
    if a.len() != b.len() {
        return Err(Error::DomainMismatch(format!(
            "series have {} and {} samples",
            a.len(),
            b.len()
        )));
    }
    let diff: Vec<_> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Ok(rmse(&diff))
}

pub fn to_degrees(v: Vector2<f64>) -> Vector2<f64> {
    v.map(f64::to_degrees)
}

/// How far one method's motion and torque are from the recorded motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodErrors {
    /// Hip and knee angle RMSE (deg).
    pub angle_rmse_deg: [f64; 2],
    /// Hip and knee torque RMSE (N·m).
    pub torque_rmse: [f64; 2],
}

impl MethodErrors {
    /// Errors of `(theta, tau)` against the target `(theta_ref, tau_ref)`,
    /// all sampled on the same time base.
    pub fn between(
        theta_ref: &[Vector2<f64>],
        tau_ref: &[Vector2<f64>],
        theta: &[Vector2<f64>],
        tau: &[Vector2<f64>],
    ) -> Result<Self> {
        let a = to_degrees(rmse_between(theta_ref, theta)?);
        let t = rmse_between(tau_ref, tau)?;
        Ok(Self {
            angle_rmse_deg: [a[0], a[1]],
            torque_rmse: [t[0], t[1]],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub motion: String,
    pub side: String,
    pub joint: String,
    pub sdre_angle_rmse_deg: f64,
    pub plan_angle_rmse_deg: f64,
    pub sdre_torque_rmse: f64,
    pub plan_torque_rmse: f64,
}

/// RMSE table of SDRE tracking against the velocity-command plan, one row
/// per motion, side and joint. The plan column is the simulated motion of
/// the commanded velocities, not a hardware measurement.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config_hash: String,
    pub rows: Vec<ComparisonRow>,
}

const JOINTS: [&str; 2] = ["hip", "knee"];

impl ComparisonReport {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self {
            config_hash: config_hash.into(),
            rows: Vec::new(),
        }
    }

    /// Adds the hip and knee rows of one leg.
    pub fn push_leg(&mut self, motion: &str, side: &str, sdre: &MethodErrors, plan: &MethodErrors) {
        for (j, joint) in JOINTS.iter().enumerate() {
            self.rows.push(ComparisonRow {
                motion: motion.to_string(),
                side: side.to_string(),
                joint: joint.to_string(),
                sdre_angle_rmse_deg: sdre.angle_rmse_deg[j],
                plan_angle_rmse_deg: plan.angle_rmse_deg[j],
                sdre_torque_rmse: sdre.torque_rmse[j],
                plan_torque_rmse: plan.torque_rmse[j],
            });
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# config_hash={}", self.config_hash)?;
        writeln!(
            out,
            "motion,side,joint,sdre_angle_rmse_deg,plan_angle_rmse_deg,sdre_torque_rmse_nm,plan_torque_rmse_nm"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.motion,
                r.side,
                r.joint,
                r.sdre_angle_rmse_deg,
                r.plan_angle_rmse_deg,
                r.sdre_torque_rmse,
                r.plan_torque_rmse
            )?;
        }
        Ok(())
    }

    /// Fixed-width table for terminals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Angle RMSE relative to the recorded motion (deg)");
        let _ = writeln!(s, "{:<10} {:<6} {:<5} {:>10} {:>10}", "motion", "side", "joint", "SDRE", "plan");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} {:<6} {:<5} {:>10.4} {:>10.4}",
                r.motion, r.side, r.joint, r.sdre_angle_rmse_deg, r.plan_angle_rmse_deg
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "Torque RMSE relative to the recorded motion's inverse dynamics (N·m)");
        let _ = writeln!(s, "{:<10} {:<6} {:<5} {:>10} {:>10}", "motion", "side", "joint", "SDRE", "plan");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} {:<6} {:<5} {:>10.4} {:>10.4}",
                r.motion, r.side, r.joint, r.sdre_torque_rmse, r.plan_torque_rmse
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "plan = simulated execution of the velocity command plan");
        let _ = writeln!(s, "config {}", self.config_hash);
        s
    }
}

/// Plot-ready torque series of one leg: recorded-motion torque, both
/// methods, and their errors.
pub fn write_torque_series<W: Write>(
    mut out: W,
    t: &[f64],
    tau_ref: &[Vector2<f64>],
    tau_sdre: &[Vector2<f64>],
    tau_plan: &[Vector2<f64>],
) -> Result<()> {
    let n = t.len();
    if tau_ref.len() != n || tau_sdre.len() != n || tau_plan.len() != n {
        return Err(Error::DomainMismatch("torque series lengths differ".into()));
    }
    writeln!(
        out,
        "t,tau_ref_hip,tau_ref_knee,tau_sdre_hip,tau_sdre_knee,tau_plan_hip,tau_plan_knee,err_sdre_hip,err_sdre_knee,err_plan_hip,err_plan_knee"
    )?;
    for i in 0..n {
        let (r, s, p) = (tau_ref[i], tau_sdre[i], tau_plan[i]);
        let (es, ep) = (r - s, r - p);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            t[i], r[0], r[1], s[0], s[1], p[0], p[1], es[0], es[1], ep[0], ep[1]
        )?;
    }
    Ok(())
}
