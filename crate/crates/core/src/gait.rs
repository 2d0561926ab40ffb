//! Desired joint-angle profiles: CSV ingestion, differentiation, resampling,
//! characteristic-node selection and synthetic generators.
//!
//! Profile files are plain CSV with `#` comments and one of two headers:
//!
//! ```text
//! t,hip,knee                       # one leg
//! t,hip_l,knee_l,hip_r,knee_r      # both legs
//! ```
//!
//! Angles are in radians.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::sdre::DesiredSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaitProfile {
    pub label: String,
    pub side: Option<Side>,
    pub t: Vec<f64>,
    pub theta: Vec<Vector2<f64>>,
    pub theta_dot: Vec<Vector2<f64>>,
    pub theta_ddot: Vec<Vector2<f64>>,
}

/// Minimum number of samples the three-point difference scheme needs.
pub const MIN_SAMPLES: usize = 3;

impl GaitProfile {
    /// Validates the samples and derives velocities and accelerations.
    pub fn new(label: impl Into<String>, t: Vec<f64>, theta: Vec<Vector2<f64>>) -> Result<Self> {
        Self::with_smoothing(label, t, theta, 1)
    }

    /// Like [`GaitProfile::new`], with a centered moving average of `window`
    /// samples applied to the angles before differentiation.
    pub fn with_smoothing(
        label: impl Into<String>,
        t: Vec<f64>,
        theta: Vec<Vector2<f64>>,
        window: usize,
    ) -> Result<Self> {
        validate_samples(&t, &theta)?;
        let smoothed = moving_average(&theta, window);
        let theta_dot = differentiate(&t, &smoothed)?;
        let theta_ddot = differentiate(&t, &theta_dot)?;
        Ok(Self {
            label: label.into(),
            side: None,
            t,
            theta,
            theta_dot,
            theta_ddot,
        })
    }

    /// Samples `f` on the uniform grid `0, dt, 2 dt, ...` up to `duration`.
    pub fn from_fn(
        label: impl Into<String>,
        dt: f64,
        duration: f64,
        f: impl Fn(f64) -> Vector2<f64>,
    ) -> Result<Self> {
        let t = uniform_grid(0.0, duration, dt)?;
        let theta = t.iter().map(|&s| f(s)).collect();
        Self::new(label, t, theta)
    }

    pub fn with_side(mut self, side: Side) -> Self {
        self.side = Some(side);
        self
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.t[0]
    }

    pub fn end(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    pub fn duration(&self) -> f64 {
        self.end() - self.start()
    }

    pub fn desired(&self, i: usize) -> DesiredSample {
        DesiredSample {
            theta: self.theta[i],
            omega: self.theta_dot[i],
            alpha: self.theta_ddot[i],
        }
    }

    /// Whether consecutive samples are spaced by `dt`.
    pub fn is_uniform(&self, dt: f64) -> bool {
        self.t
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.max(1.0))
    }

    /// Linear interpolation of the angles onto a uniform grid of spacing
    /// `dt`, with derivatives recomputed on the new grid.
    pub fn resample(&self, dt: f64) -> Result<Self> {
        let grid = uniform_grid(self.start(), self.end(), dt)?;
        let theta = grid.iter().map(|&s| self.angle_at(s)).collect();
        let mut out = Self::new(self.label.clone(), grid, theta)?;
        out.side = self.side;
        Ok(out)
    }

    /// Piecewise-linear angle at time `s`, clamped to the profile ends.
    pub fn angle_at(&self, s: f64) -> Vector2<f64> {
        interpolate(&self.t, &self.theta, s)
    }

    /// Feedforward torques of the profile under the given leg model.
    pub fn feedforward_torques(&self, p: &crate::dynamics::LegParams) -> Vec<Vector2<f64>> {
        (0..self.len()).map(|i| self.desired(i).feedforward(p)).collect()
    }
}

fn validate_samples(t: &[f64], theta: &[Vector2<f64>]) -> Result<()> {
    if t.len() != theta.len() {
        return Err(validation(format!(
            "time and angle columns differ in length ({} vs {})",
            t.len(),
            theta.len()
        )));
    }
    if t.len() < 2 {
        return Err(validation("profile must span a positive duration (need at least two samples)"));
    }
    if let Some(i) = t.iter().position(|v| !v.is_finite()) {
        return Err(validation(format!("non-finite time at sample {i}")));
    }
    if let Some(i) = t.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(validation(format!(
            "time must be strictly increasing (sample {} at t = {} follows t = {})",
            i + 1,
            t[i + 1],
            t[i]
        )));
    }
    for (i, th) in theta.iter().enumerate() {
        if !th.iter().all(|v| v.is_finite()) {
            return Err(validation(format!("non-finite angle at sample {i}")));
        }
        if th.iter().any(|v| v.abs() >= PI) {
            return Err(validation(format!(
                "angle magnitude at sample {i} is not below pi; are the units radians?"
            )));
        }
    }
    if t.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SAMPLES,
            got: t.len(),
        });
    }
    Ok(())
}

/// Second-order finite differences on a possibly non-uniform grid: centered
/// three-point stencils inside, one-sided three-point stencils at the ends.
/// Exact for quadratics.
pub fn differentiate(t: &[f64], f: &[Vector2<f64>]) -> Result<Vec<Vector2<f64>>> {
    let n = t.len();
    if n < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SAMPLES,
            got: n,
        });
    }
    if f.len() != n {
        return Err(validation("sample count mismatch in differentiate"));
    }
    // Stencils written on first differences so constants differentiate to
    // exactly zero.
    let slope = |i: usize| (f[i + 1] - f[i]) / (t[i + 1] - t[i]);
    let mut out = Vec::with_capacity(n);
    {
        let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
        let (s1, s2) = (slope(0), slope(1));
        out.push(s1 - (s2 - s1) * (h1 / (h1 + h2)));
    }
    for i in 1..n - 1 {
        let (h1, h2) = (t[i] - t[i - 1], t[i + 1] - t[i]);
        out.push((slope(i) * h1 + slope(i - 1) * h2) / (h1 + h2));
    }
    {
        let (h1, h2) = (t[n - 2] - t[n - 3], t[n - 1] - t[n - 2]);
        let (s1, s2) = (slope(n - 3), slope(n - 2));
        out.push(s2 + (s2 - s1) * (h2 / (h1 + h2)));
    }
    Ok(out)
}

/// Centered moving average; the window shrinks symmetrically near the ends,
/// so straight lines pass through unchanged.
pub fn moving_average(f: &[Vector2<f64>], window: usize) -> Vec<Vector2<f64>> {
    if window <= 1 {
        return f.to_vec();
    }
    let half = window / 2;
    let n = f.len();
    (0..n)
        .map(|i| {
            let r = half.min(i).min(n - 1 - i);
            let (lo, hi) = (i - r, i + r);
            let sum: Vector2<f64> = f[lo..=hi].iter().sum();
            sum / (hi - lo + 1) as f64
        })
        .collect()
}

pub fn uniform_grid(start: f64, end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(validation(format!("sample spacing must be > 0, got {dt}")));
    }
    if !(end > start) {
        return Err(validation("grid must span a positive duration"));
    }
    let steps = ((end - start) / dt + 1e-9).floor() as usize;
    Ok((0..=steps).map(|k| start + k as f64 * dt).collect())
}

fn interpolate(t: &[f64], f: &[Vector2<f64>], s: f64) -> Vector2<f64> {
    if s <= t[0] {
        return f[0];
    }
    let n = t.len();
    if s >= t[n - 1] {
        return f[n - 1];
    }
    let hi = t.partition_point(|&v| v <= s);
    let lo = hi - 1;
    if t[lo] == s {
        return f[lo];
    }
    let w = (s - t[lo]) / (t[hi] - t[lo]);
    f[lo] * (1.0 - w) + f[hi] * w
}

// ---------------------------------------------------------------------------
// CSV

/// Reads every leg in a profile file. A single-leg file yields one profile
/// with no side, a two-leg file yields the left then the right leg.
pub fn read_profiles<R: Read>(input: R, label: &str) -> Result<Vec<GaitProfile>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(input);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_error(&e))?
        .iter()
        .map(|s| s.to_ascii_lowercase())
        .collect();
    let two_legs = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["t", "hip", "knee"] => false,
        ["t", "hip_l", "knee_l", "hip_r", "knee_r"] => true,
        [] | [""] => return Err(Error::Parse { line: 1, message: "missing header".into() }),
        other => {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "unrecognised header {other:?}; expected `t,hip,knee` or `t,hip_l,knee_l,hip_r,knee_r`"
                ),
            })
        }
    };

    let mut t = Vec::new();
    let mut left = Vec::new();
    let mut right = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_error(&e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let vals = record
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        t.push(vals[0]);
        left.push(Vector2::new(vals[1], vals[2]));
        if two_legs {
            right.push(Vector2::new(vals[3], vals[4]));
        }
    }

    if two_legs {
        Ok(vec![
            GaitProfile::new(label, t.clone(), left)?.with_side(Side::Left),
            GaitProfile::new(label, t, right)?.with_side(Side::Right),
        ])
    } else {
        Ok(vec![GaitProfile::new(label, t, left)?])
    }
}

fn parse_error(e: &csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// All legs stored in the file at `path`, labelled by the file stem.
pub fn load_profiles(path: impl AsRef<Path>) -> Result<Vec<GaitProfile>> {
    let path = path.as_ref();
    let label = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("profile")
        .to_string();
    let file = std::fs::File::open(path)?;
    read_profiles(std::io::BufReader::new(file), &label)
}

/// One leg from the file at `path`. `side` is ignored for single-leg files.
pub fn load_profile(path: impl AsRef<Path>, side: Option<Side>) -> Result<GaitProfile> {
    let mut all = load_profiles(path)?;
    match side {
        Some(s) if all.len() > 1 => all
            .into_iter()
            .find(|p| p.side == Some(s))
            .ok_or_else(|| validation(format!("no {s} leg in profile"))),
        _ => Ok(all.swap_remove(0)),
    }
}

/// Writes one leg (`t,hip,knee`) or a left/right pair
/// (`t,hip_l,knee_l,hip_r,knee_r`) sharing the same time base.
pub fn write_profiles<W: Write>(profiles: &[GaitProfile], mut out: W) -> Result<()> {
    match profiles {
        [one] => {
            writeln!(out, "t,hip,knee")?;
            for (t, th) in one.t.iter().zip(&one.theta) {
                writeln!(out, "{t},{},{}", th[0], th[1])?;
            }
        }
        [l, r] => {
            if l.t != r.t {
                return Err(validation("left and right profiles must share a time base"));
            }
            writeln!(out, "t,hip_l,knee_l,hip_r,knee_r")?;
            for i in 0..l.len() {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    l.t[i], l.theta[i][0], l.theta[i][1], r.theta[i][0], r.theta[i][1]
                )?;
            }
        }
        _ => return Err(validation("can only write one or two legs")),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Node selection

/// What "curvature" means when locating characteristic times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureMode {
    /// Magnitude of the angular acceleration, `|theta''|`.
    #[default]
    Accel,
    /// Curvature of the `(t, theta)` graph, `|theta''| / (1 + theta'^2)^(3/2)`.
    Graph,
}

impl FromStr for CurvatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accel" => Ok(Self::Accel),
            "graph" => Ok(Self::Graph),
            other => Err(validation(format!("unknown curvature mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeOptions {
    /// Minimum spacing between nodes (s).
    pub min_separation: f64,
    /// Minimum peak prominence. `None` means 10% of the largest signal value.
    pub prominence: Option<f64>,
    pub mode: CurvatureMode,
}

impl Default for NodeOptions {
    fn default() -> Self {
        Self {
            min_separation: 0.05,
            prominence: None,
            mode: CurvatureMode::Accel,
        }
    }
}

/// Sorted characteristic times; the first is the profile start and the last
/// its end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSequence {
    times: Vec<f64>,
}

impl NodeSequence {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(validation("a node sequence needs at least the two endpoints"));
        }
        if times.iter().any(|v| !v.is_finite()) || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(validation("node times must be finite and strictly increasing"));
        }
        Ok(Self { times })
    }

    /// Evenly spaced nodes, `segments + 1` of them.
    pub fn uniform(start: f64, end: f64, segments: usize) -> Result<Self> {
        if segments == 0 {
            return Err(validation("need at least one segment"));
        }
        let h = (end - start) / segments as f64;
        let mut times: Vec<f64> = (0..segments).map(|k| start + k as f64 * h).collect();
        times.push(end);
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }
}

/// Local maxima of the per-joint curvature signal, merged across both
/// joints, filtered by prominence and thinned to `min_separation` (larger
/// prominence wins). The profile endpoints are always included.
/// Curvature below this is treated as zero when picking nodes, so rounding
/// noise on straight-line motion does not produce peaks.
pub const CURVATURE_FLOOR: f64 = 1e-6;

pub fn select_nodes(profile: &GaitProfile, opts: &NodeOptions) -> Result<NodeSequence> {
    if !(opts.min_separation >= 0.0) {
        return Err(validation("min_separation must be >= 0"));
    }
    let (start, end) = (profile.start(), profile.end());
    let signals: Vec<Vec<f64>> = (0..2)
        .map(|j| {
            profile
                .theta_ddot
                .iter()
                .zip(&profile.theta_dot)
                .map(|(a, v)| match opts.mode {
                    CurvatureMode::Accel => a[j].abs(),
                    CurvatureMode::Graph => a[j].abs() / (1.0 + v[j] * v[j]).powf(1.5),
                })
                .collect()
        })
        .collect();

    let mut candidates: Vec<(f64, usize)> = Vec::new();
    for s in &signals {
        let peak = s.iter().copied().fold(0.0, f64::max);
        let threshold = opts.prominence.unwrap_or(0.1 * peak).max(CURVATURE_FLOOR);
        for i in local_maxima(s) {
            let prom = prominence(s, i);
            if prom > 0.0 && prom >= threshold {
                candidates.push((prom, i));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut chosen: Vec<f64> = Vec::new();
    for (_, i) in candidates {
        let t = profile.t[i];
        let clear_of_ends = t - start >= opts.min_separation && end - t >= opts.min_separation;
        let clear_of_others = chosen.iter().all(|&c| (c - t).abs() >= opts.min_separation);
        if clear_of_ends && clear_of_others && t > start && t < end {
            chosen.push(t);
        }
    }
    chosen.push(start);
    chosen.push(end);
    chosen.sort_by(f64::total_cmp);
    chosen.dedup();
    NodeSequence::new(chosen)
}

fn local_maxima(s: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = s.len();
    let mut i = 1;
    while i + 1 < n {
        if s[i] > s[i - 1] {
            // Walk across a flat top, take its first sample.
            let mut j = i;
            while j + 1 < n && s[j + 1] == s[i] {
                j += 1;
            }
            if j + 1 < n && s[j + 1] < s[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Height of the peak at `i` above the higher of the two minima separating
/// it from taller terrain (or the signal ends).
fn prominence(s: &[f64], i: usize) -> f64 {
    let h = s[i];
    let mut left_min = h;
    for &v in s[..i].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &s[i + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

// ---------------------------------------------------------------------------
// Synthetic profiles

/// Gait cycle period used by the synthetic walk (s).
pub const WALK_PERIOD: f64 = 1.2;
/// Duration of the synthetic squat (s).
pub const SQUAT_DURATION: f64 = 2.0;

/// One walking cycle: `hip = 0.3 sin(2 pi t / 1.2)`,
/// `knee = 0.5 sin(2 pi t / 1.2 + 0.4)`, `t` in `[0, 1.2]`.
pub fn synthetic_walk(dt: f64) -> Result<GaitProfile> {
    walk_with_phase(dt, 0.0)
}

fn walk_with_phase(dt: f64, phase: f64) -> Result<GaitProfile> {
    let w = 2.0 * PI / WALK_PERIOD;
    GaitProfile::from_fn("walk", dt, WALK_PERIOD, move |t| {
        Vector2::new(
            0.3 * (w * t + phase).sin(),
            0.5 * (w * t + phase + 0.4).sin(),
        )
    })
}

/// Left and right legs of the synthetic walk, half a cycle apart.
pub fn synthetic_walk_pair(dt: f64) -> Result<Vec<GaitProfile>> {
    Ok(vec![
        walk_with_phase(dt, 0.0)?.with_side(Side::Left),
        walk_with_phase(dt, PI)?.with_side(Side::Right),
    ])
}

/// Down-and-up squat: with `s(t) = (1 - cos(2 pi t / 2)) / 2`,
/// `hip = 0.7 s(t)`, `knee = -0.5 s(t)`, `t` in `[0, 2]`.
pub fn synthetic_squat(dt: f64) -> Result<GaitProfile> {
    GaitProfile::from_fn("squat", dt, SQUAT_DURATION, |t| {
        let s = 0.5 * (1.0 - (2.0 * PI * t / SQUAT_DURATION).cos());
        Vector2::new(0.7 * s, -0.5 * s)
    })
}

/// Both legs of the squat (the motion is symmetric).
pub fn synthetic_squat_pair(dt: f64) -> Result<Vec<GaitProfile>> {
    let one = synthetic_squat(dt)?;
    Ok(vec![one.clone().with_side(Side::Left), one.with_side(Side::Right)])
}
