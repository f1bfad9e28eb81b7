//! Spatiotemporal gait features per walk: cadence, step time, step length,
//! step width, walking speed and margin of stability, each aggregated over
//! the observed steps.

mod table;

pub use table::{read_features_csv, write_features_csv, FeatureRow};

use serde::{Deserialize, Serialize};

use crate::dataset::{AxisRole, Foot, RawWalk};
use crate::error::{Error, Result};
use crate::gaitevents::{detect_events, EventConfig, GaitEvents};
use crate::skeleton::JointLayout;

pub const GRAVITY: f64 = 9.81;

/// Minimum event span for a walking-speed estimate.
pub const MIN_SPEED_SPAN_S: f64 = 1.0;

pub const FEATURE_NAMES: [&str; 11] = [
    "cadence_steps_per_min",
    "step_time_mean_s",
    "step_time_std_s",
    "step_length_mean_m",
    "step_length_std_m",
    "step_width_mean_m",
    "step_width_std_m",
    "walking_speed_m_per_s",
    "mos_min_m",
    "mos_std_m",
    "n_steps",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitFeatureVector {
    pub cadence_steps_per_min: f64,
    pub step_time_mean_s: f64,
    pub step_time_std_s: f64,
    pub step_length_mean_m: f64,
    pub step_length_std_m: f64,
    pub step_width_mean_m: f64,
    pub step_width_std_m: f64,
    pub walking_speed_m_per_s: f64,
    pub mos_min_m: f64,
    pub mos_std_m: f64,
    pub n_steps: usize,
}

impl GaitFeatureVector {
    /// Values in [`FEATURE_NAMES`] order.
    pub fn to_array(&self) -> [f64; 11] {
        [
            self.cadence_steps_per_min,
            self.step_time_mean_s,
            self.step_time_std_s,
            self.step_length_mean_m,
            self.step_length_std_m,
            self.step_width_mean_m,
            self.step_width_std_m,
            self.walking_speed_m_per_s,
            self.mos_min_m,
            self.mos_std_m,
            self.n_steps as f64,
        ]
    }

    pub fn from_array(v: [f64; 11]) -> Result<Self> {
        let n = v[10];
        if !(n.is_finite() && n >= 0.0 && n.fract() == 0.0) {
            return Err(Error::validation(format!("n_steps must be a whole number, got {n}")));
        }
        let out = Self {
            cadence_steps_per_min: v[0],
            step_time_mean_s: v[1],
            step_time_std_s: v[2],
            step_length_mean_m: v[3],
            step_length_std_m: v[4],
            step_width_mean_m: v[5],
            step_width_std_m: v[6],
            walking_speed_m_per_s: v[7],
            mos_min_m: v[8],
            mos_std_m: v[9],
            n_steps: n as usize,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 2 {
            return Err(Error::validation(format!("n_steps must be at least 2, got {}", self.n_steps)));
        }
        let arr = self.to_array();
        for (name, v) in FEATURE_NAMES.iter().zip(arr) {
            if !v.is_finite() {
                return Err(Error::validation(format!("{name} is not finite")));
            }
            if *name != "mos_min_m" && v < 0.0 {
                return Err(Error::validation(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Trailing heel strike followed by the contralateral leading one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub trail_foot: Foot,
    pub trail_frame: usize,
    pub lead_foot: Foot,
    pub lead_frame: usize,
}

/// Alternating-foot heel-strike pairs in frame order. Consecutive strikes of
/// the same foot (a missed contralateral strike) and coincident strikes form
/// no step.
pub fn step_sequence(events: &GaitEvents) -> Result<Vec<Step>> {
    if Foot::BOTH.iter().any(|&f| events.foot(f).heel_strikes.is_empty()) {
        return Err(Error::InsufficientGait(
            "heel strikes are needed on both feet to form steps".into(),
        ));
    }
    let hs = events.heel_strikes_sorted();
    Ok(hs
        .windows(2)
        .filter(|w| w[0].1 != w[1].1 && w[1].0 > w[0].0)
        .map(|w| Step {
            trail_foot: w[0].1,
            trail_frame: w[0].0,
            lead_foot: w[1].1,
            lead_frame: w[1].0,
        })
        .collect())
}

pub fn compute_step_time(step: &Step, fps: f64) -> f64 {
    (step.lead_frame as f64 - step.trail_frame as f64) / fps
}

struct Joints {
    sacrum: usize,
    hip: [usize; 2],
    ankle: [usize; 2],
    ap: usize,
    ml: usize,
}

fn foot_index(foot: Foot) -> usize {
    match foot {
        Foot::Left => 0,
        Foot::Right => 1,
    }
}

fn joints(walk: &RawWalk) -> Result<Joints> {
    let layout = JointLayout::builtin(&walk.layout)?;
    let m = &walk.motion;
    let role = |r: AxisRole| {
        m.component(r).ok_or_else(|| {
            Error::validation(format!("walk {}: no {} axis for gait features", walk.walk_id, r.as_str()))
        })
    };
    Ok(Joints {
        sacrum: layout.require("pelvis")?,
        hip: [layout.require("l_hip")?, layout.require("r_hip")?],
        ankle: [layout.require("l_ankle")?, layout.require("r_ankle")?],
        ap: role(AxisRole::Ap)?,
        ml: role(AxisRole::Ml)?,
    })
}

fn check_frames(walk: &RawWalk, events: &GaitEvents) -> Result<()> {
    let n = walk.frame_count();
    if let Some((_, last)) = events.span() {
        if last >= n {
            return Err(Error::validation(format!(
                "walk {}: event at frame {last} beyond {n} frames",
                walk.walk_id
            )));
        }
    }
    Ok(())
}

/// Anteroposterior and mediolateral ankle separation at the leading heel
/// strike.
pub fn compute_step_length_width(step: &Step, walk: &RawWalk) -> Result<(f64, f64)> {
    let j = joints(walk)?;
    let m = &walk.motion;
    let f = step.lead_frame;
    if f >= walk.frame_count() {
        return Err(Error::validation(format!("step frame {f} beyond walk {}", walk.walk_id)));
    }
    let lead = j.ankle[foot_index(step.lead_foot)];
    let trail = j.ankle[foot_index(step.trail_foot)];
    let length = (m.coord(f, lead, j.ap) - m.coord(f, trail, j.ap)).abs();
    let width = (m.coord(f, lead, j.ml) - m.coord(f, trail, j.ml)).abs();
    Ok((length, width))
}

/// Horizontal sacrum path through its positions at successive heel strikes,
/// divided by the time between the first and last of them. Sampling only at
/// heel strikes keeps frame-to-frame marker jitter out of the path length.
pub fn compute_walking_speed(walk: &RawWalk, events: &GaitEvents) -> Result<f64> {
    check_frames(walk, events)?;
    let j = joints(walk)?;
    let m = &walk.motion;
    let mut frames: Vec<usize> = events.heel_strikes_sorted().into_iter().map(|(f, _)| f).collect();
    frames.dedup();
    let (Some(&first), Some(&last)) = (frames.first(), frames.last()) else {
        return Err(Error::InsufficientGait(format!("walk {}: no heel strikes", walk.walk_id)));
    };
    let elapsed = (last - first) as f64 / walk.fps;
    if elapsed < MIN_SPEED_SPAN_S {
        return Err(Error::InsufficientGait(format!(
            "walk {}: heel strikes span {elapsed:.3} s, walking speed needs {MIN_SPEED_SPAN_S} s",
            walk.walk_id
        )));
    }
    let path: f64 = frames
        .windows(2)
        .map(|w| {
            let dap = m.coord(w[1], j.sacrum, j.ap) - m.coord(w[0], j.sacrum, j.ap);
            let dml = m.coord(w[1], j.sacrum, j.ml) - m.coord(w[0], j.sacrum, j.ml);
            dap.hypot(dml)
        })
        .sum();
    Ok(path / elapsed)
}

/// Steps per minute between the first and last heel strike.
pub fn compute_cadence(events: &GaitEvents, fps: f64) -> Result<f64> {
    let steps = step_sequence(events)?;
    if steps.len() < 2 {
        return Err(Error::InsufficientGait(format!("{} steps, cadence needs 2", steps.len())));
    }
    let hs = events.heel_strikes_sorted();
    let elapsed = (hs[hs.len() - 1].0 - hs[0].0) as f64 / fps;
    Ok(steps.len() as f64 / elapsed * 60.0)
}

/// Mean hip-to-ankle distance over both legs and all frames.
pub fn estimate_leg_length(walk: &RawWalk) -> Result<f64> {
    let j = joints(walk)?;
    let m = &walk.motion;
    let mut total = 0.0;
    for f in 0..walk.frame_count() {
        for side in 0..2 {
            let h = m.point(f, j.hip[side]);
            let a = m.point(f, j.ankle[side]);
            total += h.iter().zip(a).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        }
    }
    let leg = total / (2 * walk.frame_count()) as f64;
    if !(leg.is_finite() && leg > 0.0) {
        return Err(Error::validation(format!("walk {}: degenerate leg length {leg}", walk.walk_id)));
    }
    Ok(leg)
}

/// Central-difference velocity (one-sided at the ends), units per second.
fn velocity(x: &[f64], fps: f64) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| match (i, n) {
            (_, 0 | 1) => 0.0,
            (0, _) => (x[1] - x[0]) * fps,
            (i, n) if i == n - 1 => (x[i] - x[i - 1]) * fps,
            (i, _) => (x[i + 1] - x[i - 1]) * fps / 2.0,
        })
        .collect()
}

/// Per-step mediolateral margin of stability.
///
/// During each step the trailing foot is the stance foot from the leading
/// foot's toe-off until the leading heel strike. Over that single-support
/// window the sacrum stands in for the centre of mass,
/// `XCOM = COM + v / sqrt(g / leg)`, and the margin is the signed distance
/// from XCOM to the stance ankle, positive while XCOM is medial of it. The
/// step's value is the window minimum. Steps without a toe-off of the leading
/// foot inside them yield no value.
pub fn compute_mos(walk: &RawWalk, events: &GaitEvents, leg_length_m: Option<f64>) -> Result<Vec<f64>> {
    check_frames(walk, events)?;
    let j = joints(walk)?;
    let m = &walk.motion;
    let leg = match leg_length_m {
        Some(l) if l.is_finite() && l > 0.0 => l,
        Some(l) => return Err(Error::validation(format!("leg length must be positive, got {l}"))),
        None => estimate_leg_length(walk)?,
    };
    let omega0 = (GRAVITY / leg).sqrt();
    let com = m.series(j.sacrum, j.ml);
    let v = velocity(&com, walk.fps);
    let n = walk.frame_count() as f64;
    let mean_sep = (0..walk.frame_count())
        .map(|f| m.coord(f, j.ankle[0], j.ml) - m.coord(f, j.ankle[1], j.ml))
        .sum::<f64>()
        / n;
    // +1 when the left ankle sits on the positive mediolateral side
    let left_side = if mean_sep < 0.0 { -1.0 } else { 1.0 };

    let mut out = Vec::new();
    for step in step_sequence(events)? {
        let Some(&to) = events
            .foot(step.lead_foot)
            .toe_offs
            .iter()
            .find(|&&t| t > step.trail_frame && t < step.lead_frame)
        else {
            continue;
        };
        let stance = j.ankle[foot_index(step.trail_foot)];
        let lateral = match step.trail_foot {
            Foot::Left => left_side,
            Foot::Right => -left_side,
        };
        let margin = (to..=step.lead_frame)
            .map(|f| lateral * (m.coord(f, stance, j.ml) - (com[f] + v[f] / omega0)))
            .fold(f64::INFINITY, f64::min);
        out.push(margin);
    }
    if out.is_empty() {
        return Err(Error::InsufficientGait(format!(
            "walk {}: no single-support interval for margin of stability",
            walk.walk_id
        )));
    }
    Ok(out)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample (n - 1) standard deviation; zero for a single value.
pub fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let mu = mean(x);
    (x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Per-step measurements ahead of aggregation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepMeasures {
    pub step_times_s: Vec<f64>,
    pub step_lengths_m: Vec<f64>,
    pub step_widths_m: Vec<f64>,
    pub mos_m: Vec<f64>,
}

/// Mean and sample std of the step measures, minimum and std of MOS.
pub fn aggregate_features(
    steps: &StepMeasures,
    cadence_steps_per_min: f64,
    walking_speed_m_per_s: f64,
) -> Result<GaitFeatureVector> {
    let n = steps.step_times_s.len();
    if n < 2 {
        return Err(Error::InsufficientGait(format!("{n} steps, features need 2")));
    }
    if steps.step_lengths_m.len() != n || steps.step_widths_m.len() != n {
        return Err(Error::validation("per-step measures differ in length"));
    }
    if steps.mos_m.is_empty() {
        return Err(Error::InsufficientGait("no margin-of-stability values".into()));
    }
    Ok(GaitFeatureVector {
        cadence_steps_per_min,
        step_time_mean_s: mean(&steps.step_times_s),
        step_time_std_s: sample_std(&steps.step_times_s),
        step_length_mean_m: mean(&steps.step_lengths_m),
        step_length_std_m: sample_std(&steps.step_lengths_m),
        step_width_mean_m: mean(&steps.step_widths_m),
        step_width_std_m: sample_std(&steps.step_widths_m),
        walking_speed_m_per_s,
        mos_min_m: steps.mos_m.iter().copied().fold(f64::INFINITY, f64::min),
        mos_std_m: sample_std(&steps.mos_m),
        n_steps: n,
    })
}

pub fn measure_steps(walk: &RawWalk, events: &GaitEvents, leg_length_m: Option<f64>) -> Result<StepMeasures> {
    check_frames(walk, events)?;
    let mut out = StepMeasures::default();
    for step in step_sequence(events)? {
        let (length, width) = compute_step_length_width(&step, walk)?;
        out.step_times_s.push(compute_step_time(&step, walk.fps));
        out.step_lengths_m.push(length);
        out.step_widths_m.push(width);
    }
    out.mos_m = compute_mos(walk, events, leg_length_m)?;
    Ok(out)
}

/// Feature vector of a walk with known events.
pub fn compute_features(walk: &RawWalk, events: &GaitEvents, leg_length_m: Option<f64>) -> Result<GaitFeatureVector> {
    let steps = measure_steps(walk, events, leg_length_m)?;
    let cadence = compute_cadence(events, walk.fps)?;
    let speed = compute_walking_speed(walk, events)?;
    aggregate_features(&steps, cadence, speed)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub events: EventConfig,
    /// Leg length for the XCOM pendulum; estimated per walk when absent.
    pub leg_length_m: Option<f64>,
}

/// Event detection followed by feature computation.
pub fn walk_features(walk: &RawWalk, cfg: &FeatureConfig) -> Result<(GaitEvents, GaitFeatureVector)> {
    let events = detect_events(walk, &cfg.events)?;
    let features = compute_features(walk, &events, cfg.leg_length_m)?;
    Ok((events, features))
}

#[cfg(test)]
mod tests;
