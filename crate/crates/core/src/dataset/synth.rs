use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{AxisRole, Foot, MedicationState, Motion, ParticipantId, RawWalk, UpdrsScore};
use crate::error::{Error, Result};
use crate::skeleton::{h36m, JointLayout, H36M17, PD44};

/// Parameters of a synthetic straight-line walk.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitSpec {
    pub cadence_steps_per_min: f64,
    pub step_length_m: f64,
    pub step_width_m: f64,
    pub duration_s: f64,
    pub fps: f64,
    /// Std of iid Gaussian noise added to every coordinate.
    pub noise_std_m: f64,
    /// Peak mediolateral excursion of the sacrum towards the stance foot.
    pub sway_amplitude_m: f64,
    /// Fraction of each gait cycle spent in stance.
    pub stance_fraction: f64,
    pub seed: u64,
}

impl Default for GaitSpec {
    fn default() -> Self {
        Self {
            cadence_steps_per_min: 120.0,
            step_length_m: 0.5,
            step_width_m: 0.12,
            duration_s: 10.0,
            fps: 30.0,
            noise_std_m: 0.0,
            sway_amplitude_m: 0.02,
            stance_fraction: 0.6,
            seed: 0,
        }
    }
}

impl GaitSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cadence", self.cadence_steps_per_min),
            ("step length", self.step_length_m),
            ("duration", self.duration_s),
            ("fps", self.fps),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("step width", self.step_width_m),
            ("noise std", self.noise_std_m),
            ("sway amplitude", self.sway_amplitude_m),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.stance_fraction > 0.5 && self.stance_fraction < 1.0) {
            return Err(Error::validation("stance fraction must lie in (0.5, 1)"));
        }
        if (self.duration_s * self.fps).round() < 2.0 {
            return Err(Error::validation("synthetic walk needs at least 2 frames"));
        }
        Ok(())
    }

    pub fn step_time_s(&self) -> f64 {
        60.0 / self.cadence_steps_per_min
    }

    pub fn stride_time_s(&self) -> f64 {
        2.0 * self.step_time_s()
    }

    pub fn speed_m_per_s(&self) -> f64 {
        self.cadence_steps_per_min / 60.0 * self.step_length_m
    }

    /// Time of the first left heel strike. Chosen off the sequence start so
    /// that every event has frames on both sides.
    pub fn first_left_heel_strike_s(&self) -> f64 {
        0.25 * self.stride_time_s()
    }

    /// Amplitude of the ankle-minus-sacrum anteroposterior oscillation.
    pub fn ap_amplitude_m(&self) -> f64 {
        self.step_length_m / (1.0 - (PI * 0.5 / self.stance_fraction).cos())
    }

    fn first_heel_strike_s(&self, foot: Foot) -> f64 {
        match foot {
            Foot::Left => self.first_left_heel_strike_s(),
            Foot::Right => self.first_left_heel_strike_s() + self.step_time_s(),
        }
    }

    /// Gait-cycle fraction of `foot` at time `t`, in [0, 1).
    pub fn cycle_fraction(&self, foot: Foot, t: f64) -> f64 {
        ((t - self.first_heel_strike_s(foot)) / self.stride_time_s()).rem_euclid(1.0)
    }

    /// Ankle minus sacrum along the direction of travel.
    pub fn ap_offset(&self, foot: Foot, t: f64) -> f64 {
        let a = self.ap_amplitude_m();
        let s = self.stance_fraction;
        let theta = self.cycle_fraction(foot, t);
        if theta < s {
            a * (PI * theta / s).cos()
        } else {
            -a * (PI * (theta - s) / (1.0 - s)).cos()
        }
    }

    // Left single support spans right toe-off to right heel strike.
    fn mid_left_single_support_s(&self) -> f64 {
        self.first_left_heel_strike_s() + 0.5 * self.stance_fraction * self.stride_time_s()
    }

    /// Sacrum mediolateral position (positive towards the left foot).
    pub fn sacrum_ml(&self, t: f64) -> f64 {
        let mid_left_support = self.mid_left_single_support_s();
        self.sway_amplitude_m * (2.0 * PI * (t - mid_left_support) / self.stride_time_s()).cos()
    }

    /// Analytic time derivative of [`GaitSpec::sacrum_ml`].
    pub fn sacrum_ml_velocity(&self, t: f64) -> f64 {
        let mid_left_support = self.mid_left_single_support_s();
        let w = 2.0 * PI / self.stride_time_s();
        -self.sway_amplitude_m * w * (w * (t - mid_left_support)).sin()
    }

    pub fn ankle_ml(&self, foot: Foot) -> f64 {
        match foot {
            Foot::Left => 0.5 * self.step_width_m,
            Foot::Right => -0.5 * self.step_width_m,
        }
    }
}

/// Generator ground truth, in seconds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruthEvents {
    pub left_heel_strikes_s: Vec<f64>,
    pub right_heel_strikes_s: Vec<f64>,
    pub left_toe_offs_s: Vec<f64>,
    pub right_toe_offs_s: Vec<f64>,
}

impl GroundTruthEvents {
    pub fn heel_strikes_s(&self, foot: Foot) -> &[f64] {
        match foot {
            Foot::Left => &self.left_heel_strikes_s,
            Foot::Right => &self.right_heel_strikes_s,
        }
    }

    pub fn toe_offs_s(&self, foot: Foot) -> &[f64] {
        match foot {
            Foot::Left => &self.left_toe_offs_s,
            Foot::Right => &self.right_toe_offs_s,
        }
    }

    pub fn heel_strike_count(&self) -> usize {
        self.left_heel_strikes_s.len() + self.right_heel_strikes_s.len()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticGait {
    pub walk: RawWalk,
    pub truth: GroundTruthEvents,
    pub spec: GaitSpec,
}

// Heights (m) of the standing body at the origin.
const PELVIS_HEIGHT: f64 = 0.95;
const ANKLE_HEIGHT: f64 = 0.08;
const HIP_HALF_WIDTH: f64 = 0.1;
const SHOULDER_HALF_WIDTH: f64 = 0.18;
const SWING_LIFT: f64 = 0.08;

/// Generates a 17-joint walk along +x (ap = x, ml = y, up = z) with known
/// heel-strike and toe-off times.
pub fn synthesize_gait(spec: &GaitSpec) -> Result<SyntheticGait> {
    spec.validate()?;
    let n = (spec.duration_s * spec.fps).round() as usize;
    let layout = JointLayout::builtin(H36M17)?;
    let joints = layout.joint_count();
    let speed = spec.speed_m_per_s();
    let s = spec.stance_fraction;

    let mut data = Vec::with_capacity(n * joints * 3);
    for f in 0..n {
        let t = f as f64 / spec.fps;
        let sacrum_ap = speed * t;
        let sacrum_ml = spec.sacrum_ml(t);
        let bob = 0.01 * (4.0 * PI * t / spec.stride_time_s()).cos();
        let pelvis = [sacrum_ap, sacrum_ml, PELVIS_HEIGHT + bob];

        let ankle = |foot: Foot| {
            let theta = spec.cycle_fraction(foot, t);
            let lift = if theta >= s {
                SWING_LIFT * (PI * (theta - s) / (1.0 - s)).sin()
            } else {
                0.0
            };
            [sacrum_ap + spec.ap_offset(foot, t), spec.ankle_ml(foot), ANKLE_HEIGHT + lift]
        };
        let side = |foot: Foot| if foot == Foot::Left { 1.0 } else { -1.0 };
        let hip = |foot: Foot| [pelvis[0], pelvis[1] + side(foot) * HIP_HALF_WIDTH, pelvis[2]];
        let knee = |foot: Foot| {
            let h = hip(foot);
            let a = ankle(foot);
            [0.5 * (h[0] + a[0]) + 0.03, 0.5 * (h[1] + a[1]), 0.5 * (h[2] + a[2])]
        };
        let up = |dz: f64| [pelvis[0], pelvis[1], pelvis[2] + dz];
        let thorax = up(0.5);
        let shoulder = |foot: Foot| [thorax[0], thorax[1] + side(foot) * SHOULDER_HALF_WIDTH, thorax[2]];
        // arms swing against the ipsilateral leg
        let arm_swing = |foot: Foot| -0.3 * spec.ap_offset(foot, t);
        let elbow = |foot: Foot| {
            let sh = shoulder(foot);
            [sh[0] + 0.5 * arm_swing(foot), sh[1], sh[2] - 0.28]
        };
        let wrist = |foot: Foot| {
            let sh = shoulder(foot);
            [sh[0] + arm_swing(foot), sh[1], sh[2] - 0.52]
        };

        let mut frame = vec![[0.0; 3]; joints];
        frame[h36m::PELVIS] = pelvis;
        frame[h36m::R_HIP] = hip(Foot::Right);
        frame[h36m::R_KNEE] = knee(Foot::Right);
        frame[h36m::R_ANKLE] = ankle(Foot::Right);
        frame[h36m::L_HIP] = hip(Foot::Left);
        frame[h36m::L_KNEE] = knee(Foot::Left);
        frame[h36m::L_ANKLE] = ankle(Foot::Left);
        frame[h36m::SPINE] = up(0.25);
        frame[h36m::THORAX] = thorax;
        frame[h36m::NECK] = up(0.6);
        frame[h36m::HEAD] = up(0.75);
        frame[h36m::L_SHOULDER] = shoulder(Foot::Left);
        frame[h36m::L_ELBOW] = elbow(Foot::Left);
        frame[h36m::L_WRIST] = wrist(Foot::Left);
        frame[h36m::R_SHOULDER] = shoulder(Foot::Right);
        frame[h36m::R_ELBOW] = elbow(Foot::Right);
        frame[h36m::R_WRIST] = wrist(Foot::Right);
        for p in frame {
            data.extend_from_slice(&p);
        }
    }

    if spec.noise_std_m > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_std_m)
            .map_err(|e| Error::validation(format!("noise distribution: {e}")))?;
        for v in &mut data {
            *v += normal.sample(&mut rng);
        }
    }

    let motion = Motion::new(joints, vec![AxisRole::Ap, AxisRole::Ml, AxisRole::Up], data)?;
    let last_t = (n - 1) as f64 / spec.fps;
    let events_from = |first: f64| -> Vec<f64> {
        (0..)
            .map(|k| first + k as f64 * spec.stride_time_s())
            .take_while(|&t| t <= last_t)
            .collect()
    };
    let toe_off_lag = spec.stance_fraction * spec.stride_time_s();
    let truth = GroundTruthEvents {
        left_heel_strikes_s: events_from(spec.first_heel_strike_s(Foot::Left)),
        right_heel_strikes_s: events_from(spec.first_heel_strike_s(Foot::Right)),
        left_toe_offs_s: events_from(spec.first_heel_strike_s(Foot::Left) + toe_off_lag),
        right_toe_offs_s: events_from(spec.first_heel_strike_s(Foot::Right) + toe_off_lag),
    };

    let walk = RawWalk {
        walk_id: "synthetic".to_string(),
        participant: ParticipantId::new("synthetic")?,
        medication: MedicationState::On,
        label: UpdrsScore::new(0)?,
        fps: spec.fps,
        layout: H36M17.to_string(),
        motion,
    };
    Ok(SyntheticGait {
        walk,
        truth,
        spec: spec.clone(),
    })
}

/// Expands a 17-joint walk into the 44-marker layout by placing markers at
/// fixed offsets (ap, ml, up) around the joints they describe.
pub fn expand_to_markers(walk: &RawWalk) -> Result<RawWalk> {
    let src = JointLayout::builtin(&walk.layout)?;
    if src.id() != H36M17 {
        return Err(Error::validation("marker expansion needs a 17-joint walk"));
    }
    let dst = JointLayout::builtin(PD44)?;
    let m = &walk.motion;
    let comp = |role| {
        m.component(role)
            .ok_or_else(|| Error::validation("marker expansion needs 3D coordinates"))
    };
    let (ap, ml, upc) = (comp(AxisRole::Ap)?, comp(AxisRole::Ml)?, comp(AxisRole::Up)?);

    let mut data = Vec::with_capacity(m.frame_count() * dst.joint_count() * 3);
    for f in 0..m.frame_count() {
        let j = |idx: usize| {
            let p = m.point(f, idx);
            [p[ap], p[ml], p[upc]]
        };
        let mid = |a: [f64; 3], b: [f64; 3]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])];
        let off = |p: [f64; 3], d: [f64; 3]| [p[0] + d[0], p[1] + d[1], p[2] + d[2]];
        let mut roles = Vec::with_capacity(dst.joint_count());
        for name in dst.joint_names() {
            let (side, s) = if name == "RBAK" {
                (0.0, name.as_str())
            } else if let Some(stem) = name.strip_prefix('L') {
                (1.0, stem)
            } else if let Some(stem) = name.strip_prefix('R') {
                (-1.0, stem)
            } else {
                (0.0, name.as_str())
            };
            let pick = |l: usize, r: usize| if side > 0.0 { l } else { r };
            let p = match (s, name.as_str()) {
                (_, "C7") => off(j(h36m::THORAX), [-0.08, 0.0, 0.05]),
                (_, "T10") => off(j(h36m::SPINE), [-0.1, 0.0, 0.0]),
                (_, "CLAV") => off(j(h36m::THORAX), [0.08, 0.0, -0.05]),
                (_, "STRN") => off(j(h36m::SPINE), [0.1, 0.0, 0.0]),
                (_, "RBAK") => off(j(h36m::THORAX), [-0.09, -0.08, -0.1]),
                (_, "SACR") => off(j(h36m::PELVIS), [-0.1, 0.0, 0.05]),
                ("FHD", _) => off(j(h36m::HEAD), [0.08, side * 0.06, 0.0]),
                ("BHD", _) => off(j(h36m::HEAD), [-0.08, side * 0.06, 0.0]),
                ("SHO", _) => j(pick(h36m::L_SHOULDER, h36m::R_SHOULDER)),
                ("UPA", _) => off(
                    mid(j(pick(h36m::L_SHOULDER, h36m::R_SHOULDER)), j(pick(h36m::L_ELBOW, h36m::R_ELBOW))),
                    [0.0, side * 0.04, 0.0],
                ),
                ("ELB", _) => j(pick(h36m::L_ELBOW, h36m::R_ELBOW)),
                ("FRM", _) => off(
                    mid(j(pick(h36m::L_ELBOW, h36m::R_ELBOW)), j(pick(h36m::L_WRIST, h36m::R_WRIST))),
                    [0.0, side * 0.04, 0.0],
                ),
                ("WRA", _) => off(j(pick(h36m::L_WRIST, h36m::R_WRIST)), [0.02, 0.0, 0.0]),
                ("WRB", _) => off(j(pick(h36m::L_WRIST, h36m::R_WRIST)), [-0.02, 0.0, 0.0]),
                ("FIN", _) => off(j(pick(h36m::L_WRIST, h36m::R_WRIST)), [0.0, 0.0, -0.08]),
                ("ASI", _) => off(j(pick(h36m::L_HIP, h36m::R_HIP)), [0.1, side * 0.03, 0.05]),
                ("PSI", _) => off(j(pick(h36m::L_HIP, h36m::R_HIP)), [-0.1, -side * 0.03, 0.05]),
                ("THI", _) => off(
                    mid(j(pick(h36m::L_HIP, h36m::R_HIP)), j(pick(h36m::L_KNEE, h36m::R_KNEE))),
                    [0.0, side * 0.07, 0.0],
                ),
                ("KNE", _) => off(j(pick(h36m::L_KNEE, h36m::R_KNEE)), [0.0, side * 0.05, 0.0]),
                ("KNM", _) => off(j(pick(h36m::L_KNEE, h36m::R_KNEE)), [0.0, -side * 0.05, 0.0]),
                ("TIB", _) => off(
                    mid(j(pick(h36m::L_KNEE, h36m::R_KNEE)), j(pick(h36m::L_ANKLE, h36m::R_ANKLE))),
                    [0.0, side * 0.05, 0.0],
                ),
                ("ANK", _) => off(j(pick(h36m::L_ANKLE, h36m::R_ANKLE)), [0.0, side * 0.035, 0.0]),
                ("MED", _) => off(j(pick(h36m::L_ANKLE, h36m::R_ANKLE)), [0.0, -side * 0.035, 0.0]),
                ("HEE", _) => off(j(pick(h36m::L_ANKLE, h36m::R_ANKLE)), [-0.06, 0.0, -0.03]),
                ("TOE", _) => off(j(pick(h36m::L_ANKLE, h36m::R_ANKLE)), [0.14, 0.0, -0.04]),
                _ => return Err(Error::validation(format!("no marker rule for {name}"))),
            };
            roles.push(p);
        }
        for p in roles {
            let mut xyz = [0.0; 3];
            xyz[ap] = p[0];
            xyz[ml] = p[1];
            xyz[upc] = p[2];
            data.extend_from_slice(&xyz);
        }
    }
    let motion = Motion::new(dst.joint_count(), m.axes().to_vec(), data)?;
    Ok(RawWalk {
        layout: PD44.to_string(),
        motion,
        ..walk.clone()
    })
}
