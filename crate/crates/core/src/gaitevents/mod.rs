//! Heel-strike and toe-off detection.
//!
//! Kinematic extrema give per-foot heel-strike candidates. The candidates are
//! turned into a quadrature-encoded gait phase, smoothed with an EKF/RTS pass
//! over `[phase, phase rate]`, and events are read back off the smoothed phase:
//! heel strikes where it crosses a multiple of 2 pi, toe-offs at a fixed
//! fraction of the cycle later.

mod candidates;
mod quadrature;
mod smoother;

pub use candidates::{
    ap_offset_signal, detect_candidates, find_peaks, CandidateConfig, EventCandidates, FootCandidates,
};
pub use quadrature::{encode_quadrature, phase_from_heel_strikes, wrap_angle, PhaseSignal};
pub use smoother::{smooth_phase, SmoothedPhase, SmootherConfig, SmootherKind};

use std::f64::consts::TAU;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{Foot, RawWalk};
use crate::error::{Error, Result};

pub const DEFAULT_TOE_OFF_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FootEvents {
    pub heel_strikes: Vec<usize>,
    pub toe_offs: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaitEvents {
    pub left: FootEvents,
    pub right: FootEvents,
}

impl GaitEvents {
    pub fn foot(&self, foot: Foot) -> &FootEvents {
        match foot {
            Foot::Left => &self.left,
            Foot::Right => &self.right,
        }
    }

    pub fn foot_mut(&mut self, foot: Foot) -> &mut FootEvents {
        match foot {
            Foot::Left => &mut self.left,
            Foot::Right => &mut self.right,
        }
    }

    /// All heel strikes of both feet ordered by frame.
    pub fn heel_strikes_sorted(&self) -> Vec<(usize, Foot)> {
        let mut all: Vec<(usize, Foot)> = Foot::BOTH
            .iter()
            .flat_map(|&f| self.foot(f).heel_strikes.iter().map(move |&h| (h, f)))
            .collect();
        all.sort();
        all
    }

    /// First and last event frame over both feet and both event kinds.
    pub fn span(&self) -> Option<(usize, usize)> {
        let frames = Foot::BOTH.iter().flat_map(|&f| {
            let e = self.foot(f);
            e.heel_strikes.iter().chain(&e.toe_offs).copied()
        });
        frames.fold(None, |acc, x| match acc {
            None => Some((x, x)),
            Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
        })
    }

    /// Describes places where consecutive same-foot heel strikes do not
    /// enclose exactly one contralateral heel strike.
    pub fn alternation_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        for foot in Foot::BOTH {
            let own = &self.foot(foot).heel_strikes;
            let other = &self.foot(foot.other()).heel_strikes;
            for w in own.windows(2) {
                let between = other.iter().filter(|&&h| h > w[0] && h < w[1]).count();
                if between != 1 {
                    warnings.push(format!(
                        "{} heel strikes at {} and {} enclose {between} contralateral heel strikes",
                        foot.as_str(),
                        w[0],
                        w[1]
                    ));
                }
            }
        }
        warnings
    }

    /// Shifts every event by `offset` frames.
    pub fn shifted(&self, offset: isize) -> GaitEvents {
        let shift = |v: &[usize]| {
            v.iter()
                .filter_map(|&x| usize::try_from(x as isize + offset).ok())
                .collect()
        };
        let foot = |e: &FootEvents| FootEvents {
            heel_strikes: shift(&e.heel_strikes),
            toe_offs: shift(&e.toe_offs),
        };
        GaitEvents {
            left: foot(&self.left),
            right: foot(&self.right),
        }
    }
}

/// Fractional frame positions where a non-decreasing phase crosses
/// `level + 2 pi m` for every integer m in range.
fn crossings(phase: &[f64], level: f64) -> Vec<f64> {
    let (Some(&first), Some(&last)) = (phase.first(), phase.last()) else {
        return Vec::new();
    };
    let eps = 1e-9;
    let mut m = ((first - level) / TAU - eps).ceil();
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let target = level + TAU * m;
        if target > last + eps {
            break;
        }
        while k < phase.len() && phase[k] < target - eps {
            k += 1;
        }
        if k == phase.len() {
            break;
        }
        let t = if k == 0 || phase[k] <= target + eps {
            k as f64
        } else {
            let (a, b) = (phase[k - 1], phase[k]);
            (k - 1) as f64 + (target - a) / (b - a)
        };
        out.push(t);
        m += 1.0;
    }
    out
}

/// Reads events off one foot's smoothed phase signal.
pub fn extract_foot_events(signal: &PhaseSignal, toe_off_fraction: f64) -> Result<FootEvents> {
    let mut phase = signal.unwrapped();
    for k in 1..phase.len() {
        if phase[k] < phase[k - 1] {
            phase[k] = phase[k - 1];
        }
    }
    let round = |v: Vec<f64>| {
        let mut out: Vec<usize> = v.into_iter().map(|t| t.round() as usize).collect();
        out.dedup();
        out
    };
    let heel_strikes = round(crossings(&phase, 0.0));
    let toe_offs = round(crossings(&phase, TAU * toe_off_fraction));
    if heel_strikes.len() < 2 {
        return Err(Error::InsufficientGait(format!(
            "{} foot: {} heel strikes after smoothing",
            signal.foot.as_str(),
            heel_strikes.len()
        )));
    }
    Ok(reconcile(heel_strikes, toe_offs))
}

/// Orders events as HS, TO, HS, TO, ... starting from the first heel strike.
fn reconcile(heel_strikes: Vec<usize>, toe_offs: Vec<usize>) -> FootEvents {
    let mut merged: Vec<(usize, bool)> = heel_strikes
        .iter()
        .map(|&h| (h, true))
        .chain(toe_offs.iter().map(|&t| (t, false)))
        .collect();
    merged.sort();
    let mut out = FootEvents::default();
    let mut expect_heel = true;
    let mut last_frame: Option<usize> = None;
    for (frame, is_heel) in merged {
        if is_heel != expect_heel || last_frame.is_some_and(|l| frame <= l) {
            continue;
        }
        if is_heel {
            out.heel_strikes.push(frame);
        } else {
            out.toe_offs.push(frame);
        }
        expect_heel = !expect_heel;
        last_frame = Some(frame);
    }
    out
}

/// Extracts events from both feet's smoothed signals.
pub fn extract_events(left: &PhaseSignal, right: &PhaseSignal, toe_off_fraction: f64) -> Result<GaitEvents> {
    let events = GaitEvents {
        left: extract_foot_events(left, toe_off_fraction)?,
        right: extract_foot_events(right, toe_off_fraction)?,
    };
    for w in events.alternation_warnings() {
        log::warn!("{w}");
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventConfig {
    pub candidates: CandidateConfig,
    pub smoother: SmootherConfig,
    pub toe_off_fraction: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            candidates: CandidateConfig::default(),
            smoother: SmootherConfig::default(),
            toe_off_fraction: DEFAULT_TOE_OFF_FRACTION,
        }
    }
}

/// Intermediate products of [`detect_events`], kept for debugging.
#[derive(Debug, Clone)]
pub struct EventTrace {
    pub candidates: EventCandidates,
    pub raw_phase: [PhaseSignal; 2],
    pub smoothed: [SmoothedPhase; 2],
    pub events: GaitEvents,
}

/// Full chain: candidates, quadrature encoding, smoothing, extraction.
pub fn detect_events_traced(walk: &RawWalk, cfg: &EventConfig) -> Result<EventTrace> {
    if !(cfg.toe_off_fraction > 0.0 && cfg.toe_off_fraction < 1.0) {
        return Err(Error::validation("toe-off fraction must lie in (0, 1)"));
    }
    let candidates = detect_candidates(walk, &cfg.candidates)?;
    let n = walk.frame_count();
    let encode = |foot| encode_quadrature(foot, &candidates.foot(foot).heel_strikes, n, walk.fps);
    let raw_phase = [encode(Foot::Left)?, encode(Foot::Right)?];
    let smoothed = [
        smooth_phase(&raw_phase[0], &cfg.smoother)?,
        smooth_phase(&raw_phase[1], &cfg.smoother)?,
    ];
    let events = extract_events(&smoothed[0].signal, &smoothed[1].signal, cfg.toe_off_fraction)
        .map_err(|e| match e {
            Error::InsufficientGait(m) => Error::InsufficientGait(format!("walk {}: {m}", walk.walk_id)),
            other => other,
        })?;
    Ok(EventTrace {
        candidates,
        raw_phase,
        smoothed,
        events,
    })
}

pub fn detect_events(walk: &RawWalk, cfg: &EventConfig) -> Result<GaitEvents> {
    detect_events_traced(walk, cfg).map(|t| t.events)
}

/// Writes `walk_id,foot,event_type,frame` rows (header included when asked).
pub fn write_events_csv<W: Write>(
    writer: W,
    rows: &[(String, GaitEvents)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let ser = |e: csv::Error| Error::parse("events writer", e);
    w.write_record(["walk_id", "foot", "event_type", "frame"]).map_err(ser)?;
    for (walk_id, events) in rows {
        for foot in Foot::BOTH {
            let e = events.foot(foot);
            let mut all: Vec<(usize, &str)> = e
                .heel_strikes
                .iter()
                .map(|&f| (f, "heel_strike"))
                .chain(e.toe_offs.iter().map(|&f| (f, "toe_off")))
                .collect();
            all.sort();
            for (frame, kind) in all {
                w.write_record([walk_id.as_str(), foot.as_str(), kind, &frame.to_string()])
                    .map_err(ser)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("events writer", e))?;
    Ok(())
}
