use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::dataset::Foot;
use crate::error::{Error, Result};

/// Per-frame gait phase of one foot as `(cos phi, sin phi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSignal {
    pub foot: Foot,
    pub samples: Vec<(f64, f64)>,
    pub fps: f64,
}

impl PhaseSignal {
    pub fn from_phase(foot: Foot, phase: &[f64], fps: f64) -> Self {
        Self {
            foot,
            samples: phase.iter().map(|p| (p.cos(), p.sin())).collect(),
            fps,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Continuous phase recovered from the quadrature pair, assuming less than
    /// half a cycle per frame. Starts in (-pi, pi].
    pub fn unwrapped(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.samples.len());
        let mut prev_raw = 0.0;
        for (k, &(c, s)) in self.samples.iter().enumerate() {
            let raw = s.atan2(c);
            if k == 0 {
                out.push(raw);
            } else {
                let last = out[k - 1];
                out.push(last + wrap_angle(raw - prev_raw));
            }
            prev_raw = raw;
        }
        out
    }

    /// Largest deviation of `c^2 + s^2` from 1.
    pub fn max_norm_error(&self) -> f64 {
        self.samples
            .iter()
            .map(|(c, s)| (c * c + s * s - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Maps an angle onto (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Phase that is `2 pi k` at the k-th heel strike and linear in between,
/// extrapolated at the first (last) interval's rate outside the strikes.
pub fn phase_from_heel_strikes(heel_strikes: &[f64], frame: f64) -> f64 {
    let k = heel_strikes.len();
    debug_assert!(k >= 2);
    let seg = match heel_strikes.iter().position(|&h| h > frame) {
        Some(0) => 0,
        Some(i) => i - 1,
        None => k - 2,
    };
    let (a, b) = (heel_strikes[seg], heel_strikes[seg + 1]);
    TAU * (seg as f64 + (frame - a) / (b - a))
}

/// Quadrature phase for frames `0..walk_len` from sorted heel-strike positions.
pub fn encode_quadrature(
    foot: Foot,
    heel_strikes: &[f64],
    walk_len: usize,
    fps: f64,
) -> Result<PhaseSignal> {
    if heel_strikes.len() < 2 {
        return Err(Error::InsufficientGait(format!(
            "{} foot: quadrature encoding needs 2 heel strikes, got {}",
            foot.as_str(),
            heel_strikes.len()
        )));
    }
    if heel_strikes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::validation("heel strikes must be strictly increasing"));
    }
    let phase: Vec<f64> = (0..walk_len)
        .map(|f| phase_from_heel_strikes(heel_strikes, f as f64))
        .collect();
    Ok(PhaseSignal::from_phase(foot, &phase, fps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_of_cycle_is_pi() {
        let s = encode_quadrature(Foot::Left, &[0.0, 100.0], 101, 30.0).unwrap();
        let (c, si) = s.samples[50];
        assert!((c + 1.0).abs() < 1e-9 && si.abs() < 1e-9);
    }

    #[test]
    fn single_cycle_spans_two_pi() {
        let s = encode_quadrature(Foot::Right, &[10.0, 40.0], 60, 30.0).unwrap();
        let u = s.unwrapped();
        assert!((u[40] - u[10] - TAU).abs() < 1e-9);
        assert!(s.max_norm_error() < 1e-12);
    }

    #[test]
    fn extrapolates_at_boundary_rates() {
        let hs = [10.0, 30.0, 70.0];
        assert!((phase_from_heel_strikes(&hs, 0.0) + TAU * 0.5).abs() < 1e-12);
        assert!((phase_from_heel_strikes(&hs, 90.0) - TAU * 2.5).abs() < 1e-12);
        assert!((phase_from_heel_strikes(&hs, 50.0) - TAU * 1.5).abs() < 1e-12);
    }

    #[test]
    fn needs_two_heel_strikes() {
        assert!(matches!(
            encode_quadrature(Foot::Left, &[5.0], 10, 30.0),
            Err(Error::InsufficientGait(_))
        ));
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
    }
}
