use serde::{Deserialize, Serialize};

use crate::dataset::{AxisRole, Foot, RawWalk};
use crate::error::{Error, Result};
use crate::skeleton::JointLayout;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateConfig {
    /// Minimum spacing between two extrema of the same kind.
    pub min_separation_s: f64,
    /// Minimum prominence of an extremum of the ankle-sacrum offset.
    pub min_prominence_m: f64,
    /// Width of the centred moving average applied before peak picking.
    pub smoothing_s: f64,
    /// Width of the least-squares parabola fitted around each picked
    /// extremum for its sub-frame position.
    pub refine_window_s: f64,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        Self {
            min_separation_s: 0.4,
            min_prominence_m: 0.05,
            smoothing_s: 0.1,
            refine_window_s: 0.5,
        }
    }
}

impl CandidateConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.min_separation_s) && ok(self.min_prominence_m) && ok(self.smoothing_s) && ok(self.refine_window_s)) {
            return Err(Error::validation("candidate settings must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Sub-frame event candidates for one foot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FootCandidates {
    pub heel_strikes: Vec<f64>,
    pub toe_offs: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventCandidates {
    pub left: FootCandidates,
    pub right: FootCandidates,
}

impl EventCandidates {
    pub fn foot(&self, foot: Foot) -> &FootCandidates {
        match foot {
            Foot::Left => &self.left,
            Foot::Right => &self.right,
        }
    }
}

/// Ankle minus sacrum along the direction of progression, per frame.
pub fn ap_offset_signal(walk: &RawWalk, foot: Foot) -> Result<Vec<f64>> {
    let layout = JointLayout::builtin(&walk.layout)?;
    let sacrum = layout.require("pelvis")?;
    let ankle = layout.require(match foot {
        Foot::Left => "l_ankle",
        Foot::Right => "r_ankle",
    })?;
    let m = &walk.motion;
    if m.dims() != 3 {
        return Err(Error::validation(format!(
            "walk {}: event detection needs 3D coordinates",
            walk.walk_id
        )));
    }
    let ap = m
        .component(AxisRole::Ap)
        .ok_or_else(|| Error::validation("walk has no anteroposterior axis"))?;
    let n = m.frame_count();
    let net = m.coord(n - 1, sacrum, ap) - m.coord(0, sacrum, ap);
    let direction = if net < 0.0 { -1.0 } else { 1.0 };
    Ok((0..n)
        .map(|f| direction * (m.coord(f, ankle, ap) - m.coord(f, sacrum, ap)))
        .collect())
}

fn moving_average(x: &[f64], half: usize) -> Vec<f64> {
    if half == 0 {
        return x.to_vec();
    }
    let n = x.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            x[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Height of a peak above the higher of its two bases, where each base is
/// the lowest point between the peak and the nearest higher sample (or the
/// signal end) on that side.
fn prominence(x: &[f64], i: usize) -> f64 {
    let mut left_min = x[i];
    for &v in x[..i].iter().rev() {
        if v > x[i] {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = x[i];
    for &v in &x[i + 1..] {
        if v > x[i] {
            break;
        }
        right_min = right_min.min(v);
    }
    x[i] - left_min.max(right_min)
}

/// Residual of the best fit of two half-parabolas that share a vertex at
/// `x0`, with independent curvature on either side.
fn split_parabola_fit(x: &[f64], lo: usize, hi: usize, x0: f64) -> Option<f64> {
    let mut m = nalgebra::Matrix3::<f64>::zeros();
    let mut v = nalgebra::Vector3::<f64>::zeros();
    for (i, &y) in x.iter().enumerate().take(hi + 1).skip(lo) {
        let d = i as f64 - x0;
        let basis = if d < 0.0 {
            nalgebra::Vector3::new(1.0, d * d, 0.0)
        } else {
            nalgebra::Vector3::new(1.0, 0.0, d * d)
        };
        m += basis * basis.transpose();
        v += basis * y;
    }
    let coef = m.lu().solve(&v)?;
    let mut sse = 0.0;
    for (i, &y) in x.iter().enumerate().take(hi + 1).skip(lo) {
        let d = i as f64 - x0;
        let fit = coef[0] + if d < 0.0 { coef[1] } else { coef[2] } * d * d;
        sse += (y - fit).powi(2);
    }
    Some(sse)
}

/// Sub-frame position of the extremum near sample `p`: the shared vertex of
/// the best-fitting pair of half-parabolas over `x[p-half..=p+half]`,
/// searched within `reach` frames of `p`. Gait offsets approach a heel
/// strike faster than they leave it, so a single symmetric parabola would
/// bias the vertex toward the flatter side.
fn refine_peak(x: &[f64], p: usize, half: usize, reach: usize) -> f64 {
    let lo = p.saturating_sub(half.max(1));
    let hi = (p + half.max(1)).min(x.len() - 1);
    if hi - lo < 3 {
        return p as f64;
    }
    let sse = |x0: f64| {
        if x0 < lo as f64 || x0 > hi as f64 {
            return None;
        }
        split_parabola_fit(x, lo, hi, x0)
    };
    // tenth-of-a-frame grid, then hundredths around its best point
    let mut best = (p as f64, f64::INFINITY);
    for (centre, span, step) in [(p as f64, reach.max(1) as f64, 0.1), (f64::NAN, 0.1, 0.01)] {
        let centre = if centre.is_nan() { best.0 } else { centre };
        let steps = (span / step).round() as i64;
        for k in -steps..=steps {
            let x0 = centre + k as f64 * step;
            if let Some(e) = sse(x0) {
                if e < best.1 {
                    best = (x0, e);
                }
            }
        }
    }
    best.0
}

/// Local maxima separated by at least `min_distance` frames; taller peaks win.
/// Returns sub-frame positions refined over the three samples around each
/// peak.
pub fn find_peaks(x: &[f64], min_distance: usize, min_prominence: f64) -> Vec<f64> {
    pick_peaks(x, min_distance, min_prominence)
        .into_iter()
        .map(|p| {
            let (a, b, c) = (x[p - 1], x[p], x[p + 1]);
            let denom = a - 2.0 * b + c;
            let delta = if denom < 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
            p as f64 + delta.clamp(-0.5, 0.5)
        })
        .collect()
}

fn pick_peaks(x: &[f64], min_distance: usize, min_prominence: f64) -> Vec<usize> {
    let n = x.len();
    if n < 3 {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        if x[i] > x[i - 1] {
            // walk across a flat top
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                let mid = (i + j) / 2;
                if prominence(x, mid) >= min_prominence {
                    peaks.push(mid);
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }

    let mut by_height = peaks.clone();
    by_height.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for p in by_height {
        if kept.iter().all(|&k| k.abs_diff(p) >= min_distance) {
            kept.push(p);
        }
    }
    kept.sort_unstable();
    kept
}

/// Heel-strike candidates are maxima of the ankle offset ahead of the
/// sacrum, toe-off candidates its minima.
pub fn detect_candidates(walk: &RawWalk, cfg: &CandidateConfig) -> Result<EventCandidates> {
    cfg.validate()?;
    let min_distance = ((cfg.min_separation_s * walk.fps).round() as usize).max(1);
    let half = ((cfg.smoothing_s * walk.fps) / 2.0).floor() as usize;
    let fit_half = ((cfg.refine_window_s * walk.fps) / 2.0).round() as usize;
    // averaging an asymmetric peak moves it by less than the half-window
    let reach = half + 1;
    let mut out = EventCandidates::default();
    for foot in Foot::BOTH {
        let raw = ap_offset_signal(walk, foot)?;
        let signal = moving_average(&raw, half);
        let negated_raw: Vec<f64> = raw.iter().map(|v| -v).collect();
        let negated: Vec<f64> = signal.iter().map(|v| -v).collect();
        let heel_strikes = pick_peaks(&signal, min_distance, cfg.min_prominence_m)
            .into_iter()
            .map(|p| refine_peak(&raw, p, fit_half, reach))
            .collect::<Vec<_>>();
        let toe_offs = pick_peaks(&negated, min_distance, cfg.min_prominence_m)
            .into_iter()
            .map(|p| refine_peak(&negated_raw, p, fit_half, reach))
            .collect();
        if heel_strikes.len() < 2 {
            return Err(Error::InsufficientGait(format!(
                "walk {}: {} heel-strike candidates on the {} foot",
                walk.walk_id,
                heel_strikes.len(),
                foot.as_str()
            )));
        }
        let fc = FootCandidates {
            heel_strikes,
            toe_offs,
        };
        match foot {
            Foot::Left => out.left = fc,
            Foot::Right => out.right = fc,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peaks_respect_distance_and_prominence() {
        let x = [0.0, 1.0, 0.0, 0.9, 0.0, 0.0, 0.0, 2.0, 0.0, 0.05, 0.0];
        assert_eq!(find_peaks(&x, 1, 0.5).len(), 3);
        let p = find_peaks(&x, 3, 0.5);
        assert_eq!(p.len(), 2);
        assert!((p[0] - 1.0).abs() <= 0.5 && (p[1] - 7.0).abs() <= 0.5);
        // symmetric neighbours leave the peak on its sample
        assert_eq!(p[1], 7.0);
    }

    #[test]
    fn parabolic_refinement_finds_vertex() {
        let x: Vec<f64> = (0..10).map(|i| -(i as f64 - 4.3).powi(2)).collect();
        let p = find_peaks(&x, 1, 0.0);
        assert_eq!(p.len(), 1);
        assert!((p[0] - 4.3).abs() < 1e-12);
    }

    #[test]
    fn split_refinement_is_unbiased_for_asymmetric_peaks() {
        // sharp rise, slow fall, vertex between samples
        let v = 20.37;
        let x: Vec<f64> = (0..41)
            .map(|i| {
                let d = i as f64 - v;
                if d < 0.0 { -0.02 * d * d } else { -0.005 * d * d }
            })
            .collect();
        let p = refine_peak(&x, 20, 7, 1);
        assert!((p - v).abs() <= 0.005, "{p}");
        // a single parabola lands on the flat side
        let sym = find_peaks(&x, 1, 0.0)[0];
        assert!(sym > v);
    }

    #[test]
    fn refinement_reaches_past_the_picked_sample() {
        let v = 23.4;
        let x: Vec<f64> = (0..50)
            .map(|i| {
                let d = i as f64 - v;
                if d < 0.0 { -0.02 * d * d } else { -0.005 * d * d }
            })
            .collect();
        assert!((refine_peak(&x, 20, 10, 4) - v).abs() <= 0.005);
        // confined to one frame, the search stops at its edge
        assert!(refine_peak(&x, 20, 10, 1) <= 21.1 + 1e-9);
    }

    #[test]
    fn plateau_peak_is_centred() {
        let x = [0.0, 1.0, 1.0, 1.0, 0.0];
        assert_eq!(find_peaks(&x, 1, 0.5), vec![2.0]);
    }
}
