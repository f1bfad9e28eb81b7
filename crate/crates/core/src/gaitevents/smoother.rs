//! Kalman filtering and Rauch-Tung-Striebel smoothing of quadrature phase.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::quadrature::PhaseSignal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmootherKind {
    /// State `[phase, phase rate]` observed through `(cos, sin)`.
    PhaseEkf,
    /// `cos` and `sin` smoothed as two independent local-linear-trend
    /// channels, then projected back onto the unit circle.
    IndependentChannels,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    /// Spectral density of the phase acceleration, rad²/s³ (per-frame steps
    /// for the independent-channel variant).
    pub process_noise_q: f64,
    /// Variance of each quadrature component per sample at
    /// [`REFERENCE_FPS`]; scaled with the frame rate so that the smoothing
    /// bandwidth in seconds does not depend on it.
    pub measurement_noise_r: f64,
    pub initial_variance: f64,
    pub kind: SmootherKind,
    /// Gauss-Newton relinearizations per measurement update (1 = plain EKF).
    pub update_iterations: usize,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            process_noise_q: 1e-4,
            measurement_noise_r: 1e-2,
            initial_variance: 1.0,
            kind: SmootherKind::PhaseEkf,
            update_iterations: 1,
        }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("process_noise_q", self.process_noise_q),
            ("measurement_noise_r", self.measurement_noise_r),
            ("initial_variance", self.initial_variance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        if self.update_iterations == 0 {
            return Err(Error::validation("update_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Smoother output: the re-encoded signal plus the state trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedPhase {
    pub signal: PhaseSignal,
    /// Unwrapped, non-decreasing phase per frame.
    pub phase: Vec<f64>,
    /// Phase rate (rad/s), never negative.
    pub rate: Vec<f64>,
    /// Times the filter covariance lost positive-definiteness and was reset.
    pub covariance_resets: usize,
}

/// Frame rate the measurement variance is stated at.
pub const REFERENCE_FPS: f64 = 30.0;

fn measurement_variance(cfg: &SmootherConfig, fps: f64) -> f64 {
    cfg.measurement_noise_r * fps / REFERENCE_FPS
}

// Constant-rate transition over one frame of `dt` seconds.
fn transition(dt: f64) -> Matrix2<f64> {
    Matrix2::new(1.0, dt, 0.0, 1.0)
}

// Integrated white-noise acceleration with spectral density `q` (rad^2/s^3).
fn process_noise(q: f64, dt: f64) -> Matrix2<f64> {
    Matrix2::new(dt.powi(3) / 3.0, dt * dt / 2.0, dt * dt / 2.0, dt) * q
}

fn is_positive_definite(p: &Matrix2<f64>) -> bool {
    p.iter().all(|v| v.is_finite()) && p[(0, 0)] > 0.0 && p[(1, 1)] > 0.0 && p.determinant() > 0.0
}

fn symmetrize(p: Matrix2<f64>) -> Matrix2<f64> {
    (p + p.transpose()) * 0.5
}

struct FilterPass {
    filtered: Vec<Vector2<f64>>,
    filtered_cov: Vec<Matrix2<f64>>,
    predicted: Vec<Vector2<f64>>,
    predicted_cov: Vec<Matrix2<f64>>,
    resets: usize,
}

/// Standard RTS backward pass for the linear constant-rate transition.
fn rts(pass: &FilterPass, dt: f64, clamp_rate: bool) -> Result<Vec<Vector2<f64>>> {
    let n = pass.filtered.len();
    let f = transition(dt);
    let mut xs = pass.filtered.clone();
    let mut ps = pass.filtered_cov.clone();
    for k in (0..n.saturating_sub(1)).rev() {
        let pred_inv = pass.predicted_cov[k + 1]
            .try_inverse()
            .ok_or_else(|| Error::Numerical(format!("singular predicted covariance at frame {}", k + 1)))?;
        let gain = pass.filtered_cov[k] * f.transpose() * pred_inv;
        let mut x = pass.filtered[k] + gain * (xs[k + 1] - pass.predicted[k + 1]);
        if clamp_rate {
            x[1] = x[1].max(0.0);
        }
        xs[k] = x;
        ps[k] = symmetrize(pass.filtered_cov[k] + gain * (ps[k + 1] - pass.predicted_cov[k + 1]) * gain.transpose());
    }
    Ok(xs)
}

fn ekf_forward(signal: &PhaseSignal, cfg: &SmootherConfig) -> Result<FilterPass> {
    let n = signal.len();
    let dt = 1.0 / signal.fps;
    let f = transition(dt);
    let q = process_noise(cfg.process_noise_q, dt);
    let r = Matrix2::identity() * measurement_variance(cfg, signal.fps);
    let p0 = Matrix2::identity() * cfg.initial_variance;

    let first = signal.samples[0].1.atan2(signal.samples[0].0);
    // mean slope over the first second; one frame difference is too noisy
    let span = (signal.fps.round() as usize).clamp(1, n.max(2) - 1);
    let rate0 = if n > 1 {
        let u = signal.unwrapped();
        ((u[span] - u[0]) / (span as f64 * dt)).max(0.0)
    } else {
        0.0
    };

    let mut pass = FilterPass {
        filtered: Vec::with_capacity(n),
        filtered_cov: Vec::with_capacity(n),
        predicted: Vec::with_capacity(n),
        predicted_cov: Vec::with_capacity(n),
        resets: 0,
    };
    let mut x = Vector2::new(first, rate0);
    let mut p = p0;
    for (k, &(zc, zs)) in signal.samples.iter().enumerate() {
        let (x_pred, p_pred) = if k == 0 {
            (x, p)
        } else {
            (f * x, symmetrize(f * p * f.transpose() + q))
        };
        pass.predicted.push(x_pred);
        pass.predicted_cov.push(p_pred);

        let z = Vector2::new(zc, zs);
        let mut xi = x_pred;
        let mut gain = nalgebra::Matrix2::zeros();
        let mut h = nalgebra::Matrix2::zeros();
        for _ in 0..cfg.update_iterations {
            let (s, c) = xi[0].sin_cos();
            h = Matrix2::new(-s, 0.0, c, 0.0);
            let innov_cov = h * p_pred * h.transpose() + r;
            let inv = innov_cov
                .try_inverse()
                .ok_or_else(|| Error::Numerical(format!("singular innovation covariance at frame {k}")))?;
            gain = p_pred * h.transpose() * inv;
            let predicted_obs = Vector2::new(c, s);
            xi = x_pred + gain * (z - predicted_obs - h * (x_pred - xi));
        }
        xi[1] = xi[1].max(0.0);
        let ikh = Matrix2::identity() - gain * h;
        let mut p_new = symmetrize(ikh * p_pred * ikh.transpose() + gain * r * gain.transpose());
        if !is_positive_definite(&p_new) {
            p_new = p0;
            pass.resets += 1;
        }
        if !(xi[0].is_finite() && xi[1].is_finite()) {
            return Err(Error::Numerical(format!("non-finite phase state at frame {k}")));
        }
        x = xi;
        p = p_new;
        pass.filtered.push(x);
        pass.filtered_cov.push(p);
    }
    Ok(pass)
}

/// Local-linear-trend Kalman + RTS pass over one scalar channel.
fn smooth_channel(z: &[f64], dt: f64, cfg: &SmootherConfig) -> Result<Vec<f64>> {
    let f = transition(dt);
    let q = process_noise(cfg.process_noise_q, dt);
    let r = measurement_variance(cfg, 1.0 / dt);
    let p0 = Matrix2::identity() * cfg.initial_variance;
    let mut pass = FilterPass {
        filtered: Vec::with_capacity(z.len()),
        filtered_cov: Vec::with_capacity(z.len()),
        predicted: Vec::with_capacity(z.len()),
        predicted_cov: Vec::with_capacity(z.len()),
        resets: 0,
    };
    let mut x = Vector2::new(z[0], 0.0);
    let mut p = p0;
    for (k, &obs) in z.iter().enumerate() {
        let (x_pred, p_pred) = if k == 0 {
            (x, p)
        } else {
            (f * x, symmetrize(f * p * f.transpose() + q))
        };
        pass.predicted.push(x_pred);
        pass.predicted_cov.push(p_pred);
        let s = p_pred[(0, 0)] + r;
        let gain = Vector2::new(p_pred[(0, 0)], p_pred[(1, 0)]) / s;
        x = x_pred + gain * (obs - x_pred[0]);
        let h = nalgebra::RowVector2::new(1.0, 0.0);
        let ikh = Matrix2::identity() - gain * h;
        p = symmetrize(ikh * p_pred * ikh.transpose() + gain * gain.transpose() * r);
        if !is_positive_definite(&p) {
            p = p0;
            pass.resets += 1;
        }
        pass.filtered.push(x);
        pass.filtered_cov.push(p);
    }
    Ok(rts(&pass, dt, false)?.into_iter().map(|v| v[0]).collect())
}

/// Forward filter plus backward RTS pass on the phase signal, re-encoded to
/// quadrature. The smoothed phase is forced non-decreasing.
pub fn smooth_phase(signal: &PhaseSignal, cfg: &SmootherConfig) -> Result<SmoothedPhase> {
    cfg.validate()?;
    if !(signal.fps.is_finite() && signal.fps > 0.0) {
        return Err(Error::validation("phase signal needs a positive frame rate"));
    }
    if signal.is_empty() {
        return Err(Error::validation("cannot smooth an empty phase signal"));
    }
    let (mut phase, rate, resets) = match cfg.kind {
        SmootherKind::PhaseEkf => {
            let pass = ekf_forward(signal, cfg)?;
            let states = rts(&pass, 1.0 / signal.fps, true)?;
            (
                states.iter().map(|x| x[0]).collect::<Vec<_>>(),
                states.iter().map(|x| x[1]).collect::<Vec<_>>(),
                pass.resets,
            )
        }
        SmootherKind::IndependentChannels => {
            let c: Vec<f64> = signal.samples.iter().map(|s| s.0).collect();
            let s: Vec<f64> = signal.samples.iter().map(|s| s.1).collect();
            // Per-frame steps: with time in seconds a trend model this stiff
            // cannot follow the oscillating channels at all.
            let c = smooth_channel(&c, 1.0, cfg)?;
            let s = smooth_channel(&s, 1.0, cfg)?;
            let projected = PhaseSignal {
                foot: signal.foot,
                samples: c.iter().zip(&s).map(|(&c, &s)| (c, s)).collect(),
                fps: signal.fps,
            };
            let phase = projected.unwrapped();
            let mut rate: Vec<f64> = phase
                .windows(2)
                .map(|w| (w[1] - w[0]).max(0.0) * signal.fps)
                .collect();
            rate.push(rate.last().copied().unwrap_or(0.0));
            (phase, rate, 0)
        }
    };
    for k in 1..phase.len() {
        if phase[k] < phase[k - 1] {
            phase[k] = phase[k - 1];
        }
    }
    Ok(SmoothedPhase {
        signal: PhaseSignal::from_phase(signal.foot, &phase, signal.fps),
        phase,
        rate,
        covariance_resets: resets,
    })
}
