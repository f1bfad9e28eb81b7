//! Walk records, dataset manifests, trajectory files and the synthetic gait
//! generator used as a ground-truth oracle.

mod cohort;
mod manifest;
mod synth;
mod trajectory;

pub use cohort::{cohort_label, participant_name, synthesize_cohort, write_cohort, CohortSpec, SCORE_GAIT};
pub use manifest::{load_manifest, CoordinateConvention, DatasetManifest, WalkDescriptor};
pub use synth::{expand_to_markers, synthesize_gait, GaitSpec, GroundTruthEvents, SyntheticGait};
pub use trajectory::{load_walk, parse_trajectory, write_trajectory, MAX_GAP_FRAMES};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque participant token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ParticipantId(String);

impl ParticipantId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(Error::validation("participant id must be non-empty"));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ParticipantId {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ParticipantId> for String {
    fn from(value: ParticipantId) -> Self {
        value.0
    }
}

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MedicationState {
    #[serde(rename = "ON")]
    On,
    #[serde(rename = "OFF")]
    Off,
}

impl MedicationState {
    pub fn as_str(self) -> &'static str {
        match self {
            MedicationState::On => "ON",
            MedicationState::Off => "OFF",
        }
    }
}

impl fmt::Display for MedicationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MedicationState {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ON" | "on" => Ok(MedicationState::On),
            "OFF" | "off" => Ok(MedicationState::Off),
            other => Err(Error::validation(format!("unknown medication state {other:?}"))),
        }
    }
}

/// MDS-UPDRS-III gait item score, 0..=4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct UpdrsScore(u8);

impl UpdrsScore {
    pub const MAX: u8 = 4;

    pub fn new(score: u8) -> Result<Self> {
        if score > Self::MAX {
            return Err(Error::validation(format!(
                "UPDRS gait score {score} out of range 0..={}",
                Self::MAX
            )));
        }
        Ok(Self(score))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TryFrom<u8> for UpdrsScore {
    type Error = Error;
    fn try_from(value: u8) -> Result<Self> {
        Self::new(value)
    }
}

impl From<UpdrsScore> for u8 {
    fn from(value: UpdrsScore) -> Self {
        value.0
    }
}

/// Anatomical role of a stored coordinate component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisRole {
    /// Anteroposterior (direction of travel).
    Ap,
    /// Mediolateral.
    Ml,
    /// Vertical.
    Up,
}

impl AxisRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AxisRole::Ap => "ap",
            AxisRole::Ml => "ml",
            AxisRole::Up => "up",
        }
    }
}

impl std::str::FromStr for AxisRole {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ap" => Ok(AxisRole::Ap),
            "ml" => Ok(AxisRole::Ml),
            "up" => Ok(AxisRole::Up),
            other => Err(Error::validation(format!("unknown axis role {other:?}"))),
        }
    }
}

/// Dense frame-major joint coordinates.
///
/// `axes[k]` names the anatomical role of the k-th stored component, so a 3D
/// walk keeps its file order (x, y, z) while a projected sequence stores only
/// the two selected components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    joints: usize,
    axes: Vec<AxisRole>,
    data: Vec<f64>,
}

impl Motion {
    pub fn new(joints: usize, axes: Vec<AxisRole>, data: Vec<f64>) -> Result<Self> {
        if joints == 0 {
            return Err(Error::validation("motion must have at least one joint"));
        }
        if axes.is_empty() || axes.len() > 3 {
            return Err(Error::validation("motion must have 1..=3 coordinate axes"));
        }
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].contains(a) {
                return Err(Error::validation(format!("duplicate axis role {}", a.as_str())));
            }
        }
        let stride = joints * axes.len();
        if data.len() % stride != 0 {
            return Err(Error::validation(format!(
                "coordinate buffer of length {} is not a whole number of {}-joint frames",
                data.len(),
                joints
            )));
        }
        Ok(Self { joints, axes, data })
    }

    /// Builds a motion from per-frame point lists.
    pub fn from_points<const D: usize>(
        frames: &[Vec<[f64; D]>],
        axes: Vec<AxisRole>,
    ) -> Result<Self> {
        let joints = frames.first().map(Vec::len).unwrap_or(0);
        if axes.len() != D {
            return Err(Error::validation("axis count does not match point dimension"));
        }
        let mut data = Vec::with_capacity(frames.len() * joints * D);
        for (f, frame) in frames.iter().enumerate() {
            if frame.len() != joints {
                return Err(Error::validation(format!(
                    "frame {f} has {} joints, expected {joints}",
                    frame.len()
                )));
            }
            for p in frame {
                data.extend_from_slice(p);
            }
        }
        Self::new(joints, axes, data)
    }

    pub fn joint_count(&self) -> usize {
        self.joints
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[AxisRole] {
        &self.axes
    }

    pub fn frame_count(&self) -> usize {
        self.data.len() / (self.joints * self.axes.len())
    }

    /// Index of the stored component carrying `role`, if present.
    pub fn component(&self, role: AxisRole) -> Option<usize> {
        self.axes.iter().position(|&a| a == role)
    }

    pub fn frame(&self, f: usize) -> &[f64] {
        let stride = self.joints * self.dims();
        &self.data[f * stride..(f + 1) * stride]
    }

    pub fn frame_mut(&mut self, f: usize) -> &mut [f64] {
        let stride = self.joints * self.dims();
        &mut self.data[f * stride..(f + 1) * stride]
    }

    pub fn point(&self, f: usize, j: usize) -> &[f64] {
        let d = self.dims();
        let base = (f * self.joints + j) * d;
        &self.data[base..base + d]
    }

    pub fn point_mut(&mut self, f: usize, j: usize) -> &mut [f64] {
        let d = self.dims();
        let base = (f * self.joints + j) * d;
        &mut self.data[base..base + d]
    }

    /// Coordinate of joint `j` at frame `f` along stored component `c`.
    pub fn coord(&self, f: usize, j: usize, c: usize) -> f64 {
        self.data[(f * self.joints + j) * self.dims() + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Time series of one joint along one component.
    pub fn series(&self, j: usize, c: usize) -> Vec<f64> {
        (0..self.frame_count()).map(|f| self.coord(f, j, c)).collect()
    }

    /// Frames `start..start+len` as a new motion.
    pub fn slice_frames(&self, start: usize, len: usize) -> Motion {
        let stride = self.joints * self.dims();
        Motion {
            joints: self.joints,
            axes: self.axes.clone(),
            data: self.data[start * stride..(start + len) * stride].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Adds `offset` (one value per stored component) to every point.
    pub fn translate(&mut self, offset: &[f64]) {
        let d = self.dims();
        assert_eq!(offset.len(), d, "offset dimension mismatch");
        for p in self.data.chunks_exact_mut(d) {
            for (v, o) in p.iter_mut().zip(offset) {
                *v += o;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }
}

/// One recorded walking sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawWalk {
    pub walk_id: String,
    pub participant: ParticipantId,
    pub medication: MedicationState,
    pub label: UpdrsScore,
    pub fps: f64,
    pub layout: String,
    pub motion: Motion,
}

impl RawWalk {
    pub fn frame_count(&self) -> usize {
        self.motion.frame_count()
    }

    pub fn duration_s(&self) -> f64 {
        self.frame_count() as f64 / self.fps
    }

    /// Checks the record invariants against the named layout.
    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::validation(format!(
                "walk {}: fps must be positive, got {}",
                self.walk_id, self.fps
            )));
        }
        if self.frame_count() < 2 {
            return Err(Error::validation(format!(
                "walk {}: needs at least 2 frames, got {}",
                self.walk_id,
                self.frame_count()
            )));
        }
        let layout = crate::skeleton::JointLayout::builtin(&self.layout)?;
        if layout.joint_count() != self.motion.joint_count() {
            return Err(Error::validation(format!(
                "walk {}: layout {} has {} joints, motion has {}",
                self.walk_id,
                self.layout,
                layout.joint_count(),
                self.motion.joint_count()
            )));
        }
        if !self.motion.is_finite() {
            return Err(Error::validation(format!(
                "walk {}: non-finite coordinates",
                self.walk_id
            )));
        }
        Ok(())
    }
}

/// Left or right side of the body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Foot {
    Left,
    Right,
}

impl Foot {
    pub const BOTH: [Foot; 2] = [Foot::Left, Foot::Right];

    pub fn other(self) -> Foot {
        match self {
            Foot::Left => Foot::Right,
            Foot::Right => Foot::Left,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Foot::Left => "left",
            Foot::Right => "right",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_range() {
        assert!(UpdrsScore::new(4).is_ok());
        assert!(UpdrsScore::new(5).is_err());
        let s: std::result::Result<UpdrsScore, _> = serde_json::from_str("7");
        assert!(s.is_err());
    }

    #[test]
    fn empty_participant_rejected() {
        assert!(ParticipantId::new("  ").is_err());
        assert!(serde_json::from_str::<ParticipantId>("\"\"").is_err());
    }

    #[test]
    fn motion_indexing() {
        let m = Motion::from_points(
            &[vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], vec![[7.0, 8.0, 9.0], [10.0, 11.0, 12.0]]],
            vec![AxisRole::Ap, AxisRole::Ml, AxisRole::Up],
        )
        .unwrap();
        assert_eq!(m.frame_count(), 2);
        assert_eq!(m.point(1, 0), &[7.0, 8.0, 9.0]);
        assert_eq!(m.coord(0, 1, 2), 6.0);
        assert_eq!(m.series(1, 1), vec![5.0, 11.0]);
        assert_eq!(m.component(AxisRole::Up), Some(2));
    }

    #[test]
    fn motion_rejects_duplicate_axes() {
        assert!(Motion::new(1, vec![AxisRole::Ap, AxisRole::Ap], vec![0.0, 0.0]).is_err());
    }
}
