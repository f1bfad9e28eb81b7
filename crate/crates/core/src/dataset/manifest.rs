use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AxisRole, MedicationState, ParticipantId, RawWalk, UpdrsScore};
use crate::error::{Error, Result};

/// Which file axis (x, y, z) carries each anatomical direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinateConvention {
    pub ap: FileAxis,
    pub ml: FileAxis,
    pub up: FileAxis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileAxis {
    X,
    Y,
    Z,
}

impl Default for CoordinateConvention {
    fn default() -> Self {
        Self {
            ap: FileAxis::X,
            ml: FileAxis::Y,
            up: FileAxis::Z,
        }
    }
}

impl CoordinateConvention {
    pub fn validate(&self) -> Result<()> {
        if self.ap == self.ml || self.ap == self.up || self.ml == self.up {
            return Err(Error::validation(
                "coordinate convention must assign ap, ml and up to distinct axes",
            ));
        }
        Ok(())
    }

    /// Roles of the file's x, y, z columns, in that order.
    pub fn axis_roles(&self) -> Vec<AxisRole> {
        [FileAxis::X, FileAxis::Y, FileAxis::Z]
            .into_iter()
            .map(|a| {
                if a == self.ap {
                    AxisRole::Ap
                } else if a == self.ml {
                    AxisRole::Ml
                } else {
                    AxisRole::Up
                }
            })
            .collect()
    }
}

/// One walk entry of a manifest, with its file path resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkDescriptor {
    pub file: PathBuf,
    pub walk_id: String,
    pub participant: ParticipantId,
    pub medication: MedicationState,
    pub label: UpdrsScore,
    pub fps: f64,
    pub layout: String,
}

#[derive(Debug, Clone, Deserialize)]
struct RawManifest {
    coordinate_convention: CoordinateConventionSpec,
    walks: Vec<WalkDescriptor>,
}

#[derive(Debug, Clone, Deserialize)]
struct CoordinateConventionSpec {
    ap: String,
    ml: String,
    up: String,
}

fn parse_axis(role: &str, value: &str) -> Result<FileAxis> {
    match value {
        "x" | "X" => Ok(FileAxis::X),
        "y" | "Y" => Ok(FileAxis::Y),
        "z" | "Z" => Ok(FileAxis::Z),
        other => Err(Error::validation(format!(
            "unknown axis {other:?} for {role} in coordinate_convention"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub coordinate_convention: CoordinateConvention,
    pub walks: Vec<WalkDescriptor>,
    /// Non-fatal consistency issues found while loading.
    pub warnings: Vec<String>,
}

impl DatasetManifest {
    /// Validates a manifest built in memory. File paths must already be absolute
    /// or relative to the working directory.
    pub fn new(
        coordinate_convention: CoordinateConvention,
        walks: Vec<WalkDescriptor>,
    ) -> Result<Self> {
        coordinate_convention.validate()?;
        if walks.is_empty() {
            return Err(Error::validation("manifest has no walks"));
        }
        let mut seen = HashSet::new();
        for w in &walks {
            if w.walk_id.trim().is_empty() {
                return Err(Error::validation("walk_id must be non-empty"));
            }
            if !seen.insert(w.walk_id.as_str()) {
                return Err(Error::validation(format!("duplicate walk_id {:?}", w.walk_id)));
            }
            if w.label.value() > 2 {
                return Err(Error::validation(format!(
                    "walk {}: label {} outside the supported classes 0, 1, 2",
                    w.walk_id,
                    w.label.value()
                )));
            }
            if !(w.fps.is_finite() && w.fps > 0.0) {
                return Err(Error::validation(format!(
                    "walk {}: fps must be positive",
                    w.walk_id
                )));
            }
            crate::skeleton::JointLayout::builtin(&w.layout)?;
            if !w.file.is_file() {
                return Err(Error::validation(format!(
                    "walk {}: trajectory file {} does not exist",
                    w.walk_id,
                    w.file.display()
                )));
            }
        }
        let warnings = label_consistency_warnings(&walks);
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(Self {
            coordinate_convention,
            walks,
            warnings,
        })
    }

    pub fn participants(&self) -> BTreeSet<&ParticipantId> {
        self.walks.iter().map(|w| &w.participant).collect()
    }

    pub fn participant_count(&self) -> usize {
        self.participants().len()
    }

    pub fn walk_count(&self) -> usize {
        self.walks.len()
    }

    pub fn walk(&self, walk_id: &str) -> Option<&WalkDescriptor> {
        self.walks.iter().find(|w| w.walk_id == walk_id)
    }

    pub fn load_walk(&self, descriptor: &WalkDescriptor) -> Result<RawWalk> {
        super::load_walk(descriptor, &self.coordinate_convention)
    }
}

fn label_consistency_warnings(walks: &[WalkDescriptor]) -> Vec<String> {
    let mut labels: BTreeMap<(&ParticipantId, MedicationState), BTreeSet<u8>> = BTreeMap::new();
    for w in walks {
        labels
            .entry((&w.participant, w.medication))
            .or_default()
            .insert(w.label.value());
    }
    labels
        .into_iter()
        .filter(|(_, set)| set.len() > 1)
        .map(|((p, m), set)| {
            format!("participant {p} has inconsistent labels {set:?} in medication state {m}")
        })
        .collect()
}

/// Reads and validates a JSON manifest. Relative trajectory paths are
/// resolved against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: RawManifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
    let cc = &raw.coordinate_convention;
    let convention = CoordinateConvention {
        ap: parse_axis("ap", &cc.ap)?,
        ml: parse_axis("ml", &cc.ml)?,
        up: parse_axis("up", &cc.up)?,
    };
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let walks = raw
        .walks
        .into_iter()
        .map(|mut w| {
            if w.file.is_relative() {
                w.file = base.join(&w.file);
            }
            w
        })
        .collect();
    DatasetManifest::new(convention, walks)
}
