//! Multi-participant synthetic cohorts written as a manifest plus
//! trajectory files.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;

use super::synth::{synthesize_gait, GaitSpec};
use super::trajectory::write_trajectory_file;
use super::{MedicationState, ParticipantId, RawWalk, UpdrsScore};
use crate::error::{Error, Result};
use crate::seeding::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortSpec {
    pub participants: usize,
    pub walks_per_participant: usize,
    pub duration_s: f64,
    pub fps: f64,
    pub noise_std_m: f64,
    /// Extra motionless recordings, one each for the first participants.
    pub standing_walks: usize,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            participants: 24,
            walks_per_participant: 10,
            duration_s: 10.0,
            fps: 100.0,
            noise_std_m: 0.005,
            standing_walks: 0,
            seed: 0,
        }
    }
}

/// Nominal (cadence, step length, step width) per score: slower, shorter and
/// wider steps with increasing impairment. Per-walk jitter keeps the
/// classes separable by cadence.
pub const SCORE_GAIT: [(f64, f64, f64); 3] = [(112.0, 0.62, 0.10), (100.0, 0.50, 0.13), (86.0, 0.38, 0.16)];

/// Participant `p` has base score `p mod 3`. Even walks are OFF with the base
/// score; odd walks are ON, one point lower for odd participants.
pub fn cohort_label(participant: usize, medication: MedicationState) -> u8 {
    let base = (participant % 3) as u8;
    match medication {
        MedicationState::Off => base,
        MedicationState::On if participant % 2 == 1 => base.saturating_sub(1),
        MedicationState::On => base,
    }
}

pub fn participant_name(p: usize) -> String {
    format!("P{p:02}")
}

/// Walks of a cohort, in participant then walk order.
pub fn synthesize_cohort(spec: &CohortSpec) -> Result<Vec<RawWalk>> {
    if spec.participants == 0 || spec.walks_per_participant == 0 {
        return Err(Error::validation("cohort needs participants and walks"));
    }
    let mut walks = Vec::new();
    for p in 0..spec.participants {
        let participant = ParticipantId::new(participant_name(p))?;
        for w in 0..spec.walks_per_participant {
            let medication = if w % 2 == 0 { MedicationState::Off } else { MedicationState::On };
            let label = cohort_label(p, medication);
            let (cadence, length, width) = SCORE_GAIT[label as usize];
            let mut rng = rng_for(spec.seed, &["cohort".into(), p.into(), w.into()]);
            let gait = GaitSpec {
                cadence_steps_per_min: cadence * (1.0 + rng.gen_range(-0.02..0.02)),
                step_length_m: length + rng.gen_range(-0.015..0.015),
                step_width_m: width + rng.gen_range(-0.005..0.005),
                duration_s: spec.duration_s,
                fps: spec.fps,
                noise_std_m: spec.noise_std_m,
                seed: rng.gen(),
                ..GaitSpec::default()
            };
            let mut walk = synthesize_gait(&gait)?.walk;
            walk.walk_id = format!("{}-{medication}-{w:02}", participant_name(p));
            walk.participant = participant.clone();
            walk.medication = medication;
            walk.label = UpdrsScore::new(label)?;
            walks.push(walk);
        }
    }
    for s in 0..spec.standing_walks {
        let p = s % spec.participants;
        let template = synthesize_gait(&GaitSpec { duration_s: spec.duration_s, fps: spec.fps, ..GaitSpec::default() })?.walk;
        let mut walk = template.clone();
        let first = template.motion.frame(0).to_vec();
        for f in 0..walk.frame_count() {
            walk.motion.frame_mut(f).copy_from_slice(&first);
        }
        walk.walk_id = format!("{}-standing-{s:02}", participant_name(p));
        walk.participant = ParticipantId::new(participant_name(p))?;
        walk.medication = MedicationState::Off;
        walk.label = UpdrsScore::new(cohort_label(p, MedicationState::Off))?;
        walks.push(walk);
    }
    Ok(walks)
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    file: String,
    walk_id: &'a str,
    participant: &'a str,
    medication: MedicationState,
    label: u8,
    fps: f64,
    layout: &'a str,
}

/// Writes `walks/<walk_id>.csv` and `manifest.json` (ap = x, ml = y, up = z)
/// under `dir`; returns the manifest path.
pub fn write_cohort(dir: &Path, walks: &[RawWalk]) -> Result<PathBuf> {
    let walk_dir = dir.join("walks");
    std::fs::create_dir_all(&walk_dir).map_err(|e| Error::io(&walk_dir, e))?;
    let mut entries = Vec::with_capacity(walks.len());
    for walk in walks {
        let rel = format!("walks/{}.csv", walk.walk_id);
        write_trajectory_file(walk, &dir.join(&rel))?;
        entries.push(ManifestEntry {
            file: rel,
            walk_id: &walk.walk_id,
            participant: walk.participant.as_str(),
            medication: walk.medication,
            label: walk.label.value(),
            fps: walk.fps,
            layout: &walk.layout,
        });
    }
    let manifest = serde_json::json!({
        "coordinate_convention": {"ap": "x", "ml": "y", "up": "z"},
        "walks": entries,
    });
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::parse("manifest writer", e))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
