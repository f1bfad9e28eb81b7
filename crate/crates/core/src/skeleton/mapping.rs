use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{JointLayout, H36M17, PD44};
use crate::dataset::{Motion, RawWalk};
use crate::error::{Error, Result};

const DEFAULT_PD44_TO_H36M: &str = include_str!("../../data/pd44_to_h36m17.json");

/// How one target joint is built from source joints.
#[derive(Debug, Clone, PartialEq)]
pub enum MappingRule {
    CopyFrom(usize),
    WeightedAverage(Vec<(usize, f64)>),
}

/// On-disk rule, keyed by joint names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RuleSpec {
    Copy(String),
    Avg(Vec<(String, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointMapping {
    source: JointLayout,
    target: JointLayout,
    rules: Vec<MappingRule>,
}

impl JointMapping {
    /// Builds a mapping; `rules[i]` defines target joint `i`.
    pub fn new(source: JointLayout, target: JointLayout, rules: Vec<MappingRule>) -> Result<Self> {
        if rules.len() != target.joint_count() {
            return Err(Error::validation(format!(
                "mapping {}->{}: {} rules for {} target joints",
                source.id(),
                target.id(),
                rules.len(),
                target.joint_count()
            )));
        }
        for (i, rule) in rules.iter().enumerate() {
            let name = &target.joint_names()[i];
            match rule {
                MappingRule::CopyFrom(s) if *s >= source.joint_count() => {
                    return Err(Error::validation(format!("{name}: source index {s} out of range")));
                }
                MappingRule::CopyFrom(_) => {}
                MappingRule::WeightedAverage(terms) => {
                    if terms.is_empty() {
                        return Err(Error::validation(format!("{name}: empty weighted average")));
                    }
                    let mut sum = 0.0;
                    for &(s, w) in terms {
                        if s >= source.joint_count() {
                            return Err(Error::validation(format!(
                                "{name}: source index {s} out of range"
                            )));
                        }
                        if !(w.is_finite() && w > 0.0) {
                            return Err(Error::validation(format!(
                                "{name}: weights must be positive, got {w}"
                            )));
                        }
                        sum += w;
                    }
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::validation(format!(
                            "{name}: weights sum to {sum}, expected 1"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            source,
            target,
            rules,
        })
    }

    /// Parses a mapping file: `{target: {"copy": name} | {"avg": [[name, w], ...]}}`.
    pub fn from_json(text: &str, source: JointLayout, target: JointLayout) -> Result<Self> {
        let specs: BTreeMap<String, RuleSpec> =
            serde_json::from_str(text).map_err(|e| Error::parse("joint mapping", e))?;
        let src_index = |name: &str| {
            source.index_of(name).ok_or_else(|| {
                Error::validation(format!("mapping references unknown source joint {name:?}"))
            })
        };
        for key in specs.keys() {
            if target.index_of(key).is_none() {
                return Err(Error::validation(format!(
                    "mapping defines unknown target joint {key:?}"
                )));
            }
        }
        let mut rules = Vec::with_capacity(target.joint_count());
        for name in target.joint_names() {
            let spec = specs.get(name).ok_or_else(|| {
                Error::validation(format!("mapping has no rule for target joint {name:?}"))
            })?;
            rules.push(match spec {
                RuleSpec::Copy(s) => MappingRule::CopyFrom(src_index(s)?),
                RuleSpec::Avg(terms) => MappingRule::WeightedAverage(
                    terms
                        .iter()
                        .map(|(s, w)| Ok((src_index(s)?, *w)))
                        .collect::<Result<_>>()?,
                ),
            });
        }
        Self::new(source, target, rules)
    }

    pub fn from_file(path: &std::path::Path, source: JointLayout, target: JointLayout) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, source, target)
    }

    /// Anatomical-midpoint mapping from the 44-marker set to the 17-joint layout.
    pub fn default_pd44_to_h36m() -> Result<Self> {
        Self::from_json(
            DEFAULT_PD44_TO_H36M,
            JointLayout::builtin(PD44)?,
            JointLayout::builtin(H36M17)?,
        )
    }

    pub fn identity(layout: JointLayout) -> Self {
        let rules = (0..layout.joint_count()).map(MappingRule::CopyFrom).collect();
        Self {
            source: layout.clone(),
            target: layout,
            rules,
        }
    }

    pub fn source(&self) -> &JointLayout {
        &self.source
    }

    pub fn target(&self) -> &JointLayout {
        &self.target
    }

    pub fn rules(&self) -> &[MappingRule] {
        &self.rules
    }

    pub fn is_copy_only(&self) -> bool {
        self.rules.iter().all(|r| matches!(r, MappingRule::CopyFrom(_)))
    }
}

/// Rewrites a walk into the mapping's target layout.
pub fn transform_layout(walk: &RawWalk, mapping: &JointMapping) -> Result<RawWalk> {
    if walk.layout != mapping.source.id() {
        return Err(Error::validation(format!(
            "walk {} has layout {}, mapping expects {}",
            walk.walk_id,
            walk.layout,
            mapping.source.id()
        )));
    }
    let src = &walk.motion;
    if src.joint_count() != mapping.source.joint_count() {
        return Err(Error::validation(format!(
            "walk {} has {} joints, layout {} has {}",
            walk.walk_id,
            src.joint_count(),
            mapping.source.id(),
            mapping.source.joint_count()
        )));
    }
    let d = src.dims();
    let mut data = Vec::with_capacity(src.frame_count() * mapping.rules.len() * d);
    let mut acc = vec![0.0; d];
    for f in 0..src.frame_count() {
        for rule in &mapping.rules {
            match rule {
                MappingRule::CopyFrom(s) => data.extend_from_slice(src.point(f, *s)),
                MappingRule::WeightedAverage(terms) => {
                    acc.iter_mut().for_each(|v| *v = 0.0);
                    for &(s, w) in terms {
                        for (a, p) in acc.iter_mut().zip(src.point(f, s)) {
                            *a += w * p;
                        }
                    }
                    data.extend_from_slice(&acc);
                }
            }
        }
    }
    let motion = Motion::new(mapping.rules.len(), src.axes().to_vec(), data)?;
    Ok(RawWalk {
        layout: mapping.target.id().to_string(),
        motion,
        ..walk.clone()
    })
}
