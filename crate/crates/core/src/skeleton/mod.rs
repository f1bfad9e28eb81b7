//! Joint layouts, layout conversion, projection and normalization.

mod layout;
mod mapping;

pub use layout::{h36m, JointLayout, H36M17, PD44};
pub use mapping::{transform_layout, JointMapping, MappingRule};

use crate::dataset::{AxisRole, Motion, RawWalk};
use crate::error::{Error, Result};

/// Brings a walk into the 17-joint layout: unchanged when it already is,
/// otherwise through `mapping` (the built-in 44-marker mapping by default).
pub fn to_h36m17(walk: &RawWalk, mapping: Option<&JointMapping>) -> Result<RawWalk> {
    if walk.layout == H36M17 {
        return Ok(walk.clone());
    }
    match mapping {
        Some(m) => transform_layout(walk, m),
        None => transform_layout(walk, &JointMapping::default_pd44_to_h36m()?),
    }
}

/// Orthographic projection onto two anatomical axes; the remaining axis is dropped.
pub fn project_2d(walk: &RawWalk, plane: (AxisRole, AxisRole)) -> Result<RawWalk> {
    let m = &walk.motion;
    if plane.0 == plane.1 {
        return Err(Error::validation(format!(
            "projection plane needs two distinct axes, got {} twice",
            plane.0.as_str()
        )));
    }
    if m.dims() != 3 {
        return Err(Error::validation(format!(
            "walk {} is already {}D",
            walk.walk_id,
            m.dims()
        )));
    }
    let comp = |role: AxisRole| {
        m.component(role).ok_or_else(|| {
            Error::validation(format!("walk {} has no {} axis", walk.walk_id, role.as_str()))
        })
    };
    let (u, v) = (comp(plane.0)?, comp(plane.1)?);
    let mut data = Vec::with_capacity(m.frame_count() * m.joint_count() * 2);
    for p in m.data().chunks_exact(3) {
        data.push(p[u]);
        data.push(p[v]);
    }
    let motion = Motion::new(m.joint_count(), vec![plane.0, plane.1], data)?;
    Ok(RawWalk {
        motion,
        ..walk.clone()
    })
}

/// A root-centred, unit-scaled walk plus the factor that was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedWalk {
    pub walk: RawWalk,
    /// Multiply normalized coordinates by `1 / scale` to get back to meters.
    pub scale: f64,
}

/// Moves the root joint to the origin on every frame and rescales so that the
/// median mid-hip to mid-shoulder distance is 1.
pub fn root_center_and_scale(walk: &RawWalk) -> Result<NormalizedWalk> {
    let layout = JointLayout::builtin(&walk.layout)?;
    let lh = layout.require("l_hip")?;
    let rh = layout.require("r_hip")?;
    let ls = layout.require("l_shoulder")?;
    let rs = layout.require("r_shoulder")?;
    let m = &walk.motion;
    let d = m.dims();

    let mut torso: Vec<f64> = (0..m.frame_count())
        .map(|f| {
            (0..d)
                .map(|c| {
                    let hip = 0.5 * (m.coord(f, lh, c) + m.coord(f, rh, c));
                    let sh = 0.5 * (m.coord(f, ls, c) + m.coord(f, rs, c));
                    (sh - hip).powi(2)
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    torso.sort_by(f64::total_cmp);
    let n = torso.len();
    let median = if n % 2 == 1 {
        torso[n / 2]
    } else {
        0.5 * (torso[n / 2 - 1] + torso[n / 2])
    };
    if !(median.is_finite() && median > 0.0) {
        return Err(Error::validation(format!(
            "walk {}: degenerate hip-to-shoulder distance",
            walk.walk_id
        )));
    }
    let scale = 1.0 / median;

    let mut out = m.clone();
    for f in 0..out.frame_count() {
        let root: Vec<f64> = out.point(f, 0).to_vec();
        for p in out.frame_mut(f).chunks_exact_mut(d) {
            for (v, r) in p.iter_mut().zip(&root) {
                *v = (*v - r) * scale;
            }
        }
    }
    Ok(NormalizedWalk {
        walk: RawWalk {
            motion: out,
            ..walk.clone()
        },
        scale,
    })
}
