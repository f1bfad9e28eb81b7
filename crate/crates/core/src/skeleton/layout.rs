use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of the standardized 17-joint Human3.6M layout.
pub const H36M17: &str = "h36m17";
/// Identifier of the 44-marker motion-capture layout.
pub const PD44: &str = "pd44";

/// Joint indices of the 17-joint layout.
pub mod h36m {
    pub const PELVIS: usize = 0;
    pub const R_HIP: usize = 1;
    pub const R_KNEE: usize = 2;
    pub const R_ANKLE: usize = 3;
    pub const L_HIP: usize = 4;
    pub const L_KNEE: usize = 5;
    pub const L_ANKLE: usize = 6;
    pub const SPINE: usize = 7;
    pub const THORAX: usize = 8;
    pub const NECK: usize = 9;
    pub const HEAD: usize = 10;
    pub const L_SHOULDER: usize = 11;
    pub const L_ELBOW: usize = 12;
    pub const L_WRIST: usize = 13;
    pub const R_SHOULDER: usize = 14;
    pub const R_ELBOW: usize = 15;
    pub const R_WRIST: usize = 16;

    pub(super) const NAMES: [&str; 17] = [
        "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle", "spine", "thorax",
        "neck", "head", "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist",
    ];
    pub(super) const PARENTS: [Option<usize>; 17] = [
        None,
        Some(0),
        Some(1),
        Some(2),
        Some(0),
        Some(4),
        Some(5),
        Some(0),
        Some(7),
        Some(8),
        Some(9),
        Some(8),
        Some(11),
        Some(12),
        Some(8),
        Some(14),
        Some(15),
    ];
}

// (marker, parent marker); the first entry is the root.
const PD44_TREE: [(&str, Option<&str>); 44] = [
    ("SACR", None),
    ("LASI", Some("SACR")),
    ("RASI", Some("SACR")),
    ("LPSI", Some("SACR")),
    ("RPSI", Some("SACR")),
    ("T10", Some("SACR")),
    ("STRN", Some("T10")),
    ("C7", Some("T10")),
    ("CLAV", Some("C7")),
    ("RBAK", Some("C7")),
    ("LFHD", Some("C7")),
    ("RFHD", Some("C7")),
    ("LBHD", Some("C7")),
    ("RBHD", Some("C7")),
    ("LSHO", Some("C7")),
    ("LUPA", Some("LSHO")),
    ("LELB", Some("LUPA")),
    ("LFRM", Some("LELB")),
    ("LWRA", Some("LFRM")),
    ("LWRB", Some("LFRM")),
    ("LFIN", Some("LWRA")),
    ("RSHO", Some("C7")),
    ("RUPA", Some("RSHO")),
    ("RELB", Some("RUPA")),
    ("RFRM", Some("RELB")),
    ("RWRA", Some("RFRM")),
    ("RWRB", Some("RFRM")),
    ("RFIN", Some("RWRA")),
    ("LTHI", Some("LASI")),
    ("LKNE", Some("LTHI")),
    ("LKNM", Some("LTHI")),
    ("LTIB", Some("LKNE")),
    ("LANK", Some("LTIB")),
    ("LMED", Some("LTIB")),
    ("LHEE", Some("LANK")),
    ("LTOE", Some("LANK")),
    ("RTHI", Some("RASI")),
    ("RKNE", Some("RTHI")),
    ("RKNM", Some("RTHI")),
    ("RTIB", Some("RKNE")),
    ("RANK", Some("RTIB")),
    ("RMED", Some("RTIB")),
    ("RHEE", Some("RANK")),
    ("RTOE", Some("RANK")),
];

/// Named joints with a parent tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointLayout {
    id: String,
    joint_names: Vec<String>,
    parent_of: Vec<Option<usize>>,
}

impl JointLayout {
    pub fn new(
        id: impl Into<String>,
        joint_names: Vec<String>,
        parent_of: Vec<Option<usize>>,
    ) -> Result<Self> {
        let id = id.into();
        let n = joint_names.len();
        if n == 0 || parent_of.len() != n {
            return Err(Error::validation(format!(
                "layout {id}: names and parents must be non-empty and of equal length"
            )));
        }
        for (i, name) in joint_names.iter().enumerate() {
            if joint_names[..i].contains(name) {
                return Err(Error::validation(format!("layout {id}: duplicate joint {name}")));
            }
        }
        let roots = parent_of.iter().filter(|p| p.is_none()).count();
        if roots != 1 || parent_of[0].is_some() {
            return Err(Error::validation(format!(
                "layout {id}: joint 0 must be the single root"
            )));
        }
        for start in 0..n {
            let mut node = start;
            let mut steps = 0;
            while let Some(p) = parent_of[node] {
                if p >= n {
                    return Err(Error::validation(format!(
                        "layout {id}: parent index {p} out of range"
                    )));
                }
                node = p;
                steps += 1;
                if steps > n {
                    return Err(Error::validation(format!("layout {id}: parent cycle")));
                }
            }
        }
        Ok(Self {
            id,
            joint_names,
            parent_of,
        })
    }

    /// Looks up one of the built-in layouts.
    pub fn builtin(id: &str) -> Result<Self> {
        match id {
            H36M17 => Self::new(
                H36M17,
                h36m::NAMES.iter().map(|s| s.to_string()).collect(),
                h36m::PARENTS.to_vec(),
            ),
            PD44 => {
                let names: Vec<String> = PD44_TREE.iter().map(|(n, _)| n.to_string()).collect();
                let parents = PD44_TREE
                    .iter()
                    .map(|(_, p)| p.map(|p| names.iter().position(|n| n == p).expect("known parent")))
                    .collect();
                Self::new(PD44, names, parents)
            }
            other => Err(Error::validation(format!("unknown joint layout {other:?}"))),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn parent_of(&self, joint: usize) -> Option<usize> {
        self.parent_of[joint]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name).ok_or_else(|| {
            Error::validation(format!("layout {} has no joint named {name:?}", self.id))
        })
    }

    /// For every joint, the index of its left/right counterpart (itself for
    /// midline joints). Sides are recognised by `l_`/`r_` or `L`/`R` prefixes.
    pub fn mirror_map(&self) -> Vec<usize> {
        self.joint_names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let swapped = if let Some(rest) = name.strip_prefix("l_") {
                    Some(format!("r_{rest}"))
                } else if let Some(rest) = name.strip_prefix("r_") {
                    Some(format!("l_{rest}"))
                } else if let Some(rest) = name.strip_prefix('L') {
                    Some(format!("R{rest}"))
                } else {
                    name.strip_prefix('R').map(|rest| format!("L{rest}"))
                };
                swapped.and_then(|s| self.index_of(&s)).unwrap_or(i)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_valid_trees() {
        let h = JointLayout::builtin(H36M17).unwrap();
        assert_eq!(h.joint_count(), 17);
        assert_eq!(h.index_of("l_ankle"), Some(h36m::L_ANKLE));
        let p = JointLayout::builtin(PD44).unwrap();
        assert_eq!(p.joint_count(), 44);
        assert_eq!(p.parent_of(0), None);
    }

    #[test]
    fn mirror_map_is_an_involution() {
        for id in [H36M17, PD44] {
            let l = JointLayout::builtin(id).unwrap();
            let m = l.mirror_map();
            for i in 0..m.len() {
                assert_eq!(m[m[i]], i);
            }
        }
        let h = JointLayout::builtin(H36M17).unwrap().mirror_map();
        assert_eq!(h[h36m::L_WRIST], h36m::R_WRIST);
        assert_eq!(h[h36m::SPINE], h36m::SPINE);
        // RBAK has no left twin
        let p = JointLayout::builtin(PD44).unwrap();
        let rbak = p.index_of("RBAK").unwrap();
        assert_eq!(p.mirror_map()[rbak], rbak);
    }

    #[test]
    fn rejects_bad_trees() {
        let names = vec!["a".to_string(), "b".to_string()];
        assert!(JointLayout::new("t", names.clone(), vec![None, None]).is_err());
        assert!(JointLayout::new("t", names.clone(), vec![Some(1), Some(0)]).is_err());
        assert!(JointLayout::new("t", vec!["a".into(), "a".into()], vec![None, Some(0)]).is_err());
        assert!(JointLayout::new("t", names, vec![None, Some(0)]).is_ok());
        assert!(JointLayout::builtin("coco").is_err());
    }
}
