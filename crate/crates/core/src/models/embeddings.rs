use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::preprocess::{clip_count, resampled_len, Clip, ClipConfig};

pub const BASELINE_PROVIDER: &str = "baseline-stats";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClipRef {
    pub walk_id: String,
    pub clip_index: usize,
}

impl std::fmt::Display for ClipRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.walk_id, self.clip_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub clip_ref: ClipRef,
    pub values: Vec<f64>,
    pub provider_id: String,
}

/// Number of evaluation clips per walk.
pub type ClipPlan = BTreeMap<String, usize>;

/// Clip counts for every manifest walk once resampled to the clip frame
/// rate. Reads each trajectory for its length.
pub fn clip_plan(manifest: &DatasetManifest, clips: &ClipConfig) -> Result<ClipPlan> {
    manifest
        .walks
        .iter()
        .map(|d| {
            let walk = manifest.load_walk(d)?;
            let frames = resampled_len(walk.frame_count(), walk.fps, clips.fps);
            Ok((d.walk_id.clone(), clip_count(frames, clips.clip_len, clips.stride)))
        })
        .collect()
}

/// Embeddings of one provider, indexed by clip.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingSet {
    pub provider_id: String,
    pub dim: usize,
    pub by_clip: BTreeMap<ClipRef, Vec<f64>>,
    /// Planned clips without a row, in order.
    pub missing: Vec<ClipRef>,
}

impl EmbeddingSet {
    pub fn get(&self, walk_id: &str, clip_index: usize) -> Option<&[f64]> {
        self.by_clip
            .get(&ClipRef { walk_id: walk_id.to_string(), clip_index })
            .map(Vec::as_slice)
    }

    /// Embeddings of one walk in clip order.
    pub fn walk_clips<'a>(&'a self, walk_id: &'a str) -> impl Iterator<Item = (usize, &'a [f64])> + 'a {
        self.by_clip
            .range(ClipRef { walk_id: walk_id.to_string(), clip_index: 0 }..)
            .take_while(move |(k, _)| k.walk_id == walk_id)
            .map(|(k, v)| (k.clip_index, v.as_slice()))
    }

    pub fn insert(&mut self, e: Embedding) -> Result<()> {
        if self.by_clip.is_empty() && self.dim == 0 {
            self.dim = e.values.len();
        }
        if e.values.len() != self.dim {
            return Err(Error::validation(format!(
                "embedding {} has dimension {}, expected {}",
                e.clip_ref,
                e.values.len(),
                self.dim
            )));
        }
        if self.by_clip.insert(e.clip_ref.clone(), e.values).is_some() {
            return Err(Error::validation(format!("duplicate embedding for clip {}", e.clip_ref)));
        }
        Ok(())
    }
}

pub fn load_embeddings(path: &Path, plan: &ClipPlan, provider_id: &str) -> Result<EmbeddingSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(file, plan, provider_id)
}

/// Parses `walk_id,clip_index,e0,...` rows and checks them against the clip
/// plan.
pub fn read_embeddings<R: Read>(reader: R, plan: &ClipPlan, provider_id: &str) -> Result<EmbeddingSet> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = r.headers().map_err(|e| Error::parse("embeddings header", e))?.clone();
    let d = header.len().saturating_sub(2);
    let header_ok = header.get(0) == Some("walk_id")
        && header.get(1) == Some("clip_index")
        && d > 0
        && header.iter().skip(2).enumerate().all(|(k, h)| h == format!("e{k}"));
    if !header_ok {
        return Err(Error::parse("embeddings header", "expected walk_id,clip_index,e0,e1,..."));
    }
    let mut set = EmbeddingSet { provider_id: provider_id.to_string(), dim: d, ..EmbeddingSet::default() };
    for (i, rec) in r.records().enumerate() {
        let ctx = || format!("embeddings row {}", i + 2);
        let rec = rec.map_err(|e| Error::parse(ctx(), e))?;
        let walk_id = rec.get(0).unwrap_or("").to_string();
        let clip_index: usize = rec
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|e| Error::parse(ctx(), format!("clip_index: {e}")))?;
        let values: Vec<f64> = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>().map_err(|e| Error::parse(ctx(), format!("{v:?}: {e}"))))
            .collect::<Result<_>>()?;
        let Some(&count) = plan.get(&walk_id) else {
            return Err(Error::validation(format!("{}: unknown walk_id {walk_id:?}", ctx())));
        };
        if clip_index >= count {
            return Err(Error::validation(format!(
                "{}: walk {walk_id} has {count} clips, got clip_index {clip_index}",
                ctx()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!("{}: non-finite embedding value", ctx())));
        }
        set.insert(Embedding { clip_ref: ClipRef { walk_id, clip_index }, values, provider_id: provider_id.to_string() })?;
    }
    set.missing = plan
        .iter()
        .flat_map(|(w, &n)| (0..n).map(move |k| ClipRef { walk_id: w.clone(), clip_index: k }))
        .filter(|k| !set.by_clip.contains_key(k))
        .collect();
    Ok(set)
}

/// Writes rows in the layout [`read_embeddings`] expects; all embeddings
/// must share one dimension.
pub fn write_embeddings<W: std::io::Write>(writer: W, embeddings: &[Embedding]) -> Result<()> {
    let d = embeddings.first().map_or(0, |e| e.values.len());
    if embeddings.iter().any(|e| e.values.len() != d) {
        return Err(Error::validation("embeddings to write differ in dimension"));
    }
    let mut w = csv::Writer::from_writer(writer);
    let ser = |e: csv::Error| Error::parse("embeddings writer", e);
    let header: Vec<String> = ["walk_id".to_string(), "clip_index".to_string()]
        .into_iter()
        .chain((0..d).map(|k| format!("e{k}")))
        .collect();
    w.write_record(&header).map_err(ser)?;
    for e in embeddings {
        let mut row = vec![e.clip_ref.walk_id.clone(), e.clip_ref.clip_index.to_string()];
        row.extend(e.values.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(ser)?;
    }
    w.flush().map_err(|e| Error::io("embeddings writer", e))?;
    Ok(())
}

/// Statistical clip embedding: per joint and axis the mean, the standard
/// deviation and the mean absolute frame-to-frame change, as three
/// consecutive blocks of `joints × dims` values.
pub fn baseline_encoder(clip: &Clip) -> Embedding {
    let m = &clip.motion;
    let (joints, dims, n) = (m.joint_count(), m.dims(), m.frame_count());
    let k = joints * dims;
    let mut values = vec![0.0; 3 * k];
    for j in 0..joints {
        for c in 0..dims {
            let s = m.series(j, c);
            let slot = j * dims + c;
            let mean = s.iter().sum::<f64>() / n as f64;
            let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let diff = if n > 1 {
                s.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            values[slot] = mean;
            values[k + slot] = var.sqrt();
            values[2 * k + slot] = diff;
        }
    }
    Embedding {
        clip_ref: ClipRef { walk_id: clip.source_walk_id.clone(), clip_index: clip.clip_index },
        values,
        provider_id: BASELINE_PROVIDER.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthesize_gait, AxisRole, GaitSpec, Motion};
    use crate::preprocess::clip_walk;

    fn plan() -> ClipPlan {
        [("w1".to_string(), 2), ("w2".to_string(), 1)].into_iter().collect()
    }

    fn csv_rows(d: usize, rows: &[(&str, usize, usize)]) -> String {
        let mut s = String::from("walk_id,clip_index");
        for k in 0..d {
            s += &format!(",e{k}");
        }
        s.push('\n');
        for (w, c, dim) in rows {
            s += &format!("{w},{c}");
            for k in 0..*dim {
                s += &format!(",{}", k as f64 * 0.5);
            }
            s.push('\n');
        }
        s
    }

    #[test]
    fn complete_file_indexes_every_clip() {
        let text = csv_rows(512, &[("w1", 0, 512), ("w1", 1, 512), ("w2", 0, 512)]);
        let set = read_embeddings(text.as_bytes(), &plan(), "enc").unwrap();
        assert_eq!(set.dim, 512);
        assert_eq!(set.by_clip.len(), 3);
        assert!(set.missing.is_empty());
        assert_eq!(set.get("w1", 1).unwrap()[2], 1.0);
        assert_eq!(set.walk_clips("w1").map(|(k, _)| k).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn mixed_dimensions_are_rejected() {
        let text = csv_rows(512, &[("w1", 0, 512), ("w1", 1, 256)]);
        assert!(matches!(read_embeddings(text.as_bytes(), &plan(), "enc"), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_clip_is_reported() {
        let text = csv_rows(4, &[("w1", 0, 4), ("w2", 0, 4)]);
        let set = read_embeddings(text.as_bytes(), &plan(), "enc").unwrap();
        assert_eq!(set.missing, vec![ClipRef { walk_id: "w1".into(), clip_index: 1 }]);
    }

    #[test]
    fn unknown_walks_and_clips_are_rejected() {
        for rows in [&[("w9", 0, 4)][..], &[("w2", 1, 4)][..], &[("w1", 0, 4), ("w1", 0, 4)][..]] {
            let text = csv_rows(4, rows);
            assert!(matches!(read_embeddings(text.as_bytes(), &plan(), "enc"), Err(Error::Validation(_))));
        }
    }

    #[test]
    fn malformed_files_are_parse_errors() {
        assert!(matches!(read_embeddings("walk,clip,x\n".as_bytes(), &plan(), "e"), Err(Error::Parse { .. })));
        assert!(matches!(
            read_embeddings("walk_id,clip_index,e0\nw1,zero,1\n".as_bytes(), &plan(), "e"),
            Err(Error::Parse { .. })
        ));
    }

    fn clip_of(frames: Vec<Vec<[f64; 3]>>) -> Clip {
        Clip {
            source_walk_id: "w".into(),
            clip_index: 0,
            start_frame: 0,
            padded: false,
            fps: 30.0,
            layout: "h36m17".into(),
            motion: Motion::from_points(&frames, vec![AxisRole::Ap, AxisRole::Ml, AxisRole::Up]).unwrap(),
        }
    }

    fn walk_clip() -> Clip {
        let g = synthesize_gait(&GaitSpec { duration_s: 3.0, ..GaitSpec::default() }).unwrap();
        clip_walk(&g.walk, &ClipConfig::default()).unwrap().remove(0)
    }

    #[test]
    fn constant_clip_has_zero_spread() {
        let e = baseline_encoder(&clip_of(vec![vec![[1.0, 2.0, 3.0]; 17]; 81]));
        assert_eq!(e.values.len(), 17 * 3 * 3);
        assert!(e.values[51..].iter().all(|&v| v == 0.0));
        assert_eq!(&e.values[..3], &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn time_reversal_leaves_the_embedding_unchanged() {
        let clip = walk_clip();
        let n = clip.len();
        let frames: Vec<Vec<[f64; 3]>> = (0..n)
            .rev()
            .map(|f| (0..17).map(|j| {
                let p = clip.motion.point(f, j);
                [p[0], p[1], p[2]]
            }).collect())
            .collect();
        let a = baseline_encoder(&clip).values;
        let b = baseline_encoder(&clip_of(frames)).values;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn translation_moves_only_the_means() {
        let clip = walk_clip();
        let mut moved = clip.clone();
        let t = [0.5, -1.25, 2.0];
        moved.motion.translate(&t);
        let a = baseline_encoder(&clip).values;
        let b = baseline_encoder(&moved).values;
        let k = 17 * 3;
        for i in 0..k {
            assert!((b[i] - a[i] - t[i % 3]).abs() < 1e-12);
        }
        for i in k..3 * k {
            assert!((b[i] - a[i]).abs() < 1e-9);
        }
    }
}
