use std::io::{Read, Write};
use std::path::Path;

use super::{CoordinateConvention, Motion, RawWalk, WalkDescriptor};
use crate::error::{Error, Result};
use crate::skeleton::JointLayout;

/// Longest run of missing samples that is filled by interpolation.
pub const MAX_GAP_FRAMES: usize = 10;

const AXIS_SUFFIXES: [&str; 3] = ["x", "y", "z"];

fn expected_header(layout: &JointLayout) -> Vec<String> {
    let mut h = Vec::with_capacity(1 + 3 * layout.joint_count());
    h.push("frame".to_string());
    for name in layout.joint_names() {
        for s in AXIS_SUFFIXES {
            h.push(format!("{name}_{s}"));
        }
    }
    h
}

/// Loads the trajectory file a descriptor points at.
pub fn load_walk(descriptor: &WalkDescriptor, convention: &CoordinateConvention) -> Result<RawWalk> {
    let file = std::fs::File::open(&descriptor.file).map_err(|e| Error::io(&descriptor.file, e))?;
    let layout = JointLayout::builtin(&descriptor.layout)?;
    let context = descriptor.file.display().to_string();
    let motion = parse_trajectory(file, &layout, convention, &context)?;
    let walk = RawWalk {
        walk_id: descriptor.walk_id.clone(),
        participant: descriptor.participant.clone(),
        medication: descriptor.medication,
        label: descriptor.label,
        fps: descriptor.fps,
        layout: descriptor.layout.clone(),
        motion,
    };
    walk.validate()?;
    Ok(walk)
}

/// Parses a wide trajectory CSV. Empty (or `NaN`) fields mark missing samples;
/// runs of up to [`MAX_GAP_FRAMES`] are filled linearly between neighbours, or
/// held from the nearest valid sample at the sequence ends.
pub fn parse_trajectory<R: Read>(
    reader: R,
    layout: &JointLayout,
    convention: &CoordinateConvention,
    context: &str,
) -> Result<Motion> {
    convention.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(context, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let expected = expected_header(layout);
    if header.len() != expected.len() {
        let file_joints = header.len().saturating_sub(1) as f64 / 3.0;
        return Err(Error::validation(format!(
            "{context}: joint-count mismatch, file has {file_joints} joints per row, layout {} expects {}",
            layout.id(),
            layout.joint_count()
        )));
    }
    if header != expected {
        let (i, (got, want)) = header
            .iter()
            .zip(&expected)
            .enumerate()
            .find(|(_, (a, b))| a != b)
            .expect("headers differ");
        return Err(Error::validation(format!(
            "{context}: column {i} is {got:?}, layout {} expects {want:?}",
            layout.id()
        )));
    }

    let width = expected.len() - 1;
    let mut data = Vec::new();
    let mut frames = 0usize;
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::parse(context, e))?;
        if record.len() != expected.len() {
            return Err(Error::validation(format!(
                "{context}: row {row_idx} has {} fields, expected {}",
                record.len(),
                expected.len()
            )));
        }
        for field in record.iter().skip(1) {
            let v = if field.is_empty() || field.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|e| Error::parse(format!("{context} row {row_idx}"), e))?;
                if v.is_infinite() {
                    return Err(Error::validation(format!(
                        "{context}: infinite coordinate on row {row_idx}"
                    )));
                }
                v
            };
            data.push(v);
        }
        frames += 1;
    }
    if frames < 2 {
        return Err(Error::validation(format!(
            "{context}: needs at least 2 frames, found {frames}"
        )));
    }

    for col in 0..width {
        fill_gaps(&mut data, col, width, frames).map_err(|gap| {
            let joint = &layout.joint_names()[col / 3];
            Error::validation(format!(
                "{context}: {joint}_{} has a gap of {gap} frames (limit {MAX_GAP_FRAMES})",
                AXIS_SUFFIXES[col % 3]
            ))
        })?;
    }

    Motion::new(layout.joint_count(), convention.axis_roles(), data)
}

/// Fills NaN runs in column `col` of a row-major buffer. Returns the offending
/// gap length when a run cannot be filled.
fn fill_gaps(data: &mut [f64], col: usize, width: usize, frames: usize) -> Result<(), usize> {
    let at = |f: usize| f * width + col;
    let mut f = 0;
    while f < frames {
        if !data[at(f)].is_nan() {
            f += 1;
            continue;
        }
        let start = f;
        while f < frames && data[at(f)].is_nan() {
            f += 1;
        }
        let len = f - start;
        if len > MAX_GAP_FRAMES || len == frames {
            return Err(len);
        }
        match (start.checked_sub(1), (f < frames).then_some(f)) {
            (Some(prev), Some(next)) => {
                let a = data[at(prev)];
                let b = data[at(next)];
                let span = (next - prev) as f64;
                for g in start..f {
                    let t = (g - prev) as f64 / span;
                    data[at(g)] = a + (b - a) * t;
                }
            }
            (None, Some(next)) => {
                let b = data[at(next)];
                for g in start..f {
                    data[at(g)] = b;
                }
            }
            (Some(prev), None) => {
                let a = data[at(prev)];
                for g in start..f {
                    data[at(g)] = a;
                }
            }
            (None, None) => unreachable!("all-missing column handled above"),
        }
    }
    Ok(())
}

/// Writes a 3D walk in the trajectory CSV format. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_trajectory<W: Write>(walk: &RawWalk, writer: W) -> Result<()> {
    let layout = JointLayout::builtin(&walk.layout)?;
    if walk.motion.dims() != 3 {
        return Err(Error::validation("only 3D walks can be written as trajectories"));
    }
    let mut w = csv::Writer::from_writer(writer);
    let ser = |e: csv::Error| Error::parse("trajectory writer", e);
    w.write_record(expected_header(&layout)).map_err(ser)?;
    let mut row = Vec::with_capacity(1 + walk.motion.frame(0).len());
    for f in 0..walk.frame_count() {
        row.clear();
        row.push(f.to_string());
        row.extend(walk.motion.frame(f).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(ser)?;
    }
    w.flush().map_err(|e| Error::io("trajectory writer", e))?;
    Ok(())
}

/// Convenience wrapper writing straight to a path.
pub(crate) fn write_trajectory_file(walk: &RawWalk, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trajectory(walk, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthesize_gait, GaitSpec};

    fn h36m() -> JointLayout {
        JointLayout::builtin("h36m17").unwrap()
    }

    fn csv_for(layout: &JointLayout, rows: &[Vec<String>]) -> String {
        let mut s = expected_header(layout).join(",");
        s.push('\n');
        for (i, r) in rows.iter().enumerate() {
            s.push_str(&format!("{i},{}\n", r.join(",")));
        }
        s
    }

    fn constant_row(layout: &JointLayout, base: f64) -> Vec<String> {
        (0..layout.joint_count() * 3)
            .map(|k| (base + k as f64).to_string())
            .collect()
    }

    #[test]
    fn three_frames_seventeen_joints() {
        let l = h36m();
        let rows: Vec<_> = (0..3).map(|i| constant_row(&l, i as f64)).collect();
        let m = parse_trajectory(csv_for(&l, &rows).as_bytes(), &l, &CoordinateConvention::default(), "t")
            .unwrap();
        assert_eq!(m.frame_count(), 3);
        assert_eq!(m.joint_count(), 17);
        assert_eq!(m.coord(2, 0, 1), 3.0);
    }

    #[test]
    fn single_missing_joint_is_midpoint() {
        let l = h36m();
        let mut rows: Vec<_> = (0..3).map(|i| constant_row(&l, 10.0 * i as f64)).collect();
        // joint 4 on the middle frame
        for c in 12..15 {
            rows[1][c] = String::new();
        }
        let m = parse_trajectory(csv_for(&l, &rows).as_bytes(), &l, &CoordinateConvention::default(), "t")
            .unwrap();
        for c in 0..3 {
            let before = m.coord(0, 4, c);
            let after = m.coord(2, 4, c);
            assert_eq!(m.coord(1, 4, c), 0.5 * (before + after));
        }
    }

    #[test]
    fn forty_four_joint_rows_under_seventeen_declaration() {
        let l44 = JointLayout::builtin("pd44").unwrap();
        let rows: Vec<_> = (0..3).map(|i| constant_row(&l44, i as f64)).collect();
        let text = csv_for(&l44, &rows);
        let err = parse_trajectory(text.as_bytes(), &h36m(), &CoordinateConvention::default(), "t")
            .unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn long_gap_rejected_short_gap_at_edge_held() {
        let l = h36m();
        let mut rows: Vec<_> = (0..20).map(|i| constant_row(&l, i as f64)).collect();
        for r in rows.iter_mut().take(3) {
            r[0] = String::new();
        }
        let m = parse_trajectory(csv_for(&l, &rows).as_bytes(), &l, &CoordinateConvention::default(), "t")
            .unwrap();
        assert_eq!(m.coord(0, 0, 0), 3.0);

        for r in rows.iter_mut().skip(5).take(MAX_GAP_FRAMES + 1) {
            r[1] = "NaN".into();
        }
        let err = parse_trajectory(csv_for(&l, &rows).as_bytes(), &l, &CoordinateConvention::default(), "t")
            .unwrap_err();
        assert!(err.to_string().contains("gap of 11"), "{err}");
    }

    #[test]
    fn malformed_number_is_parse_error() {
        let l = h36m();
        let mut rows: Vec<_> = (0..3).map(|i| constant_row(&l, i as f64)).collect();
        rows[1][7] = "abc".into();
        let err = parse_trajectory(csv_for(&l, &rows).as_bytes(), &l, &CoordinateConvention::default(), "t")
            .unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn write_then_parse_is_identity() {
        let g = synthesize_gait(&GaitSpec {
            duration_s: 2.0,
            noise_std_m: 0.003,
            ..GaitSpec::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_trajectory(&g.walk, &mut buf).unwrap();
        let m = parse_trajectory(buf.as_slice(), &h36m(), &CoordinateConvention::default(), "t").unwrap();
        assert_eq!(m, g.walk.motion);
    }
}
