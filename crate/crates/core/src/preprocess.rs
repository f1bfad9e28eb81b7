//! Resampling, fixed-length clipping and training-time augmentation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{AxisRole, Motion, RawWalk};
use crate::error::{Error, Result};
use crate::seeding::rng_for;
use crate::skeleton::{project_2d, root_center_and_scale, to_h36m17, JointLayout, JointMapping};

pub const DEFAULT_CLIP_LEN: usize = 81;
pub const DEFAULT_EVAL_STRIDE: usize = 81;
pub const DEFAULT_TRAIN_STRIDE: usize = 27;
pub const DEFAULT_TARGET_FPS: f64 = 30.0;

/// Resamples onto timestamps `k / target_fps` for `k < ceil(F * target / fps)`,
/// interpolating each coordinate linearly. Timestamps past the last source
/// frame hold the final pose.
pub fn resample(walk: &RawWalk, target_fps: f64) -> Result<RawWalk> {
    if !(target_fps.is_finite() && target_fps > 0.0) {
        return Err(Error::validation(format!("target fps must be positive, got {target_fps}")));
    }
    let f_in = walk.frame_count();
    if f_in < 2 {
        return Err(Error::validation(format!(
            "walk {}: resampling needs at least 2 frames",
            walk.walk_id
        )));
    }
    let n_out = resampled_len(f_in, walk.fps, target_fps);
    let m = &walk.motion;
    let stride = m.frame(0).len();
    let mut data = Vec::with_capacity(n_out * stride);
    for k in 0..n_out {
        let pos = k as f64 * walk.fps / target_fps;
        let i0 = (pos.floor() as usize).min(f_in - 1);
        let t = pos - i0 as f64;
        if i0 == f_in - 1 || t == 0.0 {
            data.extend_from_slice(m.frame(i0));
        } else {
            let a = m.frame(i0);
            let b = m.frame(i0 + 1);
            data.extend(a.iter().zip(b).map(|(x, y)| x + (y - x) * t));
        }
    }
    Ok(RawWalk {
        fps: target_fps,
        motion: Motion::new(m.joint_count(), m.axes().to_vec(), data)?,
        ..walk.clone()
    })
}

/// Output frame count of [`resample`].
pub fn resampled_len(frames: usize, source_fps: f64, target_fps: f64) -> usize {
    let exact = frames as f64 * target_fps / source_fps;
    // guard against 30.000000000000004-style rounding
    ((exact - 1e-9).ceil() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig {
    pub clip_len: usize,
    pub stride: usize,
    /// Frame rate clips are expected at.
    pub fps: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            clip_len: DEFAULT_CLIP_LEN,
            stride: DEFAULT_EVAL_STRIDE,
            fps: DEFAULT_TARGET_FPS,
        }
    }
}

/// A fixed-length window of one walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub source_walk_id: String,
    pub clip_index: usize,
    pub start_frame: usize,
    /// Set when the walk was shorter than one clip and was edge-padded.
    pub padded: bool,
    pub fps: f64,
    pub layout: String,
    pub motion: Motion,
}

impl Clip {
    pub fn len(&self) -> usize {
        self.motion.frame_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> usize {
        self.motion.dims()
    }
}

/// Options of the walk-to-clips chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepareConfig {
    pub clips: ClipConfig,
    /// Root-centre and scale-normalize before clipping.
    pub normalize: bool,
    /// Keep only these two axes.
    pub project_2d: Option<(AxisRole, AxisRole)>,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self { clips: ClipConfig::default(), normalize: true, project_2d: None }
    }
}

/// 17-joint layout, optional normalization and projection, resampling to the
/// clip frame rate, clipping.
pub fn prepare_clips(walk: &RawWalk, mapping: Option<&JointMapping>, cfg: &PrepareConfig) -> Result<Vec<Clip>> {
    let mut w = to_h36m17(walk, mapping)?;
    if cfg.normalize {
        w = root_center_and_scale(&w)?.walk;
    }
    if let Some(plane) = cfg.project_2d {
        w = project_2d(&w, plane)?;
    }
    if (w.fps - cfg.clips.fps).abs() > 1e-9 {
        w = resample(&w, cfg.clips.fps)?;
    }
    clip_walk(&w, &cfg.clips)
}

/// Number of clips [`clip_walk`] produces for a walk of `frames` frames.
pub fn clip_count(frames: usize, clip_len: usize, stride: usize) -> usize {
    if frames < clip_len {
        1
    } else {
        (frames - clip_len) / stride + 1
    }
}

/// Cuts a walk into `floor((F - L) / stride) + 1` windows of `L` frames. A walk
/// shorter than `L` yields one clip padded by repeating its first and last
/// frames (the extra frame of an odd pad goes at the back).
pub fn clip_walk(walk: &RawWalk, cfg: &ClipConfig) -> Result<Vec<Clip>> {
    if cfg.clip_len == 0 || cfg.stride == 0 {
        return Err(Error::validation("clip length and stride must be positive"));
    }
    if (walk.fps - cfg.fps).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "walk {} is at {} fps, clips expect {} fps",
            walk.walk_id, walk.fps, cfg.fps
        )));
    }
    let f = walk.frame_count();
    if f == 0 {
        return Err(Error::validation(format!("walk {} has no frames", walk.walk_id)));
    }
    let make = |clip_index, start_frame, padded, motion| Clip {
        source_walk_id: walk.walk_id.clone(),
        clip_index,
        start_frame,
        padded,
        fps: walk.fps,
        layout: walk.layout.clone(),
        motion,
    };
    if f < cfg.clip_len {
        let pad = cfg.clip_len - f;
        let front = pad / 2;
        let back = pad - front;
        let m = &walk.motion;
        let mut data = Vec::with_capacity(cfg.clip_len * m.frame(0).len());
        for _ in 0..front {
            data.extend_from_slice(m.frame(0));
        }
        data.extend_from_slice(m.data());
        for _ in 0..back {
            data.extend_from_slice(m.frame(f - 1));
        }
        let motion = Motion::new(m.joint_count(), m.axes().to_vec(), data)?;
        return Ok(vec![make(0, 0, true, motion)]);
    }
    Ok((0..clip_count(f, cfg.clip_len, cfg.stride))
        .map(|i| {
            let start = i * cfg.stride;
            make(i, start, false, walk.motion.slice_frames(start, cfg.clip_len))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub rotation_max_deg: f64,
    pub noise_std_m: f64,
    pub mirror_prob: f64,
    pub axis_mask_prob: f64,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            rotation_max_deg: 15.0,
            noise_std_m: 0.005,
            mirror_prob: 0.5,
            axis_mask_prob: 0.1,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn none() -> Self {
        Self {
            rotation_max_deg: 0.0,
            noise_std_m: 0.0,
            mirror_prob: 0.0,
            axis_mask_prob: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("mirror_prob", self.mirror_prob), ("axis_mask_prob", self.axis_mask_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        for (name, v) in [("rotation_max_deg", self.rotation_max_deg), ("noise_std_m", self.noise_std_m)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Applies rotation, noise, mirroring and axis masking, in that order. The
/// random draws depend only on `(cfg.seed, walk_id, clip_index)`.
pub fn augment(clip: &Clip, cfg: &AugmentationConfig) -> Result<Clip> {
    cfg.validate()?;
    let mut rng = rng_for(
        cfg.seed,
        &[clip.source_walk_id.as_str().into(), clip.clip_index.into()],
    );
    // Draw everything up front so each augmentation's stream is fixed
    // regardless of which others are enabled.
    let angle_deg = rng.gen_range(-1.0..=1.0) * cfg.rotation_max_deg;
    let noise_seed: u64 = rng.gen();
    let do_mirror = rng.gen::<f64>() < cfg.mirror_prob;
    let do_mask = rng.gen::<f64>() < cfg.axis_mask_prob;
    let mask_axis = rng.gen_range(0..clip.dims());

    let mut out = clip.clone();
    if angle_deg != 0.0 {
        rotate_clip(&mut out.motion, angle_deg.to_radians());
    }
    if cfg.noise_std_m > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_std_m)
            .map_err(|e| Error::validation(format!("noise distribution: {e}")))?;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);
        for v in out.motion.data_mut() {
            *v += normal.sample(&mut noise_rng);
        }
    }
    if do_mirror {
        let layout = JointLayout::builtin(&clip.layout)?;
        mirror_motion(&mut out.motion, &layout.mirror_map());
    }
    if do_mask {
        mask_axis_of(&mut out.motion, mask_axis);
    }
    Ok(out)
}

/// Rotates every frame about the vertical through the clip's mean root
/// position. Without a vertical axis (a 2D sagittal or frontal projection)
/// the rotation is taken in the image plane instead.
pub fn rotate_clip(motion: &mut Motion, angle_rad: f64) {
    let d = motion.dims();
    let (a, b) = match (motion.component(AxisRole::Up), d) {
        (Some(_), 3) => {
            let ap = motion.component(AxisRole::Ap).expect("3D motion has ap");
            let ml = motion.component(AxisRole::Ml).expect("3D motion has ml");
            (ap, ml)
        }
        (_, 2) => (0, 1),
        _ => return,
    };
    let frames = motion.frame_count();
    let (mut ca, mut cb) = (0.0, 0.0);
    for f in 0..frames {
        ca += motion.coord(f, 0, a);
        cb += motion.coord(f, 0, b);
    }
    ca /= frames as f64;
    cb /= frames as f64;
    let (s, c) = angle_rad.sin_cos();
    for p in motion.data_mut().chunks_exact_mut(d) {
        let x = p[a] - ca;
        let y = p[b] - cb;
        p[a] = ca + c * x - s * y;
        p[b] = cb + s * x + c * y;
    }
}

/// Reflects across the sagittal plane and swaps left/right joints.
pub fn mirror_motion(motion: &mut Motion, mirror_map: &[usize]) {
    let ml = motion.component(AxisRole::Ml);
    let original = motion.clone();
    for f in 0..motion.frame_count() {
        for (j, &src) in mirror_map.iter().enumerate() {
            let p = motion.point_mut(f, j);
            p.copy_from_slice(original.point(f, src));
            if let Some(c) = ml {
                p[c] = -p[c];
            }
        }
    }
}

pub fn mask_axis_of(motion: &mut Motion, component: usize) {
    let d = motion.dims();
    for p in motion.data_mut().chunks_exact_mut(d) {
        p[component] = 0.0;
    }
}
