//! Synthetic embryo images with known ground truth.
//!
//! A phantom is an elliptical body with one or two dark eyes near the head
//! and, optionally, a swim bladder drawn as a dark ring around a light
//! interior. The scene is defined in body-centred canonical coordinates
//! (head towards −x) and placed in the frame by a jittered similarity pose.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::classifier::Label;
use crate::error::{Error, Result};
use crate::imaging::{Affine2D, BinaryMask, GrayImage, PointF};
use crate::preprocessing::Orientation;

/// Supersampling factor per axis used to anti-alias edges.
const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseJitter {
    /// Maximum absolute shift per axis, pixels.
    pub translation: f64,
    /// Maximum absolute rotation, degrees.
    pub rotation: f64,
    /// Maximum relative scale deviation.
    pub scale: f64,
}

impl PoseJitter {
    pub const NONE: PoseJitter = PoseJitter {
        translation: 0.0,
        rotation: 0.0,
        scale: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub seed: u64,
    pub with_bladder: bool,
    pub orientation: Orientation,
    /// Frame size `(width, height)`.
    pub dims: (usize, usize),
    /// Body semi-axes `(along, across)` in pixels.
    pub body_axes: (f64, f64),
    /// Outer radius of the bladder ring.
    pub bladder_radius: f64,
    /// Ring thickness; the light interior has radius `bladder_radius - ring_width`.
    pub ring_width: f64,
    pub interior_level: u8,
    pub ring_level: u8,
    pub body_level: u8,
    pub background_level: u8,
    pub eye_level: u8,
    pub noise_sigma: f64,
    pub pose_jitter: PoseJitter,
}

impl PhantomSpec {
    /// Defaults for a given view. Levels: background 10, body 120, ring 40,
    /// interior 190, noise σ = 6.
    pub fn new(orientation: Orientation, with_bladder: bool, seed: u64) -> Self {
        let (body_axes, bladder_radius) = match orientation {
            Orientation::Dorsal => ((70.0, 30.0), 15.0),
            Orientation::Lateral => ((74.0, 28.0), 13.5),
        };
        Self {
            seed,
            with_bladder,
            orientation,
            dims: (200, 160),
            body_axes,
            bladder_radius,
            ring_width: 4.0,
            interior_level: 190,
            ring_level: 40,
            body_level: 120,
            background_level: 10,
            eye_level: 30,
            noise_sigma: 6.0,
            pose_jitter: PoseJitter {
                translation: 8.0,
                rotation: 10.0,
                scale: 0.05,
            },
        }
    }

    /// Bladder center in canonical body coordinates.
    pub fn bladder_offset(&self) -> PointF {
        let (a, b) = self.body_axes;
        match self.orientation {
            Orientation::Dorsal => PointF::new(0.11 * a, 0.0),
            Orientation::Lateral => PointF::new(0.07 * a, -0.11 * b),
        }
    }

    /// Eye centers and radius in canonical body coordinates.
    fn eyes(&self) -> (Vec<PointF>, f64) {
        let (a, b) = self.body_axes;
        match self.orientation {
            Orientation::Dorsal => (
                vec![PointF::new(-0.64 * a, -0.37 * b), PointF::new(-0.64 * a, 0.37 * b)],
                6.0,
            ),
            Orientation::Lateral => (vec![PointF::new(-0.67 * a, -0.05 * b)], 7.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::SpecOutOfFrame(m.to_string()));
        if !(self.interior_level > self.body_level && self.body_level > self.ring_level) {
            return bad("levels must satisfy interior > body > ring");
        }
        if self.dims.0 < 8 || self.dims.1 < 8 {
            return bad("frame too small");
        }
        if self.ring_width <= 0.0 || self.ring_width >= self.bladder_radius {
            return bad("ring width must lie in (0, bladder_radius)");
        }
        if self.body_axes.0 <= 0.0 || self.body_axes.1 <= 0.0 || self.noise_sigma < 0.0 {
            return bad("body axes and noise must be positive");
        }
        Ok(())
    }
}

/// Generated image plus its ground truth.
#[derive(Debug, Clone)]
pub struct PhantomTruth {
    pub image: GrayImage,
    pub body: BinaryMask,
    /// Empty when the phantom has no bladder.
    pub bladder: BinaryMask,
    pub label: Label,
    pub orientation: Orientation,
    /// Maps canonical body coordinates to frame coordinates.
    pub pose: Affine2D,
    /// Where the bladder center lands (or would land) in the frame.
    pub bladder_center: PointF,
    pub seed: u64,
}

#[derive(Clone, Copy)]
enum Tissue {
    Background,
    Body,
    Eye,
    Ring,
    Interior,
}

fn tissue_at(spec: &PhantomSpec, p: PointF, eyes: &[PointF], eye_r: f64) -> Tissue {
    let (a, b) = spec.body_axes;
    if (p.x / a).powi(2) + (p.y / b).powi(2) > 1.0 {
        return Tissue::Background;
    }
    if eyes.iter().any(|e| p.distance(e) <= eye_r) {
        return Tissue::Eye;
    }
    if spec.with_bladder {
        let d = p.distance(&spec.bladder_offset());
        if d <= spec.bladder_radius - spec.ring_width {
            return Tissue::Interior;
        }
        if d <= spec.bladder_radius {
            return Tissue::Ring;
        }
    }
    Tissue::Body
}

fn level(spec: &PhantomSpec, t: Tissue) -> f64 {
    (match t {
        Tissue::Background => spec.background_level,
        Tissue::Body => spec.body_level,
        Tissue::Eye => spec.eye_level,
        Tissue::Ring => spec.ring_level,
        Tissue::Interior => spec.interior_level,
    }) as f64
}

/// Renders one phantom. Fully determined by `spec` (including its seed).
pub fn generate_phantom(spec: &PhantomSpec) -> Result<PhantomTruth> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = spec.dims;
    let frame_center = PointF::new((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let j = spec.pose_jitter;
    let mut sym = |m: f64| if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
    let (dx, dy, rot, ds) = (sym(j.translation), sym(j.translation), sym(j.rotation), sym(j.scale));
    let pose = Affine2D::similarity_about(PointF::default(), rot, 1.0 + ds, frame_center.x + dx, frame_center.y + dy);
    let to_body = pose.inverse()?;

    // Body bounding box must stay inside the frame.
    let (a, b) = spec.body_axes;
    for k in 0..72 {
        let th = (k as f64 * 5.0).to_radians();
        let q = pose.apply(PointF::new(a * th.cos(), b * th.sin()));
        if q.x < 0.0 || q.y < 0.0 || q.x > w as f64 - 1.0 || q.y > h as f64 - 1.0 {
            return Err(Error::SpecOutOfFrame(format!(
                "body reaches ({:.1}, {:.1}) outside {w}x{h}",
                q.x, q.y
            )));
        }
    }

    let (eyes, eye_r) = spec.eyes();
    let noise = Normal::new(0.0, spec.noise_sigma.max(1e-12)).expect("finite sigma");
    let step = 1.0 / SUPERSAMPLE as f64;
    let mut data = Vec::with_capacity(w * h);
    let mut body = BinaryMask::new(w, h);
    let mut bladder = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = x as f64 - 0.5 + (sx as f64 + 0.5) * step;
                    let py = y as f64 - 0.5 + (sy as f64 + 0.5) * step;
                    let q = to_body.apply(PointF::new(px, py));
                    acc += level(spec, tissue_at(spec, q, &eyes, eye_r));
                }
            }
            let mean = acc / (SUPERSAMPLE * SUPERSAMPLE) as f64;
            let n = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            data.push((mean + n).round().clamp(0.0, 255.0) as u8);

            let q = to_body.apply(PointF::new(x as f64, y as f64));
            if (q.x / a).powi(2) + (q.y / b).powi(2) <= 1.0 {
                body.set(x, y, true);
                if spec.with_bladder && q.distance(&spec.bladder_offset()) <= spec.bladder_radius {
                    bladder.set(x, y, true);
                }
            }
        }
    }

    Ok(PhantomTruth {
        image: GrayImage::from_vec(w, h, data)?,
        body,
        bladder,
        label: if spec.with_bladder {
            Label::SwimBladder
        } else {
            Label::NoSwimBladder
        },
        orientation: spec.orientation,
        pose,
        bladder_center: pose.apply(spec.bladder_offset()),
        seed: spec.seed,
    })
}

/// Per-item seed derived from a cohort seed.
pub fn item_seed(cohort_seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(cohort_seed);
    rng.set_stream(index as u64 + 1);
    rng.random()
}

/// Label/orientation counts of a cohort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortShape {
    pub with_dorsal: usize,
    pub with_lateral: usize,
    pub without_dorsal: usize,
    pub without_lateral: usize,
}

impl CohortShape {
    /// 202 embryos with a bladder (196 dorsal, 6 lateral) and 59 without
    /// (43 dorsal, 16 lateral).
    pub const SCREENING: CohortShape = CohortShape {
        with_dorsal: 196,
        with_lateral: 6,
        without_dorsal: 43,
        without_lateral: 16,
    };

    pub fn total(&self) -> usize {
        self.with_dorsal + self.with_lateral + self.without_dorsal + self.without_lateral
    }

    /// `n` embryos of one orientation, `round(n · fraction_with)` of them
    /// with a bladder.
    pub fn single_view(n: usize, fraction_with: f64, orientation: Orientation) -> Self {
        let with = ((n as f64) * fraction_with.clamp(0.0, 1.0)).round() as usize;
        let without = n - with;
        match orientation {
            Orientation::Dorsal => CohortShape {
                with_dorsal: with,
                with_lateral: 0,
                without_dorsal: without,
                without_lateral: 0,
            },
            Orientation::Lateral => CohortShape {
                with_dorsal: 0,
                with_lateral: with,
                without_dorsal: 0,
                without_lateral: without,
            },
        }
    }
}

/// Generates a shuffled cohort of the given shape. `base` supplies every
/// field except seed, orientation and bladder presence.
pub fn generate_cohort_shaped(shape: CohortShape, base: &PhantomSpec, seed: u64) -> Result<Vec<PhantomTruth>> {
    use rand::seq::SliceRandom;
    use rayon::prelude::*;

    let mut kinds = Vec::with_capacity(shape.total());
    kinds.extend(std::iter::repeat_n((true, Orientation::Dorsal), shape.with_dorsal));
    kinds.extend(std::iter::repeat_n((true, Orientation::Lateral), shape.with_lateral));
    kinds.extend(std::iter::repeat_n((false, Orientation::Dorsal), shape.without_dorsal));
    kinds.extend(std::iter::repeat_n((false, Orientation::Lateral), shape.without_lateral));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kinds.shuffle(&mut rng);

    kinds
        .into_par_iter()
        .enumerate()
        .map(|(i, (with_bladder, orientation))| {
            let view = PhantomSpec::new(orientation, with_bladder, 0);
            let spec = PhantomSpec {
                seed: item_seed(seed, i),
                with_bladder,
                orientation,
                body_axes: if orientation == base.orientation { base.body_axes } else { view.body_axes },
                bladder_radius: if orientation == base.orientation {
                    base.bladder_radius
                } else {
                    view.bladder_radius
                },
                ..base.clone()
            };
            generate_phantom(&spec)
        })
        .collect()
}

/// `n` phantoms in the orientation of `base`, `round(n · fraction_with)` of
/// them with a bladder.
pub fn generate_cohort(n: usize, fraction_with: f64, base: &PhantomSpec, seed: u64) -> Result<Vec<PhantomTruth>> {
    if n < 2 {
        return Err(Error::InvalidConfig("a cohort needs at least 2 phantoms".into()));
    }
    generate_cohort_shaped(CohortShape::single_view(n, fraction_with, base.orientation), base, seed)
}
