//! Mutual-information affine registration.
//!
//! The similarity is the mutual information of the joint intensity
//! histogram of fixed pixels against bilinearly sampled moving pixels,
//! restricted to the overlap. It is maximized coarse-to-fine over a
//! Gaussian pyramid with an adaptive-step pattern search on the six affine
//! coefficients.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{Affine2D, BinaryMask, GrayImage, PointF};

/// Joint occurrence table of (fixed bin, moving bin).
#[derive(Debug, Clone, PartialEq)]
pub struct JointHistogram {
    bins: usize,
    counts: Vec<u64>,
    total: u64,
}

impl JointHistogram {
    pub fn new(bins: usize) -> Self {
        assert!(bins >= 2, "need at least two bins");
        Self {
            bins,
            counts: vec![0; bins * bins],
            total: 0,
        }
    }

    #[inline]
    pub fn bin_of(&self, intensity: f64) -> usize {
        ((intensity * self.bins as f64 / 256.0) as usize).min(self.bins - 1)
    }

    #[inline]
    pub fn add(&mut self, fixed: f64, moving: f64) {
        let i = self.bin_of(fixed) * self.bins + self.bin_of(moving);
        self.counts[i] += 1;
        self.total += 1;
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Count at (fixed bin, moving bin).
    pub fn count(&self, f: usize, m: usize) -> u64 {
        self.counts[f * self.bins + m]
    }

    pub fn fixed_marginal(&self) -> Vec<u64> {
        (0..self.bins)
            .map(|f| (0..self.bins).map(|m| self.count(f, m)).sum())
            .collect()
    }

    pub fn moving_marginal(&self) -> Vec<u64> {
        (0..self.bins)
            .map(|m| (0..self.bins).map(|f| self.count(f, m)).sum())
            .collect()
    }

    /// Mutual information in bits; 0 for an empty table.
    pub fn mutual_information(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let n = self.total as f64;
        let pf = self.fixed_marginal();
        let pm = self.moving_marginal();
        let mut mi = 0.0;
        for f in 0..self.bins {
            if pf[f] == 0 {
                continue;
            }
            for m in 0..self.bins {
                let c = self.count(f, m);
                if c == 0 {
                    continue;
                }
                let c = c as f64;
                // p log2(p / (pf pm)) with counts: c/n · log2(c·n / (cf·cm))
                mi += c / n * (c * n / (pf[f] as f64 * pm[m] as f64)).log2();
            }
        }
        debug_assert!(mi > -1e-9, "negative mutual information {mi}");
        mi.max(0.0)
    }
}

/// Shannon entropy (bits) of an image's intensities in `bins` equal bins.
pub fn marginal_entropy(image: &GrayImage, bins: usize) -> f64 {
    let h = JointHistogram::new(bins);
    let mut counts = vec![0u64; bins];
    for &v in image.data() {
        counts[h.bin_of(v as f64)] += 1;
    }
    let n = image.data().len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationConfig {
    /// Pyramid depth (1 = full resolution only).
    pub levels: usize,
    pub iterations_per_level: usize,
    pub bins: usize,
    /// Initial translation step, in pixels of the current level.
    pub initial_step: f64,
    /// Initial step of the linear coefficients.
    pub initial_linear_step: f64,
    /// Search stops once the translation step falls below this.
    pub min_step: f64,
    /// Fraction of fixed pixels sampled per evaluation (1 = dense).
    pub sample_fraction: f64,
    pub seed: u64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            iterations_per_level: 200,
            bins: 32,
            initial_step: 2.0,
            initial_linear_step: 0.02,
            min_step: 0.01,
            sample_fraction: 1.0,
            seed: 0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.levels == 0 {
            return fail("levels must be ≥ 1");
        }
        if self.bins < 2 || self.bins > 256 {
            return fail("bins must lie in [2, 256]");
        }
        if !(self.min_step > 0.0 && self.initial_step > self.min_step) {
            return fail("need initial_step > min_step > 0");
        }
        if self.initial_linear_step <= 0.0 {
            return fail("initial_linear_step must be positive");
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return fail("sample_fraction must lie in (0, 1]");
        }
        Ok(())
    }

    /// `key=value` lines, one per field.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "levels={}", self.levels);
        let _ = writeln!(s, "iterations_per_level={}", self.iterations_per_level);
        let _ = writeln!(s, "bins={}", self.bins);
        let _ = writeln!(s, "initial_step={}", self.initial_step);
        let _ = writeln!(s, "initial_linear_step={}", self.initial_linear_step);
        let _ = writeln!(s, "min_step={}", self.min_step);
        let _ = writeln!(s, "sample_fraction={}", self.sample_fraction);
        let _ = writeln!(s, "seed={}", self.seed);
        s
    }

    /// Parses `key=value` lines over the defaults; blank lines and `#`
    /// comments are skipped.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("expected key=value, got '{line}'")))?;
            let v = v.trim();
            let bad = |_| Error::Format(format!("bad value for {}: '{v}'", k.trim()));
            match k.trim() {
                "levels" => cfg.levels = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "iterations_per_level" => {
                    cfg.iterations_per_level = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
                }
                "bins" => cfg.bins = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "initial_step" => cfg.initial_step = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "initial_linear_step" => {
                    cfg.initial_linear_step = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?
                }
                "min_step" => cfg.min_step = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "sample_fraction" => {
                    cfg.sample_fraction = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?
                }
                "seed" => cfg.seed = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                other => return Err(Error::Format(format!("unknown registration key '{other}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Registration {
    /// Pull map from fixed-frame coordinates into the moving image.
    pub transform: Affine2D,
    /// Mutual information at full resolution for `transform`.
    pub mutual_information: f64,
    /// Mutual information of the identity transform.
    pub identity_mutual_information: f64,
    /// Set when the search found nothing better than the identity.
    pub did_not_improve: bool,
}

/// Optional subset of fixed pixels used for evaluation.
struct Sampler {
    rows: Vec<Vec<usize>>,
}

impl Sampler {
    fn new(width: usize, height: usize, fraction: f64, seed: u64) -> Option<Self> {
        if fraction >= 1.0 {
            return None;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..height)
            .map(|_| (0..width).filter(|_| rng.random::<f64>() < fraction).collect())
            .collect();
        Some(Self { rows })
    }
}

fn joint_histogram(
    fixed: &GrayImage,
    moving: &GrayImage,
    t: &Affine2D,
    bins: usize,
    sampler: Option<&Sampler>,
) -> JointHistogram {
    let mut hist = JointHistogram::new(bins);
    let (w, h) = fixed.dims();
    for y in 0..h {
        let row_start = t.apply(PointF::new(0.0, y as f64));
        let mut visit = |x: usize| {
            let px = row_start.x + t.a11 * x as f64;
            let py = row_start.y + t.a21 * x as f64;
            if let Some(v) = moving.sample_bilinear(px, py) {
                hist.add(fixed.get(x, y) as f64, v);
            }
        };
        match sampler {
            Some(s) => s.rows[y].iter().for_each(|&x| visit(x)),
            None => (0..w).for_each(visit),
        }
    }
    hist
}

/// Mutual information (bits) between `fixed` and `moving` pulled through
/// `t`, over the overlap.
pub fn mutual_information(fixed: &GrayImage, moving: &GrayImage, t: &Affine2D, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::InvalidConfig("bins must be ≥ 2".into()));
    }
    let hist = joint_histogram(fixed, moving, t, bins, None);
    if hist.total() == 0 {
        return Err(Error::NoOverlap);
    }
    Ok(hist.mutual_information())
}

/// 5-tap binomial blur followed by 2× decimation.
pub fn downsample(image: &GrayImage) -> GrayImage {
    const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let (w, h) = image.dims();
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (0..5)
                .map(|k| K[k] * image.get(clamp(x as i64 + k as i64 - 2, w), y) as f64)
                .sum();
        }
    }
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    GrayImage::from_fn(nw, nh, |x, y| {
        let v: f64 = (0..5)
            .map(|k| K[k] * tmp[clamp(2 * y as i64 + k as i64 - 2, h) * w + 2 * x])
            .sum();
        (v + 0.5).floor().clamp(0.0, 255.0) as u8
    })
}

/// Pyramid from full resolution (index 0) down to `levels - 1`.
pub fn pyramid(image: &GrayImage, levels: usize) -> Vec<GrayImage> {
    let mut out = vec![image.clone()];
    for _ in 1..levels {
        let last = out.last().expect("non-empty");
        if last.width() < 8 || last.height() < 8 {
            break;
        }
        out.push(downsample(last));
    }
    out
}

/// Search directions in (a11, a12, a21, a22, sx, sy): the six axes plus a
/// small rotation and an isotropic scaling.
const DIRECTIONS: [[f64; 6]; 8] = [
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    [0.0, -1.0, 1.0, 0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
];

fn params_of(t: &Affine2D, center: PointF) -> [f64; 6] {
    let s = t.centered_shift(center);
    [t.a11, t.a12, t.a21, t.a22, s[0], s[1]]
}

fn transform_of(p: &[f64; 6], center: PointF) -> Affine2D {
    Affine2D::from_centered(center, [p[0], p[1], p[2], p[3]], [p[4], p[5]])
}

fn search_level(
    fixed: &GrayImage,
    moving: &GrayImage,
    start: Affine2D,
    cfg: &RegistrationConfig,
    sampler: Option<&Sampler>,
) -> (Affine2D, f64) {
    let center = PointF::new((fixed.width() as f64 - 1.0) / 2.0, (fixed.height() as f64 - 1.0) / 2.0);
    let eval = |p: &[f64; 6]| -> f64 {
        let t = transform_of(p, center);
        if !t.is_invertible() {
            return f64::NEG_INFINITY;
        }
        let hist = joint_histogram(fixed, moving, &t, cfg.bins, sampler);
        if hist.total() == 0 {
            f64::NEG_INFINITY
        } else {
            hist.mutual_information()
        }
    };
    let mut p = params_of(&start, center);
    let mut best = eval(&p);
    let mut step = 1.0;
    for _ in 0..cfg.iterations_per_level {
        if cfg.initial_step * step < cfg.min_step {
            break;
        }
        let scales = [cfg.initial_linear_step * step, cfg.initial_step * step];
        let mut winner: Option<([f64; 6], f64)> = None;
        for dir in DIRECTIONS.iter() {
            for sign in [1.0, -1.0] {
                let mut q = p;
                for k in 0..6 {
                    q[k] += sign * dir[k] * scales[k / 4];
                }
                let v = eval(&q);
                if v > best && winner.as_ref().is_none_or(|w| v > w.1) {
                    winner = Some((q, v));
                }
            }
        }
        match winner {
            Some((q, v)) => {
                p = q;
                best = v;
            }
            None => step *= 0.5,
        }
    }
    (transform_of(&p, center), best)
}

/// Coarse-to-fine maximization of mutual information over affine maps,
/// starting from the identity. Never returns a transform scoring below the
/// identity at full resolution.
pub fn register_affine(fixed: &GrayImage, moving: &GrayImage, cfg: &RegistrationConfig) -> Result<Registration> {
    register_affine_from(fixed, moving, cfg, Affine2D::identity())
}

/// As [`register_affine`], seeded with `initial`.
pub fn register_affine_from(
    fixed: &GrayImage,
    moving: &GrayImage,
    cfg: &RegistrationConfig,
    initial: Affine2D,
) -> Result<Registration> {
    cfg.validate()?;
    let identity_mi = mutual_information(fixed, moving, &Affine2D::identity(), cfg.bins)?;
    let fixed_pyr = pyramid(fixed, cfg.levels);
    let moving_pyr = pyramid(moving, cfg.levels.min(fixed_pyr.len()));
    let levels = fixed_pyr.len().min(moving_pyr.len());

    let mut current = initial;
    for level in (0..levels).rev() {
        let factor = (1u64 << level) as f64;
        let f = &fixed_pyr[level];
        let sampler = Sampler::new(f.width(), f.height(), cfg.sample_fraction, cfg.seed.wrapping_add(level as u64));
        let (t, _) = search_level(f, &moving_pyr[level], current.rescaled(factor), cfg, sampler.as_ref());
        current = t.rescaled(1.0 / factor);
    }

    let final_mi = match mutual_information(fixed, moving, &current, cfg.bins) {
        Ok(v) => v,
        Err(Error::NoOverlap) => f64::NEG_INFINITY,
        Err(e) => return Err(e),
    };
    let improved = final_mi > identity_mi;
    Ok(Registration {
        transform: if improved { current } else { Affine2D::identity() },
        mutual_information: if improved { final_mi } else { identity_mi },
        identity_mutual_information: identity_mi,
        did_not_improve: !improved,
    })
}

/// Nearest-neighbour warp of a label mask.
pub fn transform_mask(mask: &BinaryMask, t: &Affine2D) -> Result<BinaryMask> {
    crate::imaging::warp_mask(mask, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{warp_affine, Interpolation};
    use crate::phantom::{generate_phantom, PhantomSpec, PoseJitter};
    use crate::preprocessing::Orientation;

    fn two_level() -> GrayImage {
        GrayImage::from_fn(16, 8, |x, _| if x < 8 { 20 } else { 220 })
    }

    #[test]
    fn two_level_image_has_one_bit() {
        let img = two_level();
        let mi = mutual_information(&img, &img, &Affine2D::identity(), 32).unwrap();
        assert!((mi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_moving_has_zero_information() {
        let fixed = GrayImage::from_fn(20, 20, |x, y| (x * 13 + y * 7) as u8);
        let moving = GrayImage::filled(20, 20, 77);
        let t = Affine2D::similarity_about(PointF::new(10.0, 10.0), 13.0, 1.1, 1.5, -2.0);
        assert_eq!(mutual_information(&fixed, &moving, &t, 32).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_at_identity() {
        let a = GrayImage::from_fn(30, 20, |x, y| ((x * x + 3 * y) % 256) as u8);
        let b = GrayImage::from_fn(30, 20, |x, y| ((x * 11 + y * y) % 256) as u8);
        let ab = mutual_information(&a, &b, &Affine2D::identity(), 32).unwrap();
        let ba = mutual_information(&b, &a, &Affine2D::identity(), 32).unwrap();
        assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn self_information_is_entropy() {
        let img = GrayImage::from_fn(40, 30, |x, y| ((x * 37 + y * 91) % 256) as u8);
        let mi = mutual_information(&img, &img, &Affine2D::identity(), 32).unwrap();
        assert!((mi - marginal_entropy(&img, 32)).abs() < 1e-9);
    }

    #[test]
    fn no_overlap_detected() {
        let img = two_level();
        assert!(matches!(
            mutual_information(&img, &img, &Affine2D::translation(500.0, 0.0), 32),
            Err(Error::NoOverlap)
        ));
    }

    #[test]
    fn kv_roundtrip_and_validation() {
        let cfg = RegistrationConfig {
            seed: 17,
            sample_fraction: 0.5,
            ..RegistrationConfig::default()
        };
        assert_eq!(RegistrationConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
        assert!(RegistrationConfig::from_kv("levels=0").is_err());
        assert!(RegistrationConfig::from_kv("bogus=1").is_err());
        let bad = RegistrationConfig {
            min_step: 3.0,
            ..RegistrationConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    fn phantom(seed: u64) -> GrayImage {
        let spec = PhantomSpec {
            pose_jitter: PoseJitter::NONE,
            ..PhantomSpec::new(Orientation::Dorsal, true, seed)
        };
        generate_phantom(&spec).unwrap().image
    }

    #[test]
    fn self_registration_stays_at_identity() {
        let img = phantom(1);
        let r = register_affine(&img, &img, &RegistrationConfig::default()).unwrap();
        let t = r.transform;
        let lin = [t.a11 - 1.0, t.a12, t.a21, t.a22 - 1.0];
        assert!(lin.iter().all(|v| v.abs() < 0.01));
        assert!(t.tx.abs() < 0.5 && t.ty.abs() < 0.5);
    }

    #[test]
    fn recovers_translation() {
        let fixed = phantom(2);
        let moving = warp_affine(&fixed, &Affine2D::translation(7.0, 3.0), Interpolation::Bilinear).unwrap();
        let r = register_affine(&fixed, &moving, &RegistrationConfig::default()).unwrap();
        let c = PointF::new(99.5, 79.5);
        let s = r.transform.centered_shift(c);
        assert!((s[0] + 7.0).abs() < 0.5 && (s[1] + 3.0).abs() < 0.5, "{s:?}");
        assert!(r.mutual_information >= r.identity_mutual_information);
        assert!(!r.did_not_improve);
    }

    #[test]
    fn recovers_rotation() {
        let fixed = phantom(3);
        let c = PointF::new(99.5, 79.5);
        let g = Affine2D::similarity_about(c, 10.0, 1.0, 0.0, 0.0);
        let moving = warp_affine(&fixed, &g, Interpolation::Bilinear).unwrap();
        let r = register_affine(&fixed, &moving, &RegistrationConfig::default()).unwrap();
        let expected = g.inverse().unwrap().rotation_degrees();
        assert!((r.transform.rotation_degrees() - expected).abs() < 1.0, "{:?}", r.transform);
    }

    #[test]
    fn deterministic() {
        let fixed = phantom(4);
        let moving = warp_affine(&fixed, &Affine2D::translation(-4.0, 2.5), Interpolation::Bilinear).unwrap();
        let cfg = RegistrationConfig {
            sample_fraction: 0.5,
            seed: 3,
            ..RegistrationConfig::default()
        };
        let a = register_affine(&fixed, &moving, &cfg).unwrap();
        let b = register_affine(&fixed, &moving, &cfg).unwrap();
        assert_eq!(a.transform, b.transform);
    }

    #[test]
    fn mask_transforms() {
        let mut m = BinaryMask::new(32, 32);
        m.set(10, 10, true);
        assert_eq!(transform_mask(&m, &Affine2D::identity()).unwrap(), m);
        let moved = transform_mask(&m, &Affine2D::translation(-5.0, 0.0)).unwrap();
        assert!(moved.get(15, 10) && moved.count() == 1);

        // 1.2× enlargement of a radius-20 disk: pull map scales by 1/1.2.
        let disk = crate::morphology::disk_mask(100, 100, 50, 50, 20);
        let grow = Affine2D::similarity_about(PointF::new(50.0, 50.0), 0.0, 1.0 / 1.2, 0.0, 0.0);
        let big = transform_mask(&disk, &grow).unwrap();
        let expected = disk.count() as f64 / grow.determinant();
        assert!((big.count() as f64 - expected).abs() / expected < 0.10);
    }
}
