//! Per-orientation atlas: median template plus swim-bladder probability map.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::io::{read_gray, read_prob, write_gray, write_prob};
use crate::imaging::{
    barycenter, mean_stack, median_stack, warp_affine, warp_mask, warp_prob, BinaryMask, GrayImage, Interpolation,
    PointF, ProbImage,
};
use crate::preprocessing::{EmbryoContext, Orientation};
use crate::registration::{register_affine, Registration, RegistrationConfig};

pub const ATLAS_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_ROI_RADIUS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Atlas {
    pub median_image: GrayImage,
    pub prob_map: ProbImage,
    pub orientation: Orientation,
    pub n: usize,
    pub fixed_index: usize,
    pub reg_config: RegistrationConfig,
    /// Registration outcome per input image; `None` for the fixed one.
    /// Not persisted.
    pub registrations: Vec<Option<Registration>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AtlasMeta {
    orientation: Orientation,
    n: usize,
    fixed_index: usize,
    reg_config: RegistrationConfig,
    format_version: u32,
}

impl Atlas {
    /// Level at which the transported map counts as "probability one".
    pub fn certainty_level(&self) -> f64 {
        1.0 - 1.0 / (2.0 * self.n as f64)
    }

    /// Pixels where every contributing mask agreed.
    pub fn certain_region(&self) -> BinaryMask {
        self.prob_map.threshold(self.certainty_level())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_gray(&self.median_image, dir.join("median.png"))?;
        write_prob(&self.prob_map, dir.join("probmap.png"))?;
        let meta = AtlasMeta {
            orientation: self.orientation,
            n: self.n,
            fixed_index: self.fixed_index,
            reg_config: self.reg_config.clone(),
            format_version: ATLAS_FORMAT_VERSION,
        };
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: AtlasMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
        if meta.format_version != ATLAS_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported atlas format {}", meta.format_version)));
        }
        let median_image = read_gray(dir.join("median.png"))?;
        let prob_map = read_prob(dir.join("probmap.png"))?;
        if median_image.dims() != prob_map.dims() {
            return Err(Error::DimensionMismatch {
                expected: median_image.dims(),
                found: prob_map.dims(),
            });
        }
        let atlas = Atlas {
            median_image,
            prob_map,
            orientation: meta.orientation,
            n: meta.n,
            fixed_index: meta.fixed_index,
            reg_config: meta.reg_config,
            registrations: Vec::new(),
        };
        if atlas.n < 2 || atlas.certain_region().is_empty() {
            return Err(Error::AtlasDegenerate);
        }
        Ok(atlas)
    }
}

/// Registers every image onto `images[fixed_index]`, carries each mask
/// along, and takes the per-pixel median image and mean mask. The fixed
/// pair enters unwarped.
pub fn build_atlas(
    images: &[GrayImage],
    masks: &[BinaryMask],
    fixed_index: usize,
    orientation: Orientation,
    cfg: &RegistrationConfig,
) -> Result<Atlas> {
    cfg.validate()?;
    let n = images.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!("an atlas needs at least 2 images, got {n}")));
    }
    if masks.len() != n {
        return Err(Error::InvalidConfig(format!("{n} images but {} masks", masks.len())));
    }
    if fixed_index >= n {
        return Err(Error::InvalidConfig(format!("fixed index {fixed_index} out of range for {n} images")));
    }
    let dims = images[fixed_index].dims();
    for (img, m) in images.iter().zip(masks) {
        for found in [img.dims(), m.dims()] {
            if found != dims {
                return Err(Error::DimensionMismatch { expected: dims, found });
            }
        }
    }
    let fixed = &images[fixed_index];
    let warped: Vec<(GrayImage, BinaryMask, Option<Registration>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            if i == fixed_index {
                return Ok((fixed.clone(), masks[i].clone(), None));
            }
            let reg = register_affine(fixed, &images[i], cfg)?;
            Ok((
                warp_affine(&images[i], &reg.transform, Interpolation::Bilinear)?,
                warp_mask(&masks[i], &reg.transform)?,
                Some(reg),
            ))
        })
        .collect::<Result<_>>()?;

    let mut registered = Vec::with_capacity(n);
    let mut carried = Vec::with_capacity(n);
    let mut registrations = Vec::with_capacity(n);
    for (img, m, r) in warped {
        registered.push(img);
        carried.push(m);
        registrations.push(r);
    }
    let atlas = Atlas {
        median_image: median_stack(&registered)?,
        prob_map: mean_stack(&carried)?,
        orientation,
        n,
        fixed_index,
        reg_config: cfg.clone(),
        registrations,
    };
    if atlas.certain_region().is_empty() {
        return Err(Error::AtlasDegenerate);
    }
    Ok(atlas)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub center: PointF,
    pub radius: usize,
    /// Direction of the first radial section, in degrees (image axes).
    pub start_angle: f64,
    /// Set when nothing reached probability one after transport and the
    /// map maximum was used instead.
    pub fallback: bool,
}

/// [`locate_roi_with_radius`] with the default 20 px radius.
pub fn locate_roi(atlas: &Atlas, image: &GrayImage, ctx: &EmbryoContext, cfg: &RegistrationConfig) -> Result<Roi> {
    locate_roi_with_radius(atlas, image, ctx, cfg, DEFAULT_ROI_RADIUS)
}

/// Registers the atlas template onto `image`, transports the probability
/// map, and centers the ROI on the barycenter of its certain region.
pub fn locate_roi_with_radius(
    atlas: &Atlas,
    image: &GrayImage,
    ctx: &EmbryoContext,
    cfg: &RegistrationConfig,
    radius: usize,
) -> Result<Roi> {
    if atlas.orientation != ctx.orientation {
        return Err(Error::InvalidConfig(format!(
            "{} atlas used on a {} image",
            atlas.orientation, ctx.orientation
        )));
    }
    if radius == 0 {
        return Err(Error::InvalidConfig("ROI radius must be positive".into()));
    }
    let reg = register_affine(image, &atlas.median_image, cfg)?;
    let transported = warp_prob(&atlas.prob_map, &reg.transform, image.dims())?;
    let mut mask = transported.threshold(atlas.certainty_level());
    let mut fallback = false;
    if mask.is_empty() {
        let peak = transported.max_value();
        if peak <= 0.0 {
            return Err(Error::EmptyMask);
        }
        mask = transported.threshold(peak);
        fallback = true;
    }
    Ok(Roi {
        center: barycenter(&mask)?,
        radius,
        start_angle: (ctx.axis_angle + 90.0).rem_euclid(360.0),
        fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_phantom, PhantomSpec, PoseJitter};

    fn still(seed: u64) -> crate::phantom::PhantomTruth {
        let spec = PhantomSpec {
            pose_jitter: PoseJitter::NONE,
            ..PhantomSpec::new(Orientation::Dorsal, true, seed)
        };
        generate_phantom(&spec).unwrap()
    }

    #[test]
    fn identical_inputs_reproduce_themselves() {
        let p = still(5);
        let images = vec![p.image.clone(); 4];
        let masks = vec![p.bladder.clone(); 4];
        let atlas = build_atlas(&images, &masks, 0, Orientation::Dorsal, &RegistrationConfig::default()).unwrap();
        assert_eq!(atlas.median_image, p.image);
        assert!(atlas.prob_map.data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(atlas.prob_map.threshold(0.5), p.bladder);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = still(6);
        let cfg = RegistrationConfig::default();
        assert!(build_atlas(&[p.image.clone()], &[p.bladder.clone()], 0, Orientation::Dorsal, &cfg).is_err());
        let imgs = vec![p.image.clone(); 2];
        assert!(build_atlas(&imgs, &[p.bladder.clone()], 0, Orientation::Dorsal, &cfg).is_err());
        assert!(build_atlas(&imgs, &vec![p.bladder.clone(); 2], 2, Orientation::Dorsal, &cfg).is_err());
        let empty = vec![BinaryMask::new(200, 160); 2];
        assert!(matches!(
            build_atlas(&imgs, &empty, 0, Orientation::Dorsal, &cfg),
            Err(Error::AtlasDegenerate)
        ));
    }

    #[test]
    fn self_localization_and_roundtrip() {
        let p = still(7);
        let q = still(8);
        let atlas = build_atlas(
            &[p.image.clone(), q.image.clone()],
            &[p.bladder.clone(), q.bladder.clone()],
            0,
            Orientation::Dorsal,
            &RegistrationConfig::default(),
        )
        .unwrap();
        let ctx = EmbryoContext::from_image(&atlas.median_image, Orientation::Dorsal).unwrap();
        let roi = locate_roi(&atlas, &atlas.median_image, &ctx, &RegistrationConfig::default()).unwrap();
        let expected = barycenter(&atlas.certain_region()).unwrap();
        assert!(roi.center.distance(&expected) < 2.0);
        assert_eq!(roi.radius, 20);
        assert!(!roi.fallback);
        assert!((roi.start_angle - (ctx.axis_angle + 90.0).rem_euclid(360.0)).abs() < 1e-12);

        let dir = tempfile::tempdir().unwrap();
        atlas.save(dir.path()).unwrap();
        let back = Atlas::load(dir.path()).unwrap();
        assert_eq!(back.median_image, atlas.median_image);
        assert_eq!(back.n, 2);
        assert_eq!(back.reg_config, atlas.reg_config);
        for (a, b) in back.prob_map.data().iter().zip(atlas.prob_map.data()) {
            assert!((a - b).abs() < 1e-4);
        }

        let lateral = EmbryoContext {
            orientation: Orientation::Lateral,
            ..ctx
        };
        assert!(locate_roi(&atlas, &atlas.median_image, &lateral, &RegistrationConfig::default()).is_err());
    }
}
