//! Per-image detection pipeline: ROI localization, contour extraction and
//! descriptors.

use serde::{Deserialize, Serialize};

use crate::atlas::{locate_roi_with_radius, Atlas, Roi, DEFAULT_ROI_RADIUS};
use crate::contour::{circular_shortest_path, path_to_shape, polar_transform, select_start_row, CircularPath, PolarImage, SegmentedShape};
use crate::descriptors::{features_with, Features, DEFAULT_OPENING_RADIUS};
use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::preprocessing::{EmbryoContext, Orientation};
use crate::registration::RegistrationConfig;

pub const DEFAULT_ROI_DIAMETER: usize = 2 * DEFAULT_ROI_RADIUS;
pub const DEFAULT_R_MIN: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub roi_diameter: usize,
    pub r_min: usize,
    pub opening_radius: usize,
    pub registration: RegistrationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            roi_diameter: DEFAULT_ROI_DIAMETER,
            r_min: DEFAULT_R_MIN,
            opening_radius: DEFAULT_OPENING_RADIUS,
            registration: RegistrationConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn roi_radius(&self) -> usize {
        self.roi_diameter / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.roi_radius() == 0 {
            return Err(Error::InvalidConfig("ROI diameter must be at least 2".into()));
        }
        if self.r_min >= self.roi_radius() {
            return Err(Error::InvalidConfig(format!(
                "r_min {} must be below the ROI radius {}",
                self.r_min,
                self.roi_radius()
            )));
        }
        self.registration.validate()
    }
}

/// Dorsal and lateral atlases; either may be absent.
#[derive(Debug, Clone, Default)]
pub struct AtlasSet {
    pub dorsal: Option<Atlas>,
    pub lateral: Option<Atlas>,
}

impl AtlasSet {
    pub fn for_orientation(&self, o: Orientation) -> Result<&Atlas> {
        match o {
            Orientation::Dorsal => self.dorsal.as_ref(),
            Orientation::Lateral => self.lateral.as_ref(),
        }
        .ok_or_else(|| Error::InvalidConfig(format!("no {o} atlas loaded")))
    }
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub context: EmbryoContext,
    pub roi: Roi,
    pub polar: PolarImage,
    pub start_row: usize,
    pub path: CircularPath,
    pub shape: SegmentedShape,
}

/// Localizes the ROI with the orientation's atlas and extracts the contour.
pub fn segment(image: &GrayImage, orientation: Orientation, atlases: &AtlasSet, cfg: &PipelineConfig) -> Result<Segmentation> {
    cfg.validate()?;
    let atlas = atlases.for_orientation(orientation)?;
    let context = EmbryoContext::from_image(image, orientation)?;
    let roi = locate_roi_with_radius(atlas, image, &context, &cfg.registration, cfg.roi_radius())?;
    let polar = polar_transform(image, &roi);
    let start_row = select_start_row(&polar, cfg.r_min)?;
    let path = circular_shortest_path(&polar, start_row, cfg.r_min)?;
    let shape = path_to_shape(&path, &roi, image.dims())?;
    Ok(Segmentation {
        context,
        roi,
        polar,
        start_row,
        path,
        shape,
    })
}

/// Segmentation followed by the 24 descriptors.
pub fn analyze(
    image: &GrayImage,
    orientation: Orientation,
    atlases: &AtlasSet,
    cfg: &PipelineConfig,
) -> Result<(Segmentation, Features)> {
    let seg = segment(image, orientation, atlases, cfg)?;
    let features = features_with(image, &seg.shape, cfg.opening_radius)?;
    Ok((seg, features))
}
