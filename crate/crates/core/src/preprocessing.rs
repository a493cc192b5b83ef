//! Embryo body mask, principal axis and skeleton.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, GrayImage, PointF};
use crate::morphology::{self, Connectivity};

/// Minimum share of the frame the embryo must cover.
pub const MIN_BODY_FRACTION: f64 = 0.01;
/// Minimum relative eigenvalue gap for a dominant body axis.
pub const MIN_AXIS_ANISOTROPY: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Dorsal,
    Lateral,
}

impl Orientation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Orientation::Dorsal => "dorsal",
            Orientation::Lateral => "lateral",
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dorsal" => Ok(Orientation::Dorsal),
            "lateral" => Ok(Orientation::Lateral),
            other => Err(Error::Format(format!("unknown orientation '{other}'"))),
        }
    }
}

/// What the contour stage needs to know about the embryo.
#[derive(Debug, Clone)]
pub struct EmbryoContext {
    pub body: BinaryMask,
    /// Principal-axis direction in degrees, `[0, 180)`, measured from +x
    /// towards +y (image rows grow downwards).
    pub axis_angle: f64,
    /// Skeleton points ordered along the principal axis.
    pub skeleton: Vec<PointF>,
    pub orientation: Orientation,
}

impl EmbryoContext {
    /// Runs segmentation and axis extraction on `image`.
    pub fn from_image(image: &GrayImage, orientation: Orientation) -> Result<Self> {
        let body = segment_embryo(image)?;
        let (skeleton, axis_angle) = skeleton_axis(&body)?;
        Ok(Self {
            body,
            axis_angle,
            skeleton,
            orientation,
        })
    }
}

/// Otsu foreground, largest 8-connected component, holes filled.
pub fn segment_embryo(image: &GrayImage) -> Result<BinaryMask> {
    let (w, h) = image.dims();
    let (lo, hi) = image
        .data()
        .iter()
        .fold((u8::MAX, u8::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo == hi {
        return Err(Error::NoEmbryo { fraction: 0.0 });
    }
    let t = morphology::otsu_level(image);
    let fg = BinaryMask::from_fn(w, h, |x, y| image.get(x, y) > t);
    let body = morphology::fill_holes(&morphology::largest_component(&fg, Connectivity::Eight));
    let fraction = body.count() as f64 / (w * h) as f64;
    if fraction < MIN_BODY_FRACTION {
        return Err(Error::NoEmbryo { fraction });
    }
    Ok(body)
}

/// Central second moments `(mu20, mu02, mu11)` and centroid.
pub(crate) fn second_moments(mask: &BinaryMask) -> Result<(f64, f64, f64, PointF)> {
    let c = crate::imaging::barycenter(mask)?;
    let (mut m20, mut m02, mut m11) = (0.0, 0.0, 0.0);
    let mut n = 0.0;
    for (x, y) in mask.points() {
        let (dx, dy) = (x as f64 - c.x, y as f64 - c.y);
        m20 += dx * dx;
        m02 += dy * dy;
        m11 += dx * dy;
        n += 1.0;
    }
    Ok((m20 / n, m02 / n, m11 / n, c))
}

/// Principal axis angle of `body` and its thinned skeleton ordered along
/// that axis.
pub fn skeleton_axis(body: &BinaryMask) -> Result<(Vec<PointF>, f64)> {
    let (mu20, mu02, mu11, centroid) = second_moments(body)?;
    let half_trace = 0.5 * (mu20 + mu02);
    let disc = (0.25 * (mu20 - mu02).powi(2) + mu11 * mu11).sqrt();
    let (major, minor) = (half_trace + disc, half_trace - disc);
    if major <= 0.0 || (major - minor) / major < MIN_AXIS_ANISOTROPY {
        return Err(Error::DegenerateShape { major, minor });
    }
    let angle = 0.5 * (2.0 * mu11).atan2(mu20 - mu02);
    let axis_angle = angle.to_degrees().rem_euclid(180.0);

    let (dir_x, dir_y) = (angle.cos(), angle.sin());
    let mut skeleton: Vec<(f64, f64, PointF)> = morphology::thin(body)
        .points()
        .map(|(x, y)| {
            let (dx, dy) = (x as f64 - centroid.x, y as f64 - centroid.y);
            (dx * dir_x + dy * dir_y, -dx * dir_y + dy * dir_x, PointF::new(x as f64, y as f64))
        })
        .collect();
    skeleton.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok((skeleton.into_iter().map(|s| s.2).collect(), axis_angle))
}

/// Fallback view classifier for images without orientation metadata: two
/// solid dark blobs inside the body read as a dorsal pair of eyes, one as a
/// lateral eye; otherwise a strongly elongated body is taken as lateral.
pub fn guess_orientation(image: &GrayImage, body: &BinaryMask) -> Orientation {
    let t = morphology::otsu_level(image);
    let (w, h) = image.dims();
    let dark = BinaryMask::from_fn(w, h, |x, y| body.get(x, y) && image.get(x, y) <= t);
    let (labels, areas) = morphology::label_components(&dark, Connectivity::Eight);
    let mut eyes = 0;
    for (label, &area) in areas.iter().enumerate().skip(1) {
        if area < 15 {
            continue;
        }
        let blob = BinaryMask::from_vec(w, h, labels.iter().map(|&l| l as usize == label).collect())
            .expect("same dimensions");
        // A ring (dark wall around a light core) gains area when filled; an eye does not.
        if (morphology::fill_holes(&blob).count() as f64) < 1.3 * area as f64 {
            eyes += 1;
        }
    }
    match eyes {
        0 => match second_moments(body) {
            Ok((mu20, mu02, mu11, _)) => {
                let half = 0.5 * (mu20 + mu02);
                let disc = (0.25 * (mu20 - mu02).powi(2) + mu11 * mu11).sqrt();
                let ratio = ((half + disc) / (half - disc).max(1e-9)).sqrt();
                if ratio > 2.55 {
                    Orientation::Lateral
                } else {
                    Orientation::Dorsal
                }
            }
            Err(_) => Orientation::Dorsal,
        },
        1 => Orientation::Lateral,
        _ => Orientation::Dorsal,
    }
}
