use serde::{Deserialize, Serialize};

use super::affine::Affine2D;
use super::raster::{BinaryMask, GrayImage, PointF, ProbImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Nearest,
    Bilinear,
}

/// Resamples `image` on its own grid: output pixel `p` takes the input value
/// at `t(p)`, or 0 when `t(p)` falls outside the input.
pub fn warp_affine(image: &GrayImage, t: &Affine2D, interp: Interpolation) -> Result<GrayImage> {
    if !t.is_invertible() {
        return Err(Error::SingularTransform(t.determinant()));
    }
    let (w, h) = image.dims();
    let out = GrayImage::from_fn(w, h, |x, y| {
        let p = t.apply(PointF::new(x as f64, y as f64));
        match interp {
            Interpolation::Nearest => image.sample_nearest(p.x, p.y).unwrap_or(0),
            Interpolation::Bilinear => image
                .sample_bilinear(p.x, p.y)
                .map(|v| (v + 0.5).floor().clamp(0.0, 255.0) as u8)
                .unwrap_or(0),
        }
    });
    Ok(out)
}

/// Bilinear pull-warp of a probability map; outside samples are 0.
pub fn warp_prob(map: &ProbImage, t: &Affine2D, out_dims: (usize, usize)) -> Result<ProbImage> {
    if !t.is_invertible() {
        return Err(Error::SingularTransform(t.determinant()));
    }
    let (w, h) = out_dims;
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let p = t.apply(PointF::new(x as f64, y as f64));
            data.push(map.sample_bilinear(p.x, p.y).unwrap_or(0.0).clamp(0.0, 1.0));
        }
    }
    ProbImage::from_vec(w, h, data)
}

/// Nearest-neighbour pull-warp of a mask, so labels stay binary.
pub fn warp_mask(mask: &BinaryMask, t: &Affine2D) -> Result<BinaryMask> {
    if !t.is_invertible() {
        return Err(Error::SingularTransform(t.determinant()));
    }
    let (w, h) = mask.dims();
    Ok(BinaryMask::from_fn(w, h, |x, y| {
        let p = t.apply(PointF::new(x as f64, y as f64));
        let xi = (p.x + 0.5).floor();
        let yi = (p.y + 0.5).floor();
        mask.get_signed(xi as i64, yi as i64)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cross(n: usize) -> GrayImage {
        let c = n / 2;
        GrayImage::from_fn(n, n, |x, y| {
            let on_arm = (x.abs_diff(c) <= 1 && y.abs_diff(c) <= 8) || (y.abs_diff(c) <= 1 && x.abs_diff(c) <= 8);
            if on_arm {
                230
            } else {
                15
            }
        })
    }

    #[test]
    fn identity_is_bit_exact() {
        let img = GrayImage::from_fn(23, 17, |x, y| ((x * 31 + y * 7) % 256) as u8);
        for interp in [Interpolation::Nearest, Interpolation::Bilinear] {
            assert_eq!(warp_affine(&img, &Affine2D::identity(), interp).unwrap(), img);
        }
    }

    #[test]
    fn translation_moves_pixel() {
        let mut img = GrayImage::new(32, 32);
        img.set(10, 10, 255);
        // Pull semantics: output (x, y) reads input (x - 3, y).
        let out = warp_affine(&img, &Affine2D::translation(-3.0, 0.0), Interpolation::Nearest).unwrap();
        assert_eq!(out.get(13, 10), 255);
        assert_eq!(out.data().iter().filter(|&&v| v == 255).count(), 1);
    }

    #[test]
    fn quarter_turn_preserves_symmetric_cross() {
        let img = cross(31);
        let c = PointF::new(15.0, 15.0);
        let t = Affine2D::similarity_about(c, 90.0, 1.0, 0.0, 0.0);
        for interp in [Interpolation::Nearest, Interpolation::Bilinear] {
            assert_eq!(warp_affine(&img, &t, interp).unwrap(), img);
        }
    }

    #[test]
    fn outside_fills_zero() {
        let img = GrayImage::filled(8, 8, 200);
        let out = warp_affine(&img, &Affine2D::translation(100.0, 0.0), Interpolation::Bilinear).unwrap();
        assert!(out.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn singular_transform_rejected() {
        let img = GrayImage::new(4, 4);
        let t = Affine2D {
            a11: 0.0,
            a12: 0.0,
            a21: 0.0,
            a22: 1.0,
            tx: 0.0,
            ty: 0.0,
        };
        assert!(matches!(
            warp_affine(&img, &t, Interpolation::Nearest),
            Err(Error::SingularTransform(_))
        ));
        assert!(warp_mask(&BinaryMask::new(4, 4), &t).is_err());
    }

    #[test]
    fn mask_translation() {
        let mut m = BinaryMask::new(32, 32);
        m.set(10, 10, true);
        let out = warp_mask(&m, &Affine2D::translation(-5.0, 0.0)).unwrap();
        assert!(out.get(15, 10));
        assert_eq!(out.count(), 1);
    }
}
