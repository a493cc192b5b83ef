use serde::{Deserialize, Serialize};

use super::raster::PointF;
use crate::error::{Error, Result};

/// 2×3 affine map with pull semantics: it sends an output pixel coordinate
/// to the input coordinate that is sampled for it.
///
/// `x_in = a11·x + a12·y + tx`, `y_in = a21·x + a22·y + ty`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine2D {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for Affine2D {
    fn default() -> Self {
        Self::identity()
    }
}

impl Affine2D {
    pub const fn identity() -> Self {
        Self {
            a11: 1.0,
            a12: 0.0,
            a21: 0.0,
            a22: 1.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    pub const fn translation(tx: f64, ty: f64) -> Self {
        Self {
            a11: 1.0,
            a12: 0.0,
            a21: 0.0,
            a22: 1.0,
            tx,
            ty,
        }
    }

    /// Rotation by `degrees` and isotropic `scale` about `center`, followed
    /// by a shift of `(tx, ty)`.
    pub fn similarity_about(center: PointF, degrees: f64, scale: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        let (a11, a12, a21, a22) = (scale * c, -scale * s, scale * s, scale * c);
        Self::from_centered(center, [a11, a12, a21, a22], [tx, ty])
    }

    /// Builds `x ↦ A·(x − center) + center + t`.
    pub fn from_centered(center: PointF, linear: [f64; 4], shift: [f64; 2]) -> Self {
        let [a11, a12, a21, a22] = linear;
        Self {
            a11,
            a12,
            a21,
            a22,
            tx: center.x - (a11 * center.x + a12 * center.y) + shift[0],
            ty: center.y - (a21 * center.x + a22 * center.y) + shift[1],
        }
    }

    /// Inverse of [`Affine2D::from_centered`]: the shift `t` such that
    /// `self = A·(x − center) + center + t`.
    pub fn centered_shift(&self, center: PointF) -> [f64; 2] {
        let p = self.apply(center);
        [p.x - center.x, p.y - center.y]
    }

    pub fn linear(&self) -> [f64; 4] {
        [self.a11, self.a12, self.a21, self.a22]
    }

    #[inline]
    pub fn apply(&self, p: PointF) -> PointF {
        PointF {
            x: self.a11 * p.x + self.a12 * p.y + self.tx,
            y: self.a21 * p.x + self.a22 * p.y + self.ty,
        }
    }

    pub fn determinant(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn is_invertible(&self) -> bool {
        let d = self.determinant();
        d.is_finite() && d.abs() > 1e-12
    }

    pub fn inverse(&self) -> Result<Affine2D> {
        let det = self.determinant();
        if !self.is_invertible() {
            return Err(Error::SingularTransform(det));
        }
        let (i11, i12, i21, i22) = (
            self.a22 / det,
            -self.a12 / det,
            -self.a21 / det,
            self.a11 / det,
        );
        Ok(Affine2D {
            a11: i11,
            a12: i12,
            a21: i21,
            a22: i22,
            tx: -(i11 * self.tx + i12 * self.ty),
            ty: -(i21 * self.tx + i22 * self.ty),
        })
    }

    /// `self ∘ inner`: applies `inner` first.
    pub fn compose(&self, inner: &Affine2D) -> Affine2D {
        Affine2D {
            a11: self.a11 * inner.a11 + self.a12 * inner.a21,
            a12: self.a11 * inner.a12 + self.a12 * inner.a22,
            a21: self.a21 * inner.a11 + self.a22 * inner.a21,
            a22: self.a21 * inner.a12 + self.a22 * inner.a22,
            tx: self.a11 * inner.tx + self.a12 * inner.ty + self.tx,
            ty: self.a21 * inner.tx + self.a22 * inner.ty + self.ty,
        }
    }

    /// Rotation angle of the linear part in degrees, from its closest
    /// similarity.
    pub fn rotation_degrees(&self) -> f64 {
        (self.a21 - self.a12).atan2(self.a11 + self.a22).to_degrees()
    }

    /// Same map expressed on a grid downsampled by `factor`
    /// (`x_coarse = x_fine / factor`).
    pub fn rescaled(&self, factor: f64) -> Affine2D {
        Affine2D {
            tx: self.tx / factor,
            ty: self.ty / factor,
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Affine2D, b: &Affine2D) -> bool {
        let pa = [a.a11, a.a12, a.a21, a.a22, a.tx, a.ty];
        let pb = [b.a11, b.a12, b.a21, b.a22, b.tx, b.ty];
        pa.iter().zip(pb).all(|(x, y)| (x - y).abs() < 1e-9)
    }

    #[test]
    fn inverse_composes_to_identity() {
        let t = Affine2D::similarity_about(PointF::new(40.0, 30.0), 17.0, 1.1, 3.0, -2.0);
        let inv = t.inverse().unwrap();
        assert!(close(&t.compose(&inv), &Affine2D::identity()));
        assert!(close(&inv.compose(&t), &Affine2D::identity()));
    }

    #[test]
    fn singular_inverse_fails() {
        let t = Affine2D {
            a11: 1.0,
            a12: 2.0,
            a21: 2.0,
            a22: 4.0,
            tx: 0.0,
            ty: 0.0,
        };
        assert!(matches!(t.inverse(), Err(Error::SingularTransform(_))));
    }

    #[test]
    fn centered_roundtrip() {
        let c = PointF::new(50.0, 20.0);
        let t = Affine2D::from_centered(c, [0.9, 0.1, -0.2, 1.05], [4.0, -1.5]);
        let s = t.centered_shift(c);
        assert!((s[0] - 4.0).abs() < 1e-12 && (s[1] + 1.5).abs() < 1e-12);
        assert!((Affine2D::similarity_about(c, 12.0, 1.0, 0.0, 0.0).rotation_degrees() - 12.0).abs() < 1e-9);
    }

    #[test]
    fn rescale_matches_coordinate_change() {
        let t = Affine2D::similarity_about(PointF::new(64.0, 48.0), 8.0, 0.95, 6.0, 2.0);
        let coarse = t.rescaled(2.0);
        let p = PointF::new(10.0, 7.0);
        let fine = t.apply(PointF::new(p.x * 2.0, p.y * 2.0));
        let q = coarse.apply(p);
        assert!((q.x * 2.0 - fine.x).abs() < 1e-9 && (q.y * 2.0 - fine.y).abs() < 1e-9);
    }
}
