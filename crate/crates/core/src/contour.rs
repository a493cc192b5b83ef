//! Polar dual frame, circular shortest path and back-projection to a
//! filled shape.

use std::path::Path;

use image::Rgb;
use serde::{Deserialize, Serialize};

use crate::atlas::Roi;
use crate::error::{Error, Result};
use crate::imaging::io::{to_rgb, write_gray, write_rgb};
use crate::imaging::{BinaryMask, GrayImage, PointF};
use crate::morphology::{flood_fill, Connectivity};

/// Angular samples per turn; the polar image carries one extra wrap column.
pub const ANGLES: usize = 360;

/// Intensity assigned to samples falling outside the image.
pub const OUTSIDE: u8 = 255;

/// Rows are radii `0..R`, columns angles; the last column repeats the first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolarImage {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl PolarImage {
    /// Builds from row-major data; the wrap column must equal column 0.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols < 2 || data.len() != rows * cols {
            return Err(Error::InvalidDimensions {
                width: cols,
                height: rows,
                len: data.len(),
            });
        }
        if (0..rows).any(|r| data[r * cols] != data[r * cols + cols - 1]) {
            return Err(Error::Format("wrap column differs from column 0".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    pub fn column(&self, c: usize) -> Vec<u8> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Angles run left to right, radii top to bottom.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_vec(self.cols, self.rows, self.data.clone()).expect("consistent dimensions")
    }
}

/// Samples `image` along `roi.radius` rays at 1° steps starting from
/// `roi.start_angle`.
pub fn polar_transform(image: &GrayImage, roi: &Roi) -> PolarImage {
    let rows = roi.radius;
    let cols = ANGLES + 1;
    let mut data = vec![0u8; rows * cols];
    for c in 0..ANGLES {
        let a = (roi.start_angle + c as f64).to_radians();
        let (s, co) = a.sin_cos();
        for r in 0..rows {
            let x = roi.center.x + r as f64 * co;
            let y = roi.center.y + r as f64 * s;
            data[r * cols + c] = match image.sample_bilinear(x, y) {
                Some(v) => (v + 0.5).floor().clamp(0.0, 255.0) as u8,
                None => OUTSIDE,
            };
        }
    }
    for r in 0..rows {
        data[r * cols + ANGLES] = data[r * cols];
    }
    PolarImage { rows, cols, data }
}

/// Outermost local minimum of column 0 within `[r_min, R-1]`.
pub fn select_start_row(polar: &PolarImage, r_min: usize) -> Result<usize> {
    let rows = polar.rows();
    if r_min >= rows {
        return Err(Error::InvalidConfig(format!("r_min {r_min} must be below the ROI radius {rows}")));
    }
    let col = polar.column(0);
    let is_local_min = |r: usize| {
        let left = r == r_min || col[r] <= col[r - 1];
        let right = r + 1 == rows || col[r] <= col[r + 1];
        left && right
    };
    let strict = |r: usize| {
        let left = r > r_min && col[r] < col[r - 1];
        let right = r + 1 < rows && col[r] < col[r + 1];
        left || right
    };
    if let Some(r) = (r_min..rows).rev().find(|&r| is_local_min(r) && strict(r)) {
        return Ok(r);
    }
    let lowest = col[r_min..].iter().copied().min().expect("non-empty range");
    Ok((r_min..rows).rev().find(|&r| col[r] == lowest).expect("minimum is attained"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircularPath {
    /// Radius per column, first equal to last.
    pub radii: Vec<usize>,
    /// Sum of the traversed polar intensities.
    pub cost: u64,
}

impl CircularPath {
    /// Closure, unit steps and the radius band.
    pub fn is_feasible(&self, rows: usize, r_min: usize) -> bool {
        self.radii.first() == self.radii.last()
            && self.radii.iter().all(|&r| r >= r_min && r < rows)
            && self.radii.windows(2).all(|w| w[0].abs_diff(w[1]) <= 1)
    }
}

/// Minimum-cost closed path from `(0, start_row)` to `(last, start_row)`
/// with unit radial steps between columns, by one dynamic-programming
/// sweep. Equal-cost choices prefer staying on the same row, then the
/// smaller radius.
pub fn circular_shortest_path(polar: &PolarImage, start_row: usize, r_min: usize) -> Result<CircularPath> {
    let (rows, cols) = (polar.rows(), polar.cols());
    if start_row < r_min {
        return Err(Error::InfeasibleStart { start_row, r_min });
    }
    if start_row >= rows {
        return Err(Error::InvalidConfig(format!("start row {start_row} outside {rows} rows")));
    }
    const INF: u64 = u64::MAX;
    // to_go[c * rows + r]: cheapest cost from (c, r) to the end, inclusive.
    let mut to_go = vec![INF; rows * cols];
    to_go[(cols - 1) * rows + start_row] = polar.get(start_row, cols - 1) as u64;
    for c in (0..cols - 1).rev() {
        for r in r_min..rows {
            let best = next_rows(r, r_min, rows)
                .map(|n| to_go[(c + 1) * rows + n])
                .min()
                .unwrap_or(INF);
            if best != INF {
                to_go[c * rows + r] = best + polar.get(r, c) as u64;
            }
        }
    }
    let cost = to_go[start_row];
    debug_assert_ne!(cost, INF, "flat path is always feasible");

    let mut radii = Vec::with_capacity(cols);
    let mut r = start_row;
    radii.push(r);
    for c in 1..cols {
        r = next_rows(r, r_min, rows)
            .min_by_key(|&n| (to_go[c * rows + n], n.abs_diff(r), n))
            .expect("at least the same row");
        radii.push(r);
    }
    let path = CircularPath { radii, cost };
    assert!(path.is_feasible(rows, r_min), "infeasible path produced");
    Ok(path)
}

fn next_rows(r: usize, r_min: usize, rows: usize) -> impl Iterator<Item = usize> {
    let lo = r.saturating_sub(1).max(r_min);
    let hi = (r + 1).min(rows - 1);
    lo..=hi
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedShape {
    /// Contour band `S_c`.
    pub contour: BinaryMask,
    /// Interior `S_i`.
    pub interior: BinaryMask,
    /// `S_c ∪ S_i`.
    pub full: BinaryMask,
    /// One-pixel closed curve traced by the path.
    pub curve: BinaryMask,
}

fn bresenham(a: (i64, i64), b: (i64, i64), mut plot: impl FnMut(i64, i64)) {
    let (mut x, mut y) = a;
    let dx = (b.0 - x).abs();
    let dy = -(b.1 - y).abs();
    let sx = if x < b.0 { 1 } else { -1 };
    let sy = if y < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        plot(x, y);
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Primal pixel of every path sample, nearest rounding.
pub fn path_points(path: &CircularPath, roi: &Roi) -> Vec<(i64, i64)> {
    let steps = (path.radii.len() - 1).max(1) as f64;
    path.radii
        .iter()
        .enumerate()
        .map(|(c, &r)| {
            let a = (roi.start_angle + c as f64 * ANGLES as f64 / steps).to_radians();
            let x = roi.center.x + r as f64 * a.cos();
            let y = roi.center.y + r as f64 * a.sin();
            ((x + 0.5).floor() as i64, (y + 0.5).floor() as i64)
        })
        .collect()
}

/// Drops repeated points and staircase corners whose neighbours already
/// touch, leaving a minimal 8-connected chain. Endpoints are kept.
fn thin_chain(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let touch = |a: (i64, i64), b: (i64, i64)| (a.0 - b.0).abs() <= 1 && (a.1 - b.1).abs() <= 1;
    let mut out: Vec<(i64, i64)> = Vec::with_capacity(points.len());
    for (i, &p) in points.iter().enumerate() {
        if out.last() == Some(&p) {
            continue;
        }
        let last = i + 1 == points.len();
        if !last && out.len() >= 1 && touch(*out.last().expect("non-empty"), points[i + 1]) && points[i + 1] != p {
            continue;
        }
        out.push(p);
    }
    if out.len() == 1 {
        out.push(out[0]);
    }
    out
}

/// Rasterizes the path as a closed 8-connected curve around the ROI center
/// and fills it; curve pixels count as inside when their centers lie within
/// the contour. The contour band is the curve widened by one pixel on each
/// side, kept within the filled shape; the interior is what remains,
/// restricted to the 4-connected part holding the center.
pub fn path_to_shape(path: &CircularPath, roi: &Roi, dims: (usize, usize)) -> Result<SegmentedShape> {
    if path.radii.len() < 2 || path.radii.first() != path.radii.last() {
        return Err(Error::OpenContour);
    }
    let pts = thin_chain(&path_points(path, roi));
    let seed = ((roi.center.x + 0.5).floor() as i64, (roi.center.y + 0.5).floor() as i64);

    // Local canvas with a margin so that leaks reach its border.
    let (mut x0, mut y0, mut x1, mut y1) = (seed.0, seed.1, seed.0, seed.1);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let (ox, oy) = (x0 - 2, y0 - 2);
    let (cw, ch) = ((x1 - ox + 3) as usize, (y1 - oy + 3) as usize);

    let mut curve = BinaryMask::new(cw, ch);
    for w in pts.windows(2) {
        bresenham(w[0], w[1], |x, y| curve.set((x - ox) as usize, (y - oy) as usize, true));
    }
    let local_seed = ((seed.0 - ox) as usize, (seed.1 - oy) as usize);
    if curve.get(local_seed.0, local_seed.1) {
        return Err(Error::EmptyRegion);
    }
    let enclosed = flood_fill(&curve.complement(), local_seed, Connectivity::Four);
    let touches_border = enclosed
        .points()
        .any(|(x, y)| x == 0 || y == 0 || x + 1 == cw || y + 1 == ch);
    if touches_border {
        return Err(Error::OpenContour);
    }
    // Curve pixels belong to the shape when their center lies within the
    // continuous contour.
    let steps = (path.radii.len() - 1) as f64;
    let radius_at = |x: f64, y: f64| {
        let deg = (y.atan2(x).to_degrees() - roi.start_angle).rem_euclid(360.0);
        let u = deg / ANGLES as f64 * steps;
        let i = (u.floor() as usize).min(path.radii.len() - 2);
        let f = u - i as f64;
        path.radii[i] as f64 * (1.0 - f) + path.radii[i + 1] as f64 * f
    };
    let mut filled = enclosed.clone();
    for (x, y) in curve.points() {
        let dx = (x as i64 + ox) as f64 - roi.center.x;
        let dy = (y as i64 + oy) as f64 - roi.center.y;
        if (dx * dx + dy * dy).sqrt() <= radius_at(dx, dy) + 1e-9 {
            filled.set(x, y, true);
        }
    }
    let mut band = BinaryMask::new(cw, ch);
    for (x, y) in curve.points() {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < cw && (ny as usize) < ch {
                    band.set(nx as usize, ny as usize, true);
                }
            }
        }
    }
    let contour = band.intersection(&filled);
    let inner = enclosed.difference(&contour);
    if !inner.get(local_seed.0, local_seed.1) {
        return Err(Error::EmptyRegion);
    }
    let interior = flood_fill(&inner, local_seed, Connectivity::Four);

    let place = |m: &BinaryMask| {
        BinaryMask::from_fn(dims.0, dims.1, |x, y| m.get_signed(x as i64 - ox, y as i64 - oy))
    };
    let contour = place(&contour);
    let interior = place(&interior);
    if interior.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(SegmentedShape {
        full: contour.union(&interior),
        contour,
        interior,
        curve: place(&curve),
    })
}

/// Image with the ROI circle in yellow and the contour curve in red.
pub fn overlay(image: &GrayImage, roi: &Roi, shape: &SegmentedShape) -> image::RgbImage {
    let mut rgb = to_rgb(image);
    let (w, h) = image.dims();
    let mut put = |x: f64, y: f64, color: Rgb<u8>| {
        let (px, py) = ((x + 0.5).floor(), (y + 0.5).floor());
        if px >= 0.0 && py >= 0.0 && (px as usize) < w && (py as usize) < h {
            rgb.put_pixel(px as u32, py as u32, color);
        }
    };
    let steps = (8.0 * std::f64::consts::PI * roi.radius as f64).ceil() as usize;
    for k in 0..steps {
        let a = k as f64 / steps as f64 * std::f64::consts::TAU;
        put(
            roi.center.x + roi.radius as f64 * a.cos(),
            roi.center.y + roi.radius as f64 * a.sin(),
            Rgb([255, 255, 0]),
        );
    }
    for (x, y) in shape.curve.points() {
        put(x as f64, y as f64, Rgb([255, 0, 0]));
    }
    rgb
}

pub fn write_overlay(path: impl AsRef<Path>, image: &GrayImage, roi: &Roi, shape: &SegmentedShape) -> Result<()> {
    write_rgb(&overlay(image, roi, shape), path)
}

pub fn write_polar(path: impl AsRef<Path>, polar: &PolarImage) -> Result<()> {
    write_gray(&polar.to_gray(), path)
}

/// Full contour extraction for one ROI.
pub fn extract_shape(image: &GrayImage, roi: &Roi, r_min: usize) -> Result<(PolarImage, CircularPath, SegmentedShape)> {
    let polar = polar_transform(image, roi);
    let start = select_start_row(&polar, r_min)?;
    let path = circular_shortest_path(&polar, start, r_min)?;
    let shape = path_to_shape(&path, roi, image.dims())?;
    Ok((polar, path, shape))
}

/// ROI helper for tests and tools.
pub fn roi_at(center: PointF, radius: usize, start_angle: f64) -> Roi {
    Roi {
        center,
        radius,
        start_angle,
        fallback: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ring_image(radius: f64, half_width: f64) -> GrayImage {
        GrayImage::from_fn(80, 80, |x, y| {
            let d = ((x as f64 - 40.0).powi(2) + (y as f64 - 40.0).powi(2)).sqrt();
            if (d - radius).abs() < half_width {
                0
            } else {
                255
            }
        })
    }

    #[test]
    fn constant_image_gives_constant_polar() {
        let img = GrayImage::filled(60, 60, 93);
        let p = polar_transform(&img, &roi_at(PointF::new(30.0, 30.0), 20, 17.0));
        assert_eq!((p.rows(), p.cols()), (20, 361));
        assert!(p.data.iter().all(|&v| v == 93));
    }

    #[test]
    fn polar_samples_along_rays() {
        let img = GrayImage::from_fn(60, 60, |x, y| (x * 3 + y) as u8);
        let p = polar_transform(&img, &roi_at(PointF::new(30.0, 30.0), 20, 0.0));
        assert_eq!(p.get(5, 0), img.get(35, 30));
        assert_eq!(p.get(5, 90), img.get(30, 35));
        for r in 0..20 {
            assert_eq!(p.get(r, 0), p.get(r, 360));
        }
    }

    #[test]
    fn outside_samples_are_repulsive() {
        let img = GrayImage::filled(20, 20, 0);
        let p = polar_transform(&img, &roi_at(PointF::new(2.0, 10.0), 10, 0.0));
        assert_eq!(p.get(9, 180), OUTSIDE);
        assert_eq!(p.get(9, 0), 0);
    }

    #[test]
    fn dark_ring_appears_as_dark_row() {
        let p = polar_transform(&ring_image(12.0, 1.5), &roi_at(PointF::new(40.0, 40.0), 20, 0.0));
        assert!((0..361).all(|c| p.get(12, c) < 30));
    }

    fn polar_from_column(col: &[u8]) -> PolarImage {
        let rows = col.len();
        let mut data = vec![0; rows * 3];
        for (r, &v) in col.iter().enumerate() {
            data[r * 3..r * 3 + 3].fill(v);
        }
        PolarImage::from_vec(rows, 3, data).unwrap()
    }

    #[test]
    fn start_row_rules() {
        let mut col = vec![100u8; 20];
        col[13] = 10;
        col[17] = 20;
        assert_eq!(select_start_row(&polar_from_column(&col), 10).unwrap(), 17);
        let dec: Vec<u8> = (0..20).map(|r| 200 - r as u8 * 5).collect();
        assert_eq!(select_start_row(&polar_from_column(&dec), 10).unwrap(), 19);
        assert_eq!(select_start_row(&polar_from_column(&[7; 20]), 10).unwrap(), 19);
        assert!(select_start_row(&polar_from_column(&[7; 10]), 10).is_err());
    }

    #[test]
    fn constant_polar_gives_flat_path() {
        let p = PolarImage::from_vec(20, 361, vec![1; 20 * 361]).unwrap();
        let path = circular_shortest_path(&p, 15, 10).unwrap();
        assert_eq!(path.cost, 361);
        assert!(path.radii.iter().all(|&r| r == 15));
    }

    #[test]
    fn zero_row_is_followed() {
        let p = PolarImage::from_vec(20, 361, (0..20 * 361).map(|i| if i / 361 == 12 { 0 } else { 255 }).collect())
            .unwrap();
        let path = circular_shortest_path(&p, 12, 10).unwrap();
        assert_eq!(path.cost, 0);
        assert!(path.radii.iter().all(|&r| r == 12));
        assert!(matches!(
            circular_shortest_path(&p, 9, 10),
            Err(Error::InfeasibleStart { start_row: 9, r_min: 10 })
        ));
    }

    fn brute_force(p: &PolarImage, start: usize, r_min: usize) -> u64 {
        fn walk(p: &PolarImage, c: usize, r: usize, start: usize, r_min: usize, acc: u64, best: &mut u64) {
            let acc = acc + p.get(r, c) as u64;
            if c + 1 == p.cols() {
                if r == start {
                    *best = (*best).min(acc);
                }
                return;
            }
            for d in [-1i64, 0, 1] {
                let n = r as i64 + d;
                if n >= r_min as i64 && n < p.rows() as i64 {
                    walk(p, c + 1, n as usize, start, r_min, acc, best);
                }
            }
        }
        let mut best = u64::MAX;
        walk(p, 0, start, start, r_min, 0, &mut best);
        best
    }

    fn toy() -> impl Strategy<Value = (PolarImage, usize, usize)> {
        (2usize..=8, 9usize..=13)
            .prop_flat_map(|(rows, cols)| {
                (
                    Just(rows),
                    Just(cols),
                    prop::collection::vec(any::<u8>(), rows * cols),
                    0..rows,
                )
            })
            .prop_flat_map(|(rows, cols, mut data, r_min)| {
                for r in 0..rows {
                    data[r * cols + cols - 1] = data[r * cols];
                }
                let p = PolarImage::from_vec(rows, cols, data).unwrap();
                (Just(p), r_min..rows, Just(r_min))
            })
    }

    proptest! {
        #[test]
        fn dp_matches_enumeration((p, start, r_min) in toy()) {
            let path = circular_shortest_path(&p, start, r_min).unwrap();
            prop_assert_eq!(path.cost, brute_force(&p, start, r_min));
            prop_assert!(path.is_feasible(p.rows(), r_min));
            let traced: u64 = path.radii.iter().enumerate().map(|(c, &r)| p.get(r, c) as u64).sum();
            prop_assert_eq!(traced, path.cost);
        }

        #[test]
        fn raising_a_pixel_never_lowers_cost((p, start, r_min) in toy(), r in 0usize..8, c in 0usize..13, bump in 1u8..=255) {
            let base = circular_shortest_path(&p, start, r_min).unwrap().cost;
            let (r, c) = (r % p.rows(), c % p.cols());
            let mut data = p.data.clone();
            let cols = p.cols();
            let raise = |v: u8| v.saturating_add(bump);
            data[r * cols + c] = raise(data[r * cols + c]);
            if c == 0 || c == cols - 1 {
                data[r * cols] = data[r * cols + c];
                data[r * cols + cols - 1] = data[r * cols + c];
            }
            let q = PolarImage::from_vec(p.rows(), cols, data).unwrap();
            prop_assert!(circular_shortest_path(&q, start, r_min).unwrap().cost >= base);
        }

        #[test]
        fn rotation_shifts_columns(k in 1usize..90) {
            let img = GrayImage::from_fn(90, 90, |x, y| {
                let (dx, dy) = (x as f64 - 45.0, y as f64 - 45.0);
                (128.0 + 60.0 * (dy.atan2(dx) * 3.0).sin() * (dx * dx + dy * dy).sqrt() / 30.0).clamp(0.0, 255.0) as u8
            });
            let c = PointF::new(45.0, 45.0);
            let rotated_about = |deg: f64| {
                let t = crate::imaging::Affine2D::similarity_about(c, -deg, 1.0, 0.0, 0.0);
                crate::imaging::warp_affine(&img, &t, crate::imaging::Interpolation::Bilinear).unwrap()
            };
            let rot = rotated_about(k as f64);
            let a = polar_transform(&img, &roi_at(c, 20, 0.0));
            let b = polar_transform(&rot, &roi_at(c, 20, 0.0));
            for r in 2..18 {
                for col in 0..360 {
                    let shifted = b.get(r, (col + k) % 360) as i32;
                    prop_assert!((shifted - a.get(r, col) as i32).abs() <= 2 + r as i32 / 4,
                        "r={} col={} {} vs {}", r, col, shifted, a.get(r, col));
                }
            }
        }
    }

    #[test]
    fn flat_path_fills_a_disk() {
        let path = CircularPath {
            radii: vec![12; 361],
            cost: 0,
        };
        let roi = roi_at(PointF::new(40.0, 40.0), 20, 0.0);
        let shape = path_to_shape(&path, &roi, (80, 80)).unwrap();
        let expected = std::f64::consts::PI * 144.0;
        let area = shape.full.count() as f64;
        assert!((area - expected).abs() / expected < 0.08, "area {area}");
        assert!(shape.interior.get(40, 40));
        assert!(shape.contour.intersection(&shape.interior).is_empty());
        assert_eq!(shape.full, shape.contour.union(&shape.interior));
        let (_, areas) = crate::morphology::label_components(&shape.interior, Connectivity::Four);
        assert_eq!(areas.len(), 2);
    }

    #[test]
    fn ring_is_segmented() {
        let img = ring_image(12.0, 0.75);
        let roi = roi_at(PointF::new(40.0, 40.0), 20, 0.0);
        let (_, path, shape) = extract_shape(&img, &roi, 10).unwrap();
        assert_eq!(path.radii[0], 12);
        assert!(shape.interior.get(40, 40));
        let area = shape.full.count() as f64;
        assert!((area / (std::f64::consts::PI * 144.0) - 1.0).abs() < 0.1);
        let png = tempfile::tempdir().unwrap();
        write_overlay(png.path().join("o.png"), &img, &roi, &shape).unwrap();
        write_polar(png.path().join("p.png"), &polar_transform(&img, &roi)).unwrap();
    }

    #[test]
    fn gap_is_reported() {
        let path = CircularPath {
            radii: vec![12, 12, 12],
            cost: 0,
        };
        // Three samples 180° apart do not enclose anything.
        let roi = roi_at(PointF::new(40.0, 40.0), 20, 0.0);
        assert!(path_to_shape(&path, &roi, (80, 80)).is_err());
    }
}
