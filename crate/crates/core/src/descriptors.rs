//! Intensity and morphological descriptors of a segmented swim bladder.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::classifier::{Dataset, Label, Sample};
use crate::contour::SegmentedShape;
use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, GrayImage};
use crate::morphology::{disk_offsets, inner_border, opening, Connectivity};

/// Radius of the disk used by the concavity opening.
pub const DEFAULT_OPENING_RADIUS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub mode: f64,
    /// Population variance.
    pub variance: f64,
    pub range: f64,
    pub count: usize,
    /// Sum of intensities.
    pub sum: u64,
}

/// Statistics of `image` under `region`. Mode ties resolve to the smallest
/// intensity.
pub fn region_stats(image: &GrayImage, region: &BinaryMask) -> Result<RegionStats> {
    if image.dims() != region.dims() {
        return Err(Error::DimensionMismatch {
            expected: image.dims(),
            found: region.dims(),
        });
    }
    let mut hist = [0u64; 256];
    for (&v, &m) in image.data().iter().zip(region.data()) {
        if m {
            hist[v as usize] += 1;
        }
    }
    stats_from_histogram(&hist)
}

/// Statistics of a 256-bin intensity histogram.
pub fn stats_from_histogram(hist: &[u64; 256]) -> Result<RegionStats> {
    let n: u64 = hist.iter().sum();
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    let min = hist.iter().position(|&c| c > 0).expect("non-empty");
    let max = hist.iter().rposition(|&c| c > 0).expect("non-empty");
    let (mut sum, mut sum_sq) = (0u128, 0u128);
    let mut mode = min;
    for (v, &c) in hist.iter().enumerate() {
        sum += v as u128 * c as u128;
        sum_sq += (v * v) as u128 * c as u128;
        if c > hist[mode] {
            mode = v;
        }
    }
    // Integer numerator keeps the variance exactly shift-invariant.
    let n128 = n as u128;
    let variance = (n128 * sum_sq - sum * sum) as f64 / (n128 * n128) as f64;
    let nth = |k: u64| {
        let mut acc = 0;
        for (v, &c) in hist.iter().enumerate() {
            acc += c;
            if acc > k {
                return v;
            }
        }
        unreachable!("rank below total")
    };
    let median = if n % 2 == 1 {
        nth(n / 2) as f64
    } else {
        (nth(n / 2 - 1) + nth(n / 2)) as f64 / 2.0
    };
    Ok(RegionStats {
        min: min as f64,
        max: max as f64,
        mean: sum as f64 / n as f64,
        median,
        mode: mode as f64,
        variance,
        range: (max - min) as f64,
        count: n as usize,
        sum: sum as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityFeatures {
    pub interior: RegionStats,
    pub contour: RegionStats,
    pub min_diff: f64,
    pub max_diff: f64,
    pub av_diff: f64,
    pub mode_diff: f64,
    pub median_diff: f64,
    pub rrange: f64,
    pub covering: f64,
    /// `rrange` had a zero denominator and was set to 0.
    pub rrange_degenerate: bool,
    /// `covering` had a zero denominator and was set to 0.
    pub covering_degenerate: bool,
}

/// `mean(a) - mean(b)` from integer sums, exact under intensity shifts.
fn mean_difference(a: &RegionStats, b: &RegionStats) -> f64 {
    if a.count == 0 || b.count == 0 {
        return a.mean - b.mean;
    }
    let num = a.sum as i128 * b.count as i128 - b.sum as i128 * a.count as i128;
    num as f64 / (a.count as i128 * b.count as i128) as f64
}

fn guarded(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

/// Cross-region comparisons of interior (`si`) against contour (`sc`).
pub fn intensity_features(si: &RegionStats, sc: &RegionStats) -> IntensityFeatures {
    let (rrange, rrange_degenerate) = guarded(si.range, sc.range);
    let (covering, covering_degenerate) = guarded(sc.max - si.min, si.max - sc.min);
    IntensityFeatures {
        interior: *si,
        contour: *sc,
        min_diff: si.min - sc.min,
        max_diff: si.max - sc.max,
        av_diff: mean_difference(si, sc),
        mode_diff: si.mode - sc.mode,
        median_diff: si.median - sc.median,
        rrange,
        covering,
        rrange_degenerate,
        covering_degenerate,
    }
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull of pixel centers, counter-clockwise in (x, y) without
/// repeated end point.
pub fn convex_hull(mask: &BinaryMask) -> Vec<(i64, i64)> {
    let mut pts: Vec<(i64, i64)> = mask.points().map(|(x, y)| (x as i64, y as i64)).collect();
    pts.sort_unstable();
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Pixels whose centers lie inside or on the hull of `mask`.
pub fn hull_mask(mask: &BinaryMask) -> BinaryMask {
    let hull = convex_hull(mask);
    let (w, h) = mask.dims();
    let mut out = BinaryMask::new(w, h);
    let Some((x0, y0, x1, y1)) = mask.bounding_box() else {
        return out;
    };
    let k = hull.len();
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = (x as i64, y as i64);
            let inside = match k {
                1 => p == hull[0],
                2 => {
                    cross(hull[0], hull[1], p) == 0
                        && p.0 >= hull[0].0.min(hull[1].0)
                        && p.0 <= hull[0].0.max(hull[1].0)
                        && p.1 >= hull[0].1.min(hull[1].1)
                        && p.1 <= hull[0].1.max(hull[1].1)
                }
                _ => (0..k).all(|i| cross(hull[i], hull[(i + 1) % k], p) >= 0),
            };
            if inside {
                out.set(x, y, true);
            }
        }
    }
    out
}

/// Pixel area the convex hull adds to `s`.
pub fn convexity_of(s: &BinaryMask) -> f64 {
    hull_mask(s).difference(s).count() as f64
}

/// Pixel area removed by opening `s` with a disk of `radius`.
pub fn concavity_of(s: &BinaryMask, radius: usize) -> f64 {
    s.difference(&opening(s, &disk_offsets(radius))).count() as f64
}

/// Border pixel count: mean of the 8-connected and 4-connected inner
/// borders.
pub fn perimeter(s: &BinaryMask) -> f64 {
    let b4 = inner_border(s, Connectivity::Four).count();
    let b8 = inner_border(s, Connectivity::Eight).count();
    (b4 + b8) as f64 / 2.0
}

/// `4 · area / perimeter²`.
pub fn elongation_of(s: &BinaryMask) -> Result<f64> {
    let p = perimeter(s);
    if p == 0.0 {
        return Err(Error::DegeneratePerimeter);
    }
    Ok(4.0 * s.count() as f64 / (p * p))
}

pub fn convexity(shape: &SegmentedShape) -> f64 {
    convexity_of(&shape.full)
}

pub fn concavity(shape: &SegmentedShape) -> f64 {
    concavity_of(&shape.full, DEFAULT_OPENING_RADIUS)
}

pub fn elongation(shape: &SegmentedShape) -> Result<f64> {
    elongation_of(&shape.full)
}

/// Canonical descriptor order.
pub const FEATURE_NAMES: [&str; 24] = [
    "variance_si",
    "min_si",
    "max_si",
    "average_si",
    "mode_si",
    "median_si",
    "range_si",
    "variance_sc",
    "min_sc",
    "max_sc",
    "average_sc",
    "mode_sc",
    "median_sc",
    "range_sc",
    "min_diff",
    "max_diff",
    "av_diff",
    "mode_diff",
    "median_diff",
    "rrange",
    "covering",
    "convexity",
    "concavity",
    "elongation",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub variance_si: f64,
    pub min_si: f64,
    pub max_si: f64,
    pub average_si: f64,
    pub mode_si: f64,
    pub median_si: f64,
    pub range_si: f64,
    pub variance_sc: f64,
    pub min_sc: f64,
    pub max_sc: f64,
    pub average_sc: f64,
    pub mode_sc: f64,
    pub median_sc: f64,
    pub range_sc: f64,
    pub min_diff: f64,
    pub max_diff: f64,
    pub av_diff: f64,
    pub mode_diff: f64,
    pub median_diff: f64,
    pub rrange: f64,
    pub covering: f64,
    pub convexity: f64,
    pub concavity: f64,
    pub elongation: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; 24] {
        [
            self.variance_si,
            self.min_si,
            self.max_si,
            self.average_si,
            self.mode_si,
            self.median_si,
            self.range_si,
            self.variance_sc,
            self.min_sc,
            self.max_sc,
            self.average_sc,
            self.mode_sc,
            self.median_sc,
            self.range_sc,
            self.min_diff,
            self.max_diff,
            self.av_diff,
            self.mode_diff,
            self.median_diff,
            self.rrange,
            self.covering,
            self.convexity,
            self.concavity,
            self.elongation,
        ]
    }

    pub fn from_array(v: [f64; 24]) -> Self {
        Self {
            variance_si: v[0],
            min_si: v[1],
            max_si: v[2],
            average_si: v[3],
            mode_si: v[4],
            median_si: v[5],
            range_si: v[6],
            variance_sc: v[7],
            min_sc: v[8],
            max_sc: v[9],
            average_sc: v[10],
            mode_sc: v[11],
            median_sc: v[12],
            range_sc: v[13],
            min_diff: v[14],
            max_diff: v[15],
            av_diff: v[16],
            mode_diff: v[17],
            median_diff: v[18],
            rrange: v[19],
            covering: v[20],
            convexity: v[21],
            concavity: v[22],
            elongation: v[23],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|&n| n == name).map(|i| self.to_array()[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Features {
    pub vector: FeatureVector,
    pub rrange_degenerate: bool,
    pub covering_degenerate: bool,
}

/// All descriptors of `shape` over `image`, with the given opening radius.
pub fn features_with(image: &GrayImage, shape: &SegmentedShape, opening_radius: usize) -> Result<Features> {
    let si = region_stats(image, &shape.interior)?;
    let sc = region_stats(image, &shape.contour)?;
    let f = intensity_features(&si, &sc);
    let vector = FeatureVector {
        variance_si: si.variance,
        min_si: si.min,
        max_si: si.max,
        average_si: si.mean,
        mode_si: si.mode,
        median_si: si.median,
        range_si: si.range,
        variance_sc: sc.variance,
        min_sc: sc.min,
        max_sc: sc.max,
        average_sc: sc.mean,
        mode_sc: sc.mode,
        median_sc: sc.median,
        range_sc: sc.range,
        min_diff: f.min_diff,
        max_diff: f.max_diff,
        av_diff: f.av_diff,
        mode_diff: f.mode_diff,
        median_diff: f.median_diff,
        rrange: f.rrange,
        covering: f.covering,
        convexity: convexity_of(&shape.full),
        concavity: concavity_of(&shape.full, opening_radius),
        elongation: elongation_of(&shape.full)?,
    };
    debug_assert!(vector.to_array().iter().all(|v| v.is_finite()));
    Ok(Features {
        vector,
        rrange_degenerate: f.rrange_degenerate,
        covering_degenerate: f.covering_degenerate,
    })
}

pub fn feature_vector(image: &GrayImage, shape: &SegmentedShape) -> Result<FeatureVector> {
    Ok(features_with(image, shape, DEFAULT_OPENING_RADIUS)?.vector)
}

/// Formats with six significant digits, `%g` style.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    let sci = format!("{v:.5e}");
    let sci_exp: i32 = sci.split_once('e').map(|(_, e)| e.parse().expect("exponent")).unwrap_or(exp);
    if (-4..6).contains(&sci_exp) {
        let decimals = (5 - sci_exp).max(0) as usize;
        trim(format!("{v:.decimals$}"))
    } else {
        let (mantissa, e) = sci.split_once('e').expect("scientific");
        format!("{}e{e}", trim(mantissa.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub image_id: String,
    pub label: Option<Label>,
    pub features: FeatureVector,
}

pub fn csv_header() -> Vec<&'static str> {
    let mut h = vec!["image_id", "label"];
    h.extend(FEATURE_NAMES);
    h
}

pub fn write_features_csv<W: Write>(writer: W, rows: &[FeatureRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(csv_header()).map_err(csv_error)?;
    for row in rows {
        let mut rec = vec![row.image_id.clone(), row.label.map(|l| l.as_str().to_string()).unwrap_or_default()];
        rec.extend(row.features.to_array().iter().map(|&v| format_sig6(v)));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_csv<R: Read>(reader: R) -> Result<Vec<FeatureRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(csv_error)?.clone();
    if header.iter().collect::<Vec<_>>() != csv_header() {
        return Err(Error::Format("feature CSV header does not match the canonical order".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        let label = match &rec[1] {
            "" => None,
            s => Some(s.parse::<Label>().map_err(|e| Error::Format(format!("{e}")))?),
        };
        let mut values = [0.0; 24];
        for (i, v) in values.iter_mut().enumerate() {
            *v = rec[i + 2]
                .parse()
                .map_err(|_| Error::Format(format!("bad number '{}' for {}", &rec[i + 2], FEATURE_NAMES[i])))?;
        }
        rows.push(FeatureRow {
            image_id: rec[0].to_string(),
            label,
            features: FeatureVector::from_array(values),
        });
    }
    Ok(rows)
}

/// Labelled rows as a classifier dataset; unlabelled rows are an error.
pub fn rows_to_dataset(rows: &[FeatureRow]) -> Result<Dataset> {
    let samples = rows
        .iter()
        .map(|r| {
            Ok(Sample {
                id: r.image_id.clone(),
                features: r.features.to_array().to_vec(),
                label: r
                    .label
                    .ok_or_else(|| Error::Format(format!("row {} has no label", r.image_id)))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}
