//! Binary morphology and connected-component utilities.

use std::collections::VecDeque;

use crate::imaging::{BinaryMask, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

/// Offsets of the discrete disk `dx² + dy² ≤ r² + r`, i.e. pixel centers
/// within `r + ½` of the origin (up to the quarter-pixel rounding term).
pub fn disk_offsets(radius: usize) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r + r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Disk of radius `radius` centered on `(cx, cy)` drawn into a fresh mask.
pub fn disk_mask(width: usize, height: usize, cx: i64, cy: i64, radius: usize) -> BinaryMask {
    let mut m = BinaryMask::new(width, height);
    for (dx, dy) in disk_offsets(radius) {
        let (x, y) = (cx + dx, cy + dy);
        if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
            m.set(x as usize, y as usize, true);
        }
    }
    m
}

/// Erosion by a symmetric structuring element; the outside is background.
pub fn erode(mask: &BinaryMask, se: &[(i64, i64)]) -> BinaryMask {
    let (w, h) = mask.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        mask.get(x, y)
            && se
                .iter()
                .all(|&(dx, dy)| mask.get_signed(x as i64 + dx, y as i64 + dy))
    })
}

pub fn dilate(mask: &BinaryMask, se: &[(i64, i64)]) -> BinaryMask {
    let (w, h) = mask.dims();
    let mut out = BinaryMask::new(w, h);
    for (x, y) in mask.points() {
        for &(dx, dy) in se {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                out.set(nx as usize, ny as usize, true);
            }
        }
    }
    out
}

/// Erosion followed by dilation (anti-extensive).
pub fn opening(mask: &BinaryMask, se: &[(i64, i64)]) -> BinaryMask {
    dilate(&erode(mask, se), se)
}

/// Connected components labelled 1..=n (0 = background), in raster order of
/// their first pixel. Returns the label image and per-label areas (index 0
/// unused).
pub fn label_components(mask: &BinaryMask, conn: Connectivity) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut areas = vec![0usize];
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.data()[start] || labels[start] != 0 {
            continue;
        }
        let label = areas.len() as u32;
        let mut area = 0;
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            area += 1;
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for &(dx, dy) in conn.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if mask.get_signed(nx, ny) {
                    let j = ny as usize * w + nx as usize;
                    if labels[j] == 0 {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                }
            }
        }
        areas.push(area);
    }
    (labels, areas)
}

/// Largest connected component; ties keep the one found first.
pub fn largest_component(mask: &BinaryMask, conn: Connectivity) -> BinaryMask {
    let (labels, areas) = label_components(mask, conn);
    let (w, h) = mask.dims();
    let best = areas
        .iter()
        .enumerate()
        .skip(1)
        .fold((0usize, 0usize), |acc, (l, &a)| if a > acc.1 { (l, a) } else { acc });
    if best.0 == 0 {
        return BinaryMask::new(w, h);
    }
    BinaryMask::from_vec(w, h, labels.iter().map(|&l| l as usize == best.0).collect())
        .expect("same dimensions")
}

/// Pixels reachable from `seed` through `region` pixels.
pub fn flood_fill(region: &BinaryMask, seed: (usize, usize), conn: Connectivity) -> BinaryMask {
    let (w, h) = region.dims();
    let mut out = BinaryMask::new(w, h);
    if !region.get(seed.0, seed.1) {
        return out;
    }
    let mut queue = VecDeque::from([seed]);
    out.set(seed.0, seed.1, true);
    while let Some((x, y)) = queue.pop_front() {
        for &(dx, dy) in conn.offsets() {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if region.get_signed(nx, ny) && !out.get(nx as usize, ny as usize) {
                out.set(nx as usize, ny as usize, true);
                queue.push_back((nx as usize, ny as usize));
            }
        }
    }
    out
}

/// Fills background regions not 4-connected to the frame border.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    let background = mask.complement();
    let mut outside = BinaryMask::new(w, h);
    let mut queue = VecDeque::new();
    let push = |x: usize, y: usize, outside: &mut BinaryMask, q: &mut VecDeque<(usize, usize)>| {
        if background.get(x, y) && !outside.get(x, y) {
            outside.set(x, y, true);
            q.push_back((x, y));
        }
    };
    for x in 0..w {
        push(x, 0, &mut outside, &mut queue);
        push(x, h - 1, &mut outside, &mut queue);
    }
    for y in 0..h {
        push(0, y, &mut outside, &mut queue);
        push(w - 1, y, &mut outside, &mut queue);
    }
    while let Some((x, y)) = queue.pop_front() {
        for &(dx, dy) in Connectivity::Four.offsets() {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                push(nx as usize, ny as usize, &mut outside, &mut queue);
            }
        }
    }
    outside.complement()
}

/// Pixels of `mask` with at least one `conn`-neighbour outside it.
/// `Four` yields the 8-connected inner border, `Eight` the thicker
/// 4-connected one.
pub fn inner_border(mask: &BinaryMask, conn: Connectivity) -> BinaryMask {
    let (w, h) = mask.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        mask.get(x, y)
            && conn
                .offsets()
                .iter()
                .any(|&(dx, dy)| !mask.get_signed(x as i64 + dx, y as i64 + dy))
    })
}

/// Zhang–Suen thinning to a one-pixel-wide skeleton.
pub fn thin(mask: &BinaryMask) -> BinaryMask {
    let mut cur = mask.clone();
    let (w, h) = cur.dims();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for (x, y) in cur.points() {
                let (xi, yi) = (x as i64, y as i64);
                // P2..P9 clockwise from north
                let nb = [
                    cur.get_signed(xi, yi - 1),
                    cur.get_signed(xi + 1, yi - 1),
                    cur.get_signed(xi + 1, yi),
                    cur.get_signed(xi + 1, yi + 1),
                    cur.get_signed(xi, yi + 1),
                    cur.get_signed(xi - 1, yi + 1),
                    cur.get_signed(xi - 1, yi),
                    cur.get_signed(xi - 1, yi - 1),
                ];
                let b = nb.iter().filter(|&&v| v).count();
                if !(2..=6).contains(&b) {
                    continue;
                }
                let a = (0..8).filter(|&i| !nb[i] && nb[(i + 1) % 8]).count();
                if a != 1 {
                    continue;
                }
                let (p2, p4, p6, p8) = (nb[0], nb[2], nb[4], nb[6]);
                let ok = if pass == 0 {
                    !(p2 && p4 && p6) && !(p4 && p6 && p8)
                } else {
                    !(p2 && p4 && p8) && !(p2 && p6 && p8)
                };
                if ok {
                    remove.push((x, y));
                }
            }
            if !remove.is_empty() {
                changed = true;
                for (x, y) in remove {
                    cur.set(x, y, false);
                }
            }
        }
        if !changed {
            break;
        }
    }
    debug_assert_eq!(cur.dims(), (w, h));
    cur
}

/// Otsu threshold: the level `t` maximizing between-class variance of the
/// split `v ≤ t` / `v > t`.
pub fn otsu_level(image: &GrayImage) -> u8 {
    let mut hist = [0u64; 256];
    for &v in image.data() {
        hist[v as usize] += 1;
    }
    let total = image.data().len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_t) = (-1.0, 0u8);
    for (t, &c) in hist.iter().enumerate() {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_t = t as u8;
        }
    }
    best_t
}
