use super::raster::{BinaryMask, GrayImage, PointF, ProbImage};
use crate::error::{Error, Result};

fn common_dims<T>(items: &[T], dims: impl Fn(&T) -> (usize, usize)) -> Result<(usize, usize)> {
    let first = items.first().ok_or(Error::EmptyStack)?;
    let expected = dims(first);
    for item in &items[1..] {
        let found = dims(item);
        if found != expected {
            return Err(Error::DimensionMismatch { expected, found });
        }
    }
    Ok(expected)
}

/// Per-pixel median. An even count takes the mean of the two middle values,
/// rounded half up.
pub fn median_stack(images: &[GrayImage]) -> Result<GrayImage> {
    let (w, h) = common_dims(images, GrayImage::dims)?;
    let n = images.len();
    let mut column = vec![0u8; n];
    let mut out = Vec::with_capacity(w * h);
    for i in 0..w * h {
        for (slot, img) in column.iter_mut().zip(images) {
            *slot = img.data()[i];
        }
        column.sort_unstable();
        let v = if n % 2 == 1 {
            column[n / 2]
        } else {
            let s = column[n / 2 - 1] as u16 + column[n / 2] as u16;
            s.div_ceil(2) as u8
        };
        out.push(v);
    }
    GrayImage::from_vec(w, h, out)
}

/// Per-pixel fraction of masks that are set.
pub fn mean_stack(masks: &[BinaryMask]) -> Result<ProbImage> {
    let (w, h) = common_dims(masks, BinaryMask::dims)?;
    let n = masks.len() as f64;
    let data = (0..w * h)
        .map(|i| masks.iter().filter(|m| m.data()[i]).count() as f64 / n)
        .collect();
    ProbImage::from_vec(w, h, data)
}

/// Mean coordinate of the true pixels.
pub fn barycenter(mask: &BinaryMask) -> Result<PointF> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (x, y) in mask.points() {
        sx += x as f64;
        sy += y as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(PointF::new(sx / n as f64, sy / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn px(v: u8) -> GrayImage {
        GrayImage::filled(1, 1, v)
    }

    #[test]
    fn median_rules() {
        assert_eq!(median_stack(&[px(10), px(200), px(50)]).unwrap().get(0, 0), 50);
        assert_eq!(median_stack(&[px(40), px(10), px(30), px(20)]).unwrap().get(0, 0), 25);
        let img = GrayImage::from_fn(5, 4, |x, y| (x * 40 + y) as u8);
        assert_eq!(median_stack(&vec![img.clone(); 4]).unwrap(), img);
    }

    #[test]
    fn stack_errors() {
        assert!(matches!(median_stack(&[]), Err(Error::EmptyStack)));
        assert!(matches!(mean_stack(&[]), Err(Error::EmptyStack)));
        assert!(matches!(
            median_stack(&[GrayImage::new(2, 2), GrayImage::new(3, 2)]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            mean_stack(&[BinaryMask::new(2, 2), BinaryMask::new(2, 3)]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mean_fractions() {
        let on = BinaryMask::from_fn(2, 1, |_, _| true);
        let half = BinaryMask::from_fn(2, 1, |x, _| x == 0);
        let p = mean_stack(&[on.clone(), on.clone(), half.clone(), half]).unwrap();
        assert_eq!(p.get(0, 0), 1.0);
        assert_eq!(p.get(1, 0), 0.5);
        // nested iso-levels
        let m1 = p.threshold(1.0);
        let m05 = p.threshold(0.5);
        let m005 = p.threshold(0.05);
        assert!(m1.is_subset_of(&m05) && m05.is_subset_of(&m005));
    }

    #[test]
    fn barycenter_cases() {
        let mut m = BinaryMask::new(12, 12);
        m.set(7, 4, true);
        assert_eq!(barycenter(&m).unwrap(), PointF::new(7.0, 4.0));
        let sq = BinaryMask::from_fn(12, 12, |x, y| (4..=6).contains(&x) && (4..=6).contains(&y));
        assert_eq!(barycenter(&sq).unwrap(), PointF::new(5.0, 5.0));
        let mut two = BinaryMask::new(6, 2);
        two.set(0, 0, true);
        two.set(4, 0, true);
        assert_eq!(barycenter(&two).unwrap(), PointF::new(2.0, 0.0));
        assert!(matches!(barycenter(&BinaryMask::new(3, 3)), Err(Error::EmptyMask)));
    }

    proptest! {
        #[test]
        fn stacks_are_permutation_invariant(
            vals in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 6), 1..7),
            rot in 0usize..7,
        ) {
            let imgs: Vec<GrayImage> = vals.iter().map(|v| GrayImage::from_vec(3, 2, v.clone()).unwrap()).collect();
            let masks: Vec<BinaryMask> = vals
                .iter()
                .map(|v| BinaryMask::from_vec(3, 2, v.iter().map(|&b| b > 127).collect()).unwrap())
                .collect();
            let mut imgs2 = imgs.clone();
            imgs2.rotate_left(rot % imgs.len());
            imgs2.reverse();
            let mut masks2 = masks.clone();
            masks2.rotate_left(rot % masks.len());
            masks2.reverse();
            prop_assert_eq!(median_stack(&imgs).unwrap(), median_stack(&imgs2).unwrap());
            prop_assert_eq!(mean_stack(&masks).unwrap(), mean_stack(&masks2).unwrap());
        }

        #[test]
        fn barycenter_inside_bbox(bits in proptest::collection::vec(any::<bool>(), 64)) {
            let m = BinaryMask::from_vec(8, 8, bits).unwrap();
            if let Some((x0, y0, x1, y1)) = m.bounding_box() {
                let c = barycenter(&m).unwrap();
                prop_assert!(c.x >= x0 as f64 && c.x <= x1 as f64);
                prop_assert!(c.y >= y0 as f64 && c.y <= y1 as f64);
            }
        }
    }
}
