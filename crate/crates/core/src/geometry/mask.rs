use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Dense binary mask stored row-major, one bit per pixel.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("area", &self.area())
            .finish()
    }
}

fn word_count(len: usize) -> usize {
    len.div_ceil(64)
}

impl BinaryMask {
    /// All-background mask. Panics if either dimension is zero.
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height >= 1 && width >= 1, "mask dimensions must be >= 1");
        Self {
            height,
            width,
            words: vec![0; word_count(height * width)],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        let mut m = Self::new(height, width);
        for i in 0..height * width {
            m.set_index(i, true);
        }
        m
    }

    /// Build from a row-major iterator of pixel values (non-zero is foreground).
    pub fn from_row_major<I, T>(height: usize, width: usize, values: I) -> Result<Self, GeometryError>
    where
        I: IntoIterator<Item = T>,
        T: Into<u8>,
    {
        if height == 0 || width == 0 {
            return Err(GeometryError::EmptyDimensions);
        }
        let mut m = Self::new(height, width);
        let mut n = 0;
        for (i, v) in values.into_iter().enumerate() {
            if i >= height * width {
                return Err(GeometryError::LengthMismatch {
                    expected: height * width,
                    actual: i + 1,
                });
            }
            if v.into() != 0 {
                m.set_index(i, true);
            }
            n = i + 1;
        }
        if n != height * width {
            return Err(GeometryError::LengthMismatch {
                expected: height * width,
                actual: n,
            });
        }
        Ok(m)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(height, width);
        for y in 0..height {
            for x in 0..width {
                if f(y, x) {
                    m.set(y, x, true);
                }
            }
        }
        m
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        debug_assert!(y < self.height && x < self.width);
        self.get_index(y * self.width + x)
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        debug_assert!(y < self.height && x < self.width);
        self.set_index(y * self.width + x, value)
    }

    #[inline]
    pub(crate) fn get_index(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub(crate) fn set_index(&mut self, i: usize, value: bool) {
        let bit = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }

    fn check_shape(&self, other: &Self) -> Result<(), GeometryError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(GeometryError::DimensionMismatch {
                left: (self.height, self.width),
                right: (other.height, other.width),
            })
        }
    }

    pub fn intersection_area(&self, other: &Self) -> Result<u64, GeometryError> {
        self.check_shape(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum())
    }

    pub fn union_area(&self, other: &Self) -> Result<u64, GeometryError> {
        self.check_shape(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as u64)
            .sum())
    }

    /// In-place union.
    pub fn or_assign(&mut self, other: &Self) -> Result<(), GeometryError> {
        self.check_shape(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        Ok(())
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    /// Row-major iterator over pixels.
    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(move |i| self.get_index(i))
    }

    /// Tight pixel-edge bounding box `(x1, y1, x2, y2)` of the foreground, if any.
    pub fn bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let mut out: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(y, x) {
                    out = Some(match out {
                        None => (x, y, x + 1, y + 1),
                        Some((x1, y1, x2, y2)) => (x1.min(x), y1.min(y), x2.max(x + 1), y2.max(y + 1)),
                    });
                }
            }
        }
        out
    }
}

/// Intersection over union of two equally sized masks.
///
/// Two empty masks have IoU 1.0. Metric code applies its own no-target rules
/// before reaching this primitive.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, GeometryError> {
    let inter = a.intersection_area(b)?;
    let union = a.union_area(b)?;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(h: usize, w: usize, lo: usize, hi: usize) -> BinaryMask {
        BinaryMask::from_fn(h, w, |y, _| y >= lo && y <= hi)
    }

    #[test]
    fn identical_masks_have_iou_one() {
        let a = rows(4, 4, 1, 2);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_masks_have_iou_zero() {
        let a = rows(4, 4, 0, 0);
        let b = rows(4, 4, 3, 3);
        assert_eq!(mask_iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn overlapping_row_bands() {
        let a = rows(4, 4, 0, 1);
        let b = rows(4, 4, 1, 2);
        assert!((mask_iou(&a, &b).unwrap() - 4.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn both_empty_is_one() {
        let a = BinaryMask::new(3, 5);
        assert_eq!(mask_iou(&a, &a.clone()).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let a = BinaryMask::new(3, 5);
        let b = BinaryMask::new(5, 3);
        assert!(matches!(mask_iou(&a, &b), Err(GeometryError::DimensionMismatch { .. })));
    }

    #[test]
    fn from_row_major_checks_length() {
        assert!(BinaryMask::from_row_major(2, 2, [1u8, 0, 1]).is_err());
        assert!(BinaryMask::from_row_major(2, 2, [1u8, 0, 1, 0, 1]).is_err());
        let m = BinaryMask::from_row_major(2, 2, [1u8, 0, 0, 1]).unwrap();
        assert!(m.get(0, 0) && m.get(1, 1) && !m.get(0, 1));
    }

    #[test]
    fn bounds_are_pixel_edges() {
        let m = BinaryMask::from_fn(6, 6, |y, x| (2..4).contains(&y) && (1..5).contains(&x));
        assert_eq!(m.bounds(), Some((1, 2, 5, 4)));
        assert_eq!(BinaryMask::new(2, 2).bounds(), None);
    }

    #[test]
    fn large_mask_spans_words() {
        let m = BinaryMask::full(13, 11);
        assert_eq!(m.area(), 143);
        assert!(!m.is_empty());
    }
}
