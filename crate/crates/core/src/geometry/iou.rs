use serde::{Deserialize, Serialize};

use super::{bev_corners, polygon_intersection_area, Box3};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouKind {
    Bev,
    #[serde(rename = "3d")]
    ThreeD,
}

impl IouKind {
    pub fn eval<T: Scalar>(self, a: &Box3<T>, b: &Box3<T>) -> T {
        match self {
            IouKind::Bev => iou_bev(a, b),
            IouKind::ThreeD => iou_3d(a, b),
        }
    }
}

fn bev_overlap<T: Scalar>(a: &Box3<T>, b: &Box3<T>) -> T {
    if a.center().x == b.center().x
        && a.center().y == b.center().y
        && a.size().l == b.size().l
        && a.size().w == b.size().w
        && a.yaw() == b.yaw()
    {
        return a.bev_area();
    }
    // clip in a canonical order so the result is bit-symmetric
    let (a, b) = if lex_less(b, a) { (b, a) } else { (a, b) };
    // cheap rejection on circumscribed circles
    let dx = a.center().x - b.center().x;
    let dy = a.center().y - b.center().y;
    let ra = (a.size().l.powi(2) + a.size().w.powi(2)).sqrt() / T::lit(2.0);
    let rb = (b.size().l.powi(2) + b.size().w.powi(2)).sqrt() / T::lit(2.0);
    if (dx * dx + dy * dy).sqrt() > ra + rb {
        return T::zero();
    }
    polygon_intersection_area(&bev_corners(a), &bev_corners(b))
}

fn lex_less<T: Scalar>(a: &Box3<T>, b: &Box3<T>) -> bool {
    let (x, y) = (a.to_array(), b.to_array());
    for i in 0..7 {
        if x[i] < y[i] {
            return true;
        }
        if x[i] > y[i] {
            return false;
        }
    }
    false
}

fn ratio<T: Scalar>(inter: T, ua: T, ub: T) -> T {
    let union = ua + ub - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).max(T::zero()).min(T::one())
}

/// Bird's-eye-view IoU of the yaw-rotated footprints.
pub fn iou_bev<T: Scalar>(a: &Box3<T>, b: &Box3<T>) -> T {
    if a == b {
        return T::one();
    }
    ratio(bev_overlap(a, b), a.bev_area(), b.bev_area())
}

/// Volumetric IoU of two upright boxes: BEV overlap times z-interval overlap.
pub fn iou_3d<T: Scalar>(a: &Box3<T>, b: &Box3<T>) -> T {
    if a == b {
        return T::one();
    }
    let (a0, a1) = a.z_range();
    let (b0, b1) = b.z_range();
    let dz = a1.min(b1) - a0.max(b0);
    if dz <= T::zero() {
        return T::zero();
    }
    let inter = bev_overlap(a, b) * dz;
    ratio(inter, a.volume(), b.volume())
}

/// Dense row-major IoU matrix; either dimension may be zero.
#[derive(Debug, Clone, PartialEq)]
pub struct IouMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> IouMatrix<T> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }
}

/// `|a| x |b|` matrix of 3D IoUs.
pub fn pairwise_iou_matrix<T: Scalar>(a: &[Box3<T>], b: &[Box3<T>]) -> IouMatrix<T> {
    pairwise_iou_matrix_with(a, b, IouKind::ThreeD)
}

pub fn pairwise_iou_matrix_with<T: Scalar>(
    a: &[Box3<T>],
    b: &[Box3<T>],
    kind: IouKind,
) -> IouMatrix<T> {
    IouMatrix::from_fn(a.len(), b.len(), |r, c| kind.eval(&a[r], &b[c]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Dims, Point3};

    fn bx(c: [f64; 3], s: [f64; 3], yaw: f64) -> Box3<f64> {
        Box3::new(
            Point3::new(c[0], c[1], c[2]),
            Dims::new(s[0], s[1], s[2]),
            yaw,
        )
        .unwrap()
    }

    #[test]
    fn analytic_cases() {
        let a = bx([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], 0.0);
        assert_eq!(iou_bev(&a, &a), 1.0);
        assert_eq!(iou_3d(&a, &a), 1.0);
        let far = bx([5.0, 0.0, 0.0], [1.0, 1.0, 1.0], 0.3);
        assert_eq!(iou_bev(&a, &far), 0.0);
        assert_eq!(iou_3d(&a, &far), 0.0);
        let off = bx([0.5, 0.0, 0.0], [1.0, 1.0, 1.0], 0.0);
        assert!((iou_bev(&a, &off) - 1.0 / 3.0).abs() < 1e-12);
        assert!((iou_3d(&a, &off) - 1.0 / 3.0).abs() < 1e-12);
        let up = bx([0.0, 0.0, 0.5], [1.0, 1.0, 1.0], 0.0);
        assert!((iou_3d(&a, &up) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou_bev(&a, &up), 1.0);
        let gap = bx([0.0, 0.0, 1.5], [1.0, 1.0, 1.0], 0.0);
        assert_eq!(iou_3d(&a, &gap), 0.0);
    }

    #[test]
    fn matrix_shapes() {
        let a = vec![
            bx([0.0, 0.0, 0.0], [4.0, 2.0, 1.5], 0.1),
            bx([3.0, 1.0, 0.0], [4.0, 2.0, 1.5], 1.1),
            bx([9.0, 0.0, 0.0], [4.0, 2.0, 1.5], -2.0),
        ];
        let m = pairwise_iou_matrix(&[], &a);
        assert_eq!((m.rows(), m.cols()), (0, 3));
        let m = pairwise_iou_matrix(&a, &a);
        for i in 0..3 {
            assert_eq!(m.get(i, i), 1.0);
        }
        let b = vec![bx([1.0, 0.5, 0.2], [3.5, 1.8, 1.4], 0.4)];
        assert_eq!(
            pairwise_iou_matrix(&a, &b),
            pairwise_iou_matrix(&b, &a).transpose()
        );
    }
}
