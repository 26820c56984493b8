//! Oriented 3D boxes, rigid transforms, rotated IoU and NMS.
//!
//! Boxes are upright: the only rotation is the heading `yaw` about +z.
//! The length axis of a box points along `(cos yaw, sin yaw)` in world
//! coordinates.

mod iou;
mod nms;
mod polygon;

pub use iou::{iou_3d, iou_bev, pairwise_iou_matrix, pairwise_iou_matrix_with, IouKind, IouMatrix};
pub(crate) use nms::greedy_suppress;
pub use nms::{nms, nms_indices, NmsOutcome, ScoreField};
pub use polygon::{polygon_intersection_area, ConvexPolygon2};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::{normalize_angle, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Point3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn origin() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

/// Box extent along its local length, width and height axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dims<T> {
    pub l: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> Dims<T> {
    pub fn new(l: T, w: T, h: T) -> Self {
        Self { l, w, h }
    }

    pub fn volume(&self) -> T {
        self.l * self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        [self.l, self.w, self.h]
            .iter()
            .all(|v| v.is_finite() && *v > T::zero())
    }
}

/// Upright oriented 3D box.
///
/// Invariants: positive finite size, finite center, yaw in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3<T> {
    center: Point3<T>,
    size: Dims<T>,
    yaw: T,
}

impl<T: Scalar> Box3<T> {
    /// Builds a box, wrapping `yaw` into `(-pi, pi]`.
    pub fn new(center: Point3<T>, size: Dims<T>, yaw: T) -> Result<Self> {
        if !center.is_finite() {
            return Err(invalid(format!("box center not finite: {center:?}")));
        }
        if !size.is_valid() {
            return Err(invalid(format!(
                "box size must be positive and finite: {size:?}"
            )));
        }
        if !yaw.is_finite() {
            return Err(invalid("box yaw not finite"));
        }
        Ok(Self {
            center,
            size,
            yaw: normalize_angle(yaw),
        })
    }

    /// Convenience constructor from the flat `(cx, cy, cz, l, w, h, yaw)` layout.
    pub fn from_array(v: [T; 7]) -> Result<Self> {
        Self::new(
            Point3::new(v[0], v[1], v[2]),
            Dims::new(v[3], v[4], v[5]),
            v[6],
        )
    }

    pub fn to_array(&self) -> [T; 7] {
        let c = self.center;
        let s = self.size;
        [c.x, c.y, c.z, s.l, s.w, s.h, self.yaw]
    }

    pub fn center(&self) -> Point3<T> {
        self.center
    }

    pub fn size(&self) -> Dims<T> {
        self.size
    }

    pub fn yaw(&self) -> T {
        self.yaw
    }

    pub fn volume(&self) -> T {
        self.size.volume()
    }

    pub fn bev_area(&self) -> T {
        self.size.l * self.size.w
    }

    /// Vertical extent `[z_min, z_max]`.
    pub fn z_range(&self) -> (T, T) {
        let half = self.size.h / T::lit(2.0);
        (self.center.z - half, self.center.z + half)
    }

    pub fn with_size(&self, size: Dims<T>) -> Result<Self> {
        Self::new(self.center, size, self.yaw)
    }

    pub fn with_center(&self, center: Point3<T>) -> Result<Self> {
        Self::new(center, self.size, self.yaw)
    }

    pub fn with_yaw(&self, yaw: T) -> Result<Self> {
        Self::new(self.center, self.size, yaw)
    }

    /// Rotation from local box axes to world axes.
    pub fn rotation(&self) -> [[T; 3]; 3] {
        rotation_about_z(self.yaw)
    }

    pub fn bev_corners(&self) -> ConvexPolygon2<T> {
        bev_corners(self)
    }
}

/// Scored detection as produced by a detector after NMS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection<T> {
    pub bbox: Box3<T>,
    pub cls_score: T,
    /// Predicted IoU with the (unknown) true box.
    pub iou_score: T,
}

impl<T: Scalar> Detection<T> {
    pub fn new(bbox: Box3<T>, cls_score: T, iou_score: T) -> Result<Self> {
        let unit = |v: T| v >= T::zero() && v <= T::one();
        if !unit(cls_score) || !unit(iou_score) {
            return Err(invalid(format!(
                "detection scores must lie in [0, 1]: cls={cls_score}, iou={iou_score}"
            )));
        }
        Ok(Self {
            bbox,
            cls_score,
            iou_score,
        })
    }
}

fn rotation_about_z<T: Scalar>(theta: T) -> [[T; 3]; 3] {
    let (s, c) = theta.sin_cos();
    let (o, i) = (T::zero(), T::one());
    [[c, -s, o], [s, c, o], [o, o, i]]
}

/// Heading rotation `R(theta)` about +z.
pub fn rotation_matrix<T: Scalar>(theta: T) -> Result<[[T; 3]; 3]> {
    if !theta.is_finite() {
        return Err(invalid("rotation angle not finite"));
    }
    Ok(rotation_about_z(theta))
}

/// Maps world points into the box frame: `(p - center) * R`.
pub fn world_to_local<T: Scalar>(points: &[Point3<T>], bbox: &Box3<T>) -> Vec<Point3<T>> {
    let (s, c) = bbox.yaw.sin_cos();
    let ctr = bbox.center;
    points
        .iter()
        .map(|p| {
            let d = p.sub(&ctr);
            Point3::new(d.x * c + d.y * s, d.y * c - d.x * s, d.z)
        })
        .collect()
}

/// Maps box-frame points back to world: `q * R^T + center`.
pub fn local_to_world<T: Scalar>(points: &[Point3<T>], bbox: &Box3<T>) -> Vec<Point3<T>> {
    let (s, c) = bbox.yaw.sin_cos();
    let ctr = bbox.center;
    points
        .iter()
        .map(|q| {
            Point3::new(
                q.x * c - q.y * s + ctr.x,
                q.x * s + q.y * c + ctr.y,
                q.z + ctr.z,
            )
        })
        .collect()
}

fn local_inside<T: Scalar>(q: &Point3<T>, size: &Dims<T>) -> bool {
    let two = T::lit(2.0);
    let eps = T::membership_eps();
    q.x.abs() <= size.l / two + eps
        && q.y.abs() <= size.w / two + eps
        && q.z.abs() <= size.h / two + eps
}

/// Boundary-inclusive membership mask.
pub fn points_in_box<T: Scalar>(points: &[Point3<T>], bbox: &Box3<T>) -> Vec<bool> {
    world_to_local(points, bbox)
        .iter()
        .map(|q| local_inside(q, &bbox.size))
        .collect()
}

/// BEV footprint as four counter-clockwise corners.
pub fn bev_corners<T: Scalar>(bbox: &Box3<T>) -> ConvexPolygon2<T> {
    let two = T::lit(2.0);
    let hl = bbox.size.l / two;
    let hw = bbox.size.w / two;
    let (s, c) = bbox.yaw.sin_cos();
    let (cx, cy) = (bbox.center.x, bbox.center.y);
    let local = [(hl, -hw), (hl, hw), (-hl, hw), (-hl, -hw)];
    let vertices = local
        .iter()
        .map(|&(u, v)| [u * c - v * s + cx, u * s + v * c + cy])
        .collect();
    ConvexPolygon2::from_ccw_unchecked(vertices)
}
