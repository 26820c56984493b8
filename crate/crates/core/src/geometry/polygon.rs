use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon2<T> {
    vertices: Vec<[T; 2]>,
}

fn cross<T: Scalar>(o: [T; 2], a: [T; 2], b: [T; 2]) -> T {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

impl<T: Scalar> ConvexPolygon2<T> {
    /// Validates vertex count, finiteness, strict convexity and CCW order.
    pub fn new(vertices: Vec<[T; 2]>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(invalid(format!(
                "polygon needs at least 3 vertices, got {n}"
            )));
        }
        if vertices
            .iter()
            .any(|v| !v[0].is_finite() || !v[1].is_finite())
        {
            return Err(invalid("polygon vertex not finite"));
        }
        for i in 0..n {
            let turn = cross(vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
            if turn <= T::zero() {
                return Err(invalid(
                    "polygon must be strictly convex and counter-clockwise",
                ));
            }
        }
        // a convex CCW walk winds exactly once
        if signed_area(&vertices) <= T::zero() {
            return Err(invalid("polygon is not counter-clockwise"));
        }
        let mut winding = T::zero();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            let ang1 = (b[1] - a[1]).atan2(b[0] - a[0]);
            let ang2 = (c[1] - b[1]).atan2(c[0] - b[0]);
            let mut d = ang2 - ang1;
            while d <= -T::PI() {
                d = d + T::PI() + T::PI();
            }
            while d > T::PI() {
                d = d - T::PI() - T::PI();
            }
            winding = winding + d;
        }
        let full = T::PI() + T::PI();
        if (winding - full).abs() > T::lit(1e-3) {
            return Err(invalid("polygon is self-intersecting"));
        }
        Ok(Self { vertices })
    }

    pub(crate) fn from_ccw_unchecked(vertices: Vec<[T; 2]>) -> Self {
        Self { vertices }
    }

    pub fn vertices(&self) -> &[[T; 2]] {
        &self.vertices
    }

    pub fn area(&self) -> T {
        signed_area(&self.vertices).abs()
    }
}

/// Shoelace signed area; positive for CCW order.
pub(crate) fn signed_area<T: Scalar>(v: &[[T; 2]]) -> T {
    let n = v.len();
    if n < 3 {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        acc = acc + (a[0] * b[1] - b[0] * a[1]);
    }
    acc / T::lit(2.0)
}

fn line_intersection<T: Scalar>(p: [T; 2], q: [T; 2], a: [T; 2], b: [T; 2]) -> [T; 2] {
    // point on segment p->q crossing the line a->b
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let denom = dp - dq;
    if denom == T::zero() {
        return q;
    }
    let t = dp / denom;
    [p[0] + (q[0] - p[0]) * t, p[1] + (q[1] - p[1]) * t]
}

/// Sutherland-Hodgman clip of `subject` against convex CCW `clip`.
fn clip_polygon<T: Scalar>(subject: &[[T; 2]], clip: &[[T; 2]]) -> Vec<[T; 2]> {
    let eps = T::clip_eps();
    let mut output = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % m];
        let edge_len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let inside = |p: [T; 2]| cross(a, b, p) >= -eps * edge_len;
        let input = std::mem::take(&mut output);
        let mut prev = *input.last().unwrap();
        let mut prev_in = inside(prev);
        for &cur in &input {
            let cur_in = inside(cur);
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, a, b));
            }
            prev = cur;
            prev_in = cur_in;
        }
    }
    output
}

/// Area of the intersection of two convex polygons; zero when the clipped
/// region has fewer than three vertices.
pub fn polygon_intersection_area<T: Scalar>(a: &ConvexPolygon2<T>, b: &ConvexPolygon2<T>) -> T {
    let clipped = clip_polygon(&a.vertices, &b.vertices);
    if clipped.len() < 3 {
        return T::zero();
    }
    let area = signed_area(&clipped).abs();
    area.min(a.area()).min(b.area())
}
