//! Planar helpers: winding numbers of polygonal traces, hyperbolic distance.

use core::f64::consts::TAU;

use crate::{math, C64};

/// Winding number of the closed polygon `poly` around `p`.
///
/// Returns `None` when `p` lies within `eps` of an edge.
pub fn winding_number(poly: &[C64], p: C64, eps: f64) -> Option<i64> {
    if poly.len() < 3 {
        return Some(0);
    }
    let mut total = 0.0;
    for i in 0..poly.len() {
        let a = poly[i] - p;
        let b = poly[(i + 1) % poly.len()] - p;
        if segment_distance(poly[i], poly[(i + 1) % poly.len()], p) <= eps {
            return None;
        }
        total += (b / a).arg();
    }
    Some(math::round(total / TAU) as i64)
}

/// Euclidean distance from `p` to the segment `[a, b]`.
pub fn segment_distance(a: C64, b: C64, p: C64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a) * d.conj()).re / len2;
    let s = s.clamp(0.0, 1.0);
    (a + d * s - p).norm()
}

/// `true` when `p` is enclosed (nonzero winding) by the closed polygon.
pub fn encloses(poly: &[C64], p: C64, eps: f64) -> Option<bool> {
    winding_number(poly, p, eps).map(|w| w != 0)
}

/// Poincaré distance on the unit disk, `2 artanh |z − w| / |1 − w̄z|`.
pub fn hyperbolic_distance(z: C64, w: C64) -> f64 {
    let num = (z - w).norm();
    let den = (C64::new(1.0, 0.0) - w.conj() * z).norm();
    let rho = (num / den).min(1.0 - f64::EPSILON);
    2.0 * math::atanh(rho)
}

/// Largest pairwise distance between the points.
pub fn diameter(points: &[C64]) -> f64 {
    let mut best: f64 = 0.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((a - b).norm());
        }
    }
    best
}

/// Signed area of the quadrilateral/polygon (positive for counter-clockwise order).
pub fn signed_area(poly: &[C64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a.re * b.im - a.im * b.re;
    }
    0.5 * acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn winding_of_circle() {
        let poly: Vec<C64> = crate::math::uniform_angles(64)
            .into_iter()
            .map(crate::math::cis)
            .collect();
        assert_eq!(winding_number(&poly, C64::new(0.1, 0.2), 1e-12), Some(1));
        assert_eq!(winding_number(&poly, C64::new(1.5, 0.0), 1e-12), Some(0));
        assert_eq!(winding_number(&poly, C64::new(1.0, 0.0), 1e-12), None);
    }

    #[test]
    fn hyperbolic_distance_from_origin() {
        let d = hyperbolic_distance(C64::new(0.5, 0.0), C64::new(0.0, 0.0));
        assert!((d - libm::log(3.0)).abs() < 1e-14);
    }
}
