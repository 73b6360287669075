//! Thin wrappers over adaptive-precision predicates plus a few inexact helpers.

use super::Vec2;

/// Sign of the orientation of `(a, b, c)`: positive when counterclockwise.
#[inline]
pub fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    robust::orient2d(a.to_robust(), b.to_robust(), c.to_robust())
}

/// Positive when `d` lies strictly inside the circumcircle of the
/// counterclockwise triangle `(a, b, c)`.
#[inline]
pub fn incircle(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> f64 {
    robust::incircle(a.to_robust(), b.to_robust(), c.to_robust(), d.to_robust())
}

/// Twice the signed area, plain floating point.
#[inline]
pub fn signed_area2(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

#[inline]
pub fn signed_area(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    0.5 * signed_area2(a, b, c)
}

/// Barycentric coordinates of `p` with respect to `(a, b, c)`; `None` for a
/// degenerate triangle.
pub fn barycentric(p: Vec2, a: Vec2, b: Vec2, c: Vec2) -> Option<[f64; 3]> {
    let d = signed_area2(a, b, c);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let l0 = signed_area2(p, b, c) / d;
    let l1 = signed_area2(a, p, c) / d;
    let l2 = 1.0 - l0 - l1;
    Some([l0, l1, l2])
}

/// Closest point to `p` on segment `[a, b]` and its parameter along the segment.
pub fn closest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> (Vec2, f64) {
    let ab = b - a;
    let len2 = ab.norm2();
    if len2 == 0.0 {
        return (a, 0.0);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    (a + ab * t, t)
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    closest_on_segment(p, a, b).0.dist(p)
}

/// Proper or improper intersection of closed segments `[a, b]` and `[c, d]`
/// excluding shared endpoints.
pub fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    if a == c || a == d || b == c || b == d {
        return false;
    }
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    let on = |p: Vec2, q: Vec2, r: Vec2| {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    (o1 == 0.0 && on(a, b, c))
        || (o2 == 0.0 && on(a, b, d))
        || (o3 == 0.0 && on(c, d, a))
        || (o4 == 0.0 && on(c, d, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orientation_signs() {
        let a = Vec2::new(0.0, 0.0);
        let b = Vec2::new(1.0, 0.0);
        assert!(orient(a, b, Vec2::new(0.0, 1.0)) > 0.0);
        assert!(orient(a, b, Vec2::new(0.0, -1.0)) < 0.0);
        assert_eq!(orient(a, b, Vec2::new(2.0, 0.0)), 0.0);
    }

    #[test]
    fn orientation_is_exact_near_degeneracy() {
        // Classic near-collinear triple that naive evaluation gets wrong.
        let a = Vec2::new(0.5, 0.5);
        let b = Vec2::new(12.0, 12.0);
        let c = Vec2::new(24.0, 24.0);
        assert_eq!(orient(a, b, c), 0.0);
        let c2 = Vec2::new(24.0, 24.0 + f64::EPSILON * 32.0);
        assert!(orient(a, b, c2) > 0.0);
    }

    #[test]
    fn centroid_barycentric() {
        let l = barycentric(
            Vec2::new(1.0 / 3.0, 1.0 / 3.0),
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        )
        .unwrap();
        for v in l {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn crossing_segments() {
        let p = Vec2::new;
        assert!(segments_cross(p(0.0, 0.0), p(1.0, 1.0), p(0.0, 1.0), p(1.0, 0.0)));
        assert!(!segments_cross(p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0), p(1.0, 1.0)));
        assert!(!segments_cross(p(0.0, 0.0), p(1.0, 0.0), p(1.0, 0.0), p(1.0, 1.0)));
    }
}
