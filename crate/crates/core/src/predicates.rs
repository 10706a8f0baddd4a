//! Exact orientation and in-sphere signs.
//!
//! Both predicates run the adaptive-precision evaluation of the `robust` crate:
//! a floating-point filter answers the easy cases and exact expansion
//! arithmetic is used only when the filter cannot certify the sign.
//!
//! Conventions: `orient3d(a, b, c, d)` is positive when `d` lies on the side of
//! plane `(a, b, c)` that the counter-clockwise normal `(b - a) x (c - a)`
//! points to, so the unit tetrahedron `(0, x, y, z)` is positive.

use robust::Coord3D;

use crate::geometry::Point3;

/// Sign of a predicate.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Negative = -1,
    Zero = 0,
    Positive = 1,
}

impl Sign {
    #[inline]
    pub fn of(v: f64) -> Sign {
        if v > 0.0 {
            Sign::Positive
        } else if v < 0.0 {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }

    #[inline]
    pub fn as_i32(self) -> i32 {
        self as i32
    }

    #[inline]
    pub fn flip(self) -> Sign {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Zero => Sign::Zero,
            Sign::Positive => Sign::Negative,
        }
    }
}

#[inline]
fn coord(p: Point3) -> Coord3D<f64> {
    Coord3D {
        x: p.x,
        y: p.y,
        z: p.z,
    }
}

/// Exact sign of the orientation of `d` relative to plane `(a, b, c)`.
#[inline]
pub fn orient3d(a: Point3, b: Point3, c: Point3, d: Point3) -> Sign {
    // robust follows Shewchuk's convention, which is the opposite of ours.
    Sign::of(-robust::orient3d(coord(a), coord(b), coord(c), coord(d)))
}

/// Exact in-sphere sign: positive iff `e` lies strictly inside the sphere
/// through `a, b, c, d`.
///
/// Requires `orient3d(a, b, c, d) == Sign::Positive`.
#[inline]
pub fn in_sphere(a: Point3, b: Point3, c: Point3, d: Point3, e: Point3) -> Sign {
    debug_assert_eq!(
        orient3d(a, b, c, d),
        Sign::Positive,
        "in_sphere needs a positively oriented tetrahedron"
    );
    Sign::of(-robust::insphere(
        coord(a),
        coord(b),
        coord(c),
        coord(d),
        coord(e),
    ))
}

/// Plain floating-point orientation determinant (six times the signed volume),
/// used where only a magnitude estimate is needed.
#[inline]
pub fn orient3d_approx(a: Point3, b: Point3, c: Point3, d: Point3) -> f64 {
    (b - a).cross(c - a).dot(d - a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    #[test]
    fn canonical_orientation_is_positive() {
        let s = orient3d(p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.), p(0., 0., 1.));
        assert_eq!(s, Sign::Positive);
        let s = orient3d(p(0., 0., 0.), p(0., 1., 0.), p(1., 0., 0.), p(0., 0., 1.));
        assert_eq!(s, Sign::Negative);
    }

    #[test]
    fn coplanar_is_zero() {
        let s = orient3d(p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.), p(0.3, 0.3, 0.));
        assert_eq!(s, Sign::Zero);
    }

    #[test]
    fn sphere_inside_outside_on() {
        let (a, b, c, d) = (p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.), p(0., 0., 1.));
        assert_eq!(in_sphere(a, b, c, d, p(0.25, 0.25, 0.25)), Sign::Positive);
        assert_eq!(in_sphere(a, b, c, d, p(10., 10., 10.)), Sign::Negative);
        // (1,1,1) lies on the circumsphere centred at (0.5,0.5,0.5).
        assert_eq!(in_sphere(a, b, c, d, p(1., 1., 1.)), Sign::Zero);
    }

    #[test]
    fn approx_agrees_on_easy_cases() {
        let v = orient3d_approx(p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.), p(0., 0., 1.));
        assert_eq!(v, 1.0);
    }
}
