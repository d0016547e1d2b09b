//! Problem-space primitives: points, balls tangent at a pole, and the
//! inversion that turns those balls into halfspaces.
//!
//! All comparisons that can land on a boundary go through a single relative
//! tolerance `eps`, applied to squared distances (or dot products) and scaled
//! by the magnitude of the compared quantities.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

use crate::polytope::{HalfSpace, Source};

/// Default relative tolerance.
pub const DEFAULT_EPS: f64 = 1e-9;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GeometryError {
    #[error("cannot invert a point that coincides with the pole")]
    PoleInversion,
    #[error("ball radius {radius:e} is degenerate")]
    DegenerateBall { radius: f64 },
    #[error("ball is not tangent at the inversion pole")]
    PoleMismatch,
    #[error("points {first} and {second} coincide")]
    DuplicatePoints { first: usize, second: usize },
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("pole index {pole} out of range for {len} points")]
    PoleOutOfRange { pole: usize, len: usize },
}

/// A point (or displacement) in R³.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Points of the input set live in the same coordinate type as vectors.
pub type Point3 = Vec3;

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    #[inline]
    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    /// Largest absolute coordinate.
    #[inline]
    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    /// Squared Euclidean distance. Every ordering by distance in the crate
    /// uses this exact expression so that ties are resolved identically.
    #[inline]
    pub fn dist2(self, o: Vec3) -> f64 {
        (self - o).norm2()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn normalized(self) -> Vec3 {
        self / self.norm()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Euclidean distance `|ab|`.
///
/// Computed with a scaled sum of squares so that distinct points never
/// report zero through underflow.
pub fn dist(a: Point3, b: Point3) -> f64 {
    let d = a - b;
    let m = d.max_abs();
    if m == 0.0 {
        return 0.0;
    }
    let s = d / m;
    m * s.norm()
}

/// The ball Σ(center, tangent): centered at `center` with `tangent` on its
/// bounding sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ball {
    pub center: Point3,
    pub tangent: Point3,
}

impl Ball {
    pub fn new(center: Point3, tangent: Point3) -> Self {
        Ball { center, tangent }
    }

    /// The zero-radius ball Σ(p, p), which contains nothing strictly.
    pub fn sentinel(p: Point3) -> Self {
        Ball { center: p, tangent: p }
    }

    pub fn radius(&self) -> f64 {
        dist(self.center, self.tangent)
    }

    pub fn radius2(&self) -> f64 {
        self.center.dist2(self.tangent)
    }
}

/// Strict containment with the boundary counted as outside:
/// `|aq|² < |ap|² − eps·max(|aq|², |ap|²)`.
#[inline]
pub fn strictly_inside_ball(q: Point3, ball: &Ball, eps: f64) -> bool {
    let r2 = ball.radius2();
    let d2 = ball.center.dist2(q);
    d2 < r2 - eps * r2.max(d2)
}

/// Inversion centered at `pole` with unit radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InversionFrame {
    pub pole: Point3,
    pub eps: f64,
}

impl InversionFrame {
    pub fn new(pole: Point3) -> Self {
        InversionFrame { pole, eps: DEFAULT_EPS }
    }

    pub fn with_eps(pole: Point3, eps: f64) -> Self {
        InversionFrame { pole, eps }
    }

    fn coincides_with_pole(&self, q: Point3) -> bool {
        let d = q - self.pole;
        if d.max_abs() == 0.0 {
            return true;
        }
        let scale = self.pole.max_abs().max(q.max_abs());
        d.norm() <= self.eps * scale
    }

    /// `pole + (q − pole) / |q − pole|²`.
    pub fn invert(&self, q: Point3) -> Result<Point3, GeometryError> {
        if self.coincides_with_pole(q) {
            return Err(GeometryError::PoleInversion);
        }
        Ok(self.pole + invert_offset(q - self.pole))
    }

    /// Image of `q` relative to the pole, i.e. `invert(q) − pole`. The
    /// polytopes built for a pole are expressed in these coordinates.
    pub fn invert_relative(&self, q: Point3) -> Result<Vec3, GeometryError> {
        if self.coincides_with_pole(q) {
            return Err(GeometryError::PoleInversion);
        }
        Ok(invert_offset(q - self.pole))
    }

    /// The halfspace `{x : (x − pole)·(center − pole) ≥ 1/2}`; its interior is
    /// the inverted image of the open ball.
    pub fn ball_to_halfspace(&self, ball: &Ball, source: Source) -> Result<HalfSpace, GeometryError> {
        let scale = self.pole.max_abs().max(ball.center.max_abs()).max(f64::MIN_POSITIVE);
        let tangent_gap = (ball.tangent - self.pole).norm();
        if tangent_gap > self.eps * scale {
            return Err(GeometryError::PoleMismatch);
        }
        let radius = ball.radius();
        if radius <= self.eps * scale {
            return Err(GeometryError::DegenerateBall { radius });
        }
        Ok(HalfSpace::new(ball.center - self.pole, 0.5, source))
    }
}

/// Inversion of a pole-relative offset: `d / |d|²`.
#[inline]
pub fn invert_offset(d: Vec3) -> Vec3 {
    d / d.norm2()
}

/// Convenience wrapper around [`InversionFrame::invert`].
pub fn invert(frame: &InversionFrame, q: Point3) -> Result<Point3, GeometryError> {
    frame.invert(q)
}

/// Convenience wrapper around [`InversionFrame::ball_to_halfspace`].
pub fn ball_to_halfspace(frame: &InversionFrame, ball: &Ball) -> Result<HalfSpace, GeometryError> {
    frame.ball_to_halfspace(ball, Source::Unlabeled)
}

/// Order of `points` by non-increasing distance from `points[pole]`, ties by
/// ascending index. The pole itself comes last. No duplicate check.
pub fn order_by_distance(pole: usize, points: &[Point3]) -> Vec<usize> {
    let p = points[pole];
    // Squared distances are non-negative, so their bit patterns sort like the values.
    let mut keyed: Vec<(u64, usize)> =
        points.iter().enumerate().map(|(i, x)| (u64::MAX - x.dist2(p).to_bits(), i)).collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Sorted order for the pole `points[pole]`, rejecting non-finite
/// coordinates and coincident points.
pub fn sort_by_distance(pole: usize, points: &[Point3], eps: f64) -> Result<Vec<usize>, GeometryError> {
    if pole >= points.len() {
        return Err(GeometryError::PoleOutOfRange { pole, len: points.len() });
    }
    check_points(points, eps)?;
    Ok(order_by_distance(pole, points))
}

/// Validates a point set: all coordinates finite and no two points closer
/// than `eps` times the coordinate scale. Exact duplicates are always
/// rejected, even for degenerate scales.
pub fn check_points(points: &[Point3], eps: f64) -> Result<(), GeometryError> {
    if let Some(index) = points.iter().position(|p| !p.is_finite()) {
        return Err(GeometryError::NonFinite { index });
    }
    let scale = points.iter().fold(0.0f64, |m, p| m.max(p.max_abs()));
    let tol = eps * scale;
    if tol > 0.0 {
        // Hash grid with cell size `tol`: near-coincident points share a cell
        // or sit in adjacent cells.
        let cell = |p: &Point3| -> (i64, i64, i64) {
            ((p.x / tol).floor() as i64, (p.y / tol).floor() as i64, (p.z / tol).floor() as i64)
        };
        let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            let (cx, cy, cz) = cell(p);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                            for &j in bucket {
                                if dist(points[j], *p) <= tol {
                                    return Err(GeometryError::DuplicatePoints { first: j, second: i });
                                }
                            }
                        }
                    }
                }
            }
            grid.entry((cx, cy, cz)).or_default().push(i);
        }
    } else {
        let mut seen: HashMap<[u64; 3], usize> = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            // Normalize -0.0 so it matches 0.0.
            let key = [(p.x + 0.0).to_bits(), (p.y + 0.0).to_bits(), (p.z + 0.0).to_bits()];
            if let Some(&j) = seen.get(&key) {
                return Err(GeometryError::DuplicatePoints { first: j, second: i });
            }
            seen.insert(key, i);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn dist_examples() {
        assert_eq!(dist(v(0.0, 0.0, 0.0), v(0.0, 0.0, 0.0)), 0.0);
        assert_eq!(dist(v(0.0, 0.0, 0.0), v(3.0, 4.0, 0.0)), 5.0);
        assert!((dist(v(1.0, 1.0, 1.0), v(2.0, 2.0, 2.0)) - 3f64.sqrt()).abs() < 1e-15);
        // no underflow to zero for distinct points
        assert!(dist(v(0.0, 0.0, 0.0), v(1e-200, 0.0, 0.0)) > 0.0);
    }

    #[test]
    fn invert_examples() {
        let f = InversionFrame::new(Vec3::ZERO);
        assert_eq!(f.invert(v(2.0, 0.0, 0.0)).unwrap(), v(0.5, 0.0, 0.0));
        assert_eq!(f.invert(v(1.0, 0.0, 0.0)).unwrap(), v(1.0, 0.0, 0.0));
        let g = InversionFrame::new(v(1.0, 1.0, 1.0));
        let q = v(0.3, -1.2, 2.5);
        let back = g.invert(g.invert(q).unwrap()).unwrap();
        assert!(dist(back, q) < 1e-12);
        assert_eq!(f.invert(Vec3::ZERO), Err(GeometryError::PoleInversion));
    }

    #[test]
    fn halfspace_examples() {
        let f = InversionFrame::new(Vec3::ZERO);
        let h = ball_to_halfspace(&f, &Ball::new(v(1.0, 0.0, 0.0), Vec3::ZERO)).unwrap();
        assert_eq!(h.normal, v(1.0, 0.0, 0.0));
        assert_eq!(h.offset, 0.5);
        // the center inverts to itself and lies strictly inside
        assert!(h.normal.dot(f.invert(v(1.0, 0.0, 0.0)).unwrap()) > 0.5);
        let h = ball_to_halfspace(&f, &Ball::new(v(0.0, 0.0, 3.0), Vec3::ZERO)).unwrap();
        // plane z = 1/6
        assert!((h.normal.dot(v(0.0, 0.0, 1.0 / 6.0)) - 0.5).abs() < 1e-15);
        assert!(matches!(
            ball_to_halfspace(&f, &Ball::sentinel(Vec3::ZERO)),
            Err(GeometryError::DegenerateBall { .. })
        ));
        assert_eq!(
            ball_to_halfspace(&f, &Ball::new(v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0))),
            Err(GeometryError::PoleMismatch)
        );
    }

    #[test]
    fn halfspace_matches_ball_by_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = InversionFrame::new(Vec3::ZERO);
        for center in [v(1.0, 0.0, 0.0), v(0.0, 0.0, 3.0)] {
            let ball = Ball::new(center, Vec3::ZERO);
            let h = ball_to_halfspace(&f, &ball).unwrap();
            let mut checked = 0;
            while checked < 1000 {
                let q = v(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
                let margin = (ball.radius() - dist(ball.center, q)).abs();
                if margin < 1e-6 {
                    continue;
                }
                let inv = f.invert(q).unwrap();
                assert_eq!(strictly_inside_ball(q, &ball, DEFAULT_EPS), inv.dot(h.normal) > h.offset);
                checked += 1;
            }
        }
    }

    #[test]
    fn sphere_points_map_to_the_plane() {
        let f = InversionFrame::new(Vec3::ZERO);
        let center = v(0.0, 2.0, 0.0);
        let h = ball_to_halfspace(&f, &Ball::new(center, Vec3::ZERO)).unwrap();
        for dir in [v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(0.6, 0.0, 0.8), v(0.0, -0.6, 0.8)] {
            let on_sphere = center + dir * 2.0;
            if on_sphere.norm() < 1e-12 {
                continue;
            }
            let inv = f.invert(on_sphere).unwrap();
            assert!((inv.dot(h.normal) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn containment_examples() {
        let ball = Ball::new(v(2.0, 0.0, 0.0), Vec3::ZERO);
        assert!(!strictly_inside_ball(Vec3::ZERO, &ball, DEFAULT_EPS));
        assert!(strictly_inside_ball(v(2.0, 1.0, 0.0), &ball, DEFAULT_EPS));
        assert!(!strictly_inside_ball(v(4.0, 0.0, 0.0), &ball, DEFAULT_EPS));
        let sentinel = Ball::sentinel(Vec3::ZERO);
        assert!(!strictly_inside_ball(v(1e-3, 0.0, 0.0), &sentinel, DEFAULT_EPS));
    }

    #[test]
    fn sort_examples() {
        let pts = [v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(3.0, 0.0, 0.0)];
        assert_eq!(sort_by_distance(0, &pts, DEFAULT_EPS).unwrap(), vec![2, 1, 0]);
        let tie = [v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0)];
        assert_eq!(sort_by_distance(0, &tie, DEFAULT_EPS).unwrap(), vec![1, 2, 0]);
        let dup = [v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(1.0, 0.0, 0.0)];
        assert_eq!(sort_by_distance(0, &dup, DEFAULT_EPS), Err(GeometryError::DuplicatePoints { first: 1, second: 2 }));
        assert!(matches!(sort_by_distance(5, &pts, DEFAULT_EPS), Err(GeometryError::PoleOutOfRange { .. })));
    }

    #[test]
    fn sort_agrees_with_comparison_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec3> = (0..50).map(|_| v(rng.random(), rng.random(), rng.random())).collect();
        for pole in [0, 17, 49] {
            let got = sort_by_distance(pole, &pts, DEFAULT_EPS).unwrap();
            // independent oracle: selection of the farthest remaining point
            let mut remaining: Vec<usize> = (0..pts.len()).collect();
            let mut expected = Vec::new();
            while !remaining.is_empty() {
                let mut best = 0;
                for k in 1..remaining.len() {
                    let (a, b) = (remaining[k], remaining[best]);
                    let da = (pts[a].x - pts[pole].x).powi(2)
                        + (pts[a].y - pts[pole].y).powi(2)
                        + (pts[a].z - pts[pole].z).powi(2);
                    let db = (pts[b].x - pts[pole].x).powi(2)
                        + (pts[b].y - pts[pole].y).powi(2)
                        + (pts[b].z - pts[pole].z).powi(2);
                    if da > db {
                        best = k;
                    }
                }
                expected.push(remaining.remove(best));
            }
            assert_eq!(got, expected);
            assert_eq!(*got.last().unwrap(), pole);
        }
    }

    #[test]
    fn near_duplicates_and_nan_rejected() {
        let pts = [v(1.0, 1.0, 1.0), v(1.0 + 1e-12, 1.0, 1.0)];
        assert!(matches!(check_points(&pts, DEFAULT_EPS), Err(GeometryError::DuplicatePoints { .. })));
        let pts = [v(0.0, 0.0, 0.0), v(f64::NAN, 0.0, 0.0)];
        assert_eq!(check_points(&pts, DEFAULT_EPS), Err(GeometryError::NonFinite { index: 1 }));
        let pts = [v(0.0, 0.0, 0.0), v(-0.0, 0.0, 0.0)];
        assert!(check_points(&pts, DEFAULT_EPS).is_err());
        let pts = [v(0.0, 0.0, 0.0), v(1e-3, 0.0, 0.0)];
        assert!(check_points(&pts, DEFAULT_EPS).is_ok());
    }
}
