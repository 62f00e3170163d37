//! Planar primitives: points, square windows, circumcircles and triangle angles.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate triangle: vertices are collinear within tolerance")]
    DegenerateTriangle,
    #[error("non-finite coordinate ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("window half side must be positive and finite, got {0}")]
    InvalidWindow(f64),
}

/// Relative collinearity tolerance: |signed area| < DEGENERACY_TOL * diag^2.
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    /// Like [`Point::new`] but rejects NaN and infinite coordinates.
    pub fn try_new(x: f64, y: f64) -> Result<Self, GeometryError> {
        if x.is_finite() && y.is_finite() {
            Ok(Point { x, y })
        } else {
            Err(GeometryError::NonFinite(x, y))
        }
    }

    #[inline]
    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }

    #[inline]
    pub fn translate(&self, dx: f64, dy: f64) -> Point {
        Point::new(self.x + dx, self.y + dy)
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point::new(x, y)
    }
}

/// Axis-parallel square `center + [-half_side, half_side]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub center: Point,
    pub half_side: f64,
}

impl Window {
    /// Square centred at the origin.
    pub fn centered(half_side: f64) -> Result<Self, GeometryError> {
        Self::with_center(Point::ORIGIN, half_side)
    }

    pub fn with_center(center: Point, half_side: f64) -> Result<Self, GeometryError> {
        if !(half_side > 0.0 && half_side.is_finite()) {
            return Err(GeometryError::InvalidWindow(half_side));
        }
        Point::try_new(center.x, center.y)?;
        Ok(Window { center, half_side })
    }

    /// `W_n = [-sqrt(n)/2, sqrt(n)/2]^2`, the centred square of area `n`.
    pub fn from_scale(n: f64) -> Result<Self, GeometryError> {
        Self::centered(n.sqrt() / 2.0)
    }

    pub fn side(&self) -> f64 {
        2.0 * self.half_side
    }

    pub fn area(&self) -> f64 {
        let s = self.side();
        s * s
    }

    /// Closed-square membership.
    #[inline]
    pub fn contains(&self, p: &Point) -> bool {
        (p.x - self.center.x).abs() <= self.half_side && (p.y - self.center.y).abs() <= self.half_side
    }

    /// True when the closed disk of radius `r` about `c` lies inside the window.
    #[inline]
    pub fn contains_disk(&self, c: &Point, r: f64) -> bool {
        (c.x - self.center.x).abs() + r <= self.half_side && (c.y - self.center.y).abs() + r <= self.half_side
    }

    /// Minkowski dilation by a square of half side `guard` (same centre).
    pub fn dilate(&self, guard: f64) -> Result<Window, GeometryError> {
        Window::with_center(self.center, self.half_side + guard)
    }

    pub fn min_corner(&self) -> Point {
        self.center.translate(-self.half_side, -self.half_side)
    }
}

/// A non-degenerate triangle with its circumcircle and smallest interior angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub a: Point,
    pub b: Point,
    pub c: Point,
    pub circumcenter: Point,
    pub circumradius: f64,
    pub min_angle: f64,
}

impl Triangle {
    pub fn new(a: Point, b: Point, c: Point) -> Result<Self, GeometryError> {
        let (circumcenter, circumradius) = circumcircle(a, b, c)?;
        let (aa, ab, ac) = triangle_angles(a, b, c)?;
        Ok(Triangle {
            a,
            b,
            c,
            circumcenter,
            circumradius,
            min_angle: aa.min(ab).min(ac),
        })
    }

    pub fn vertices(&self) -> [Point; 3] {
        [self.a, self.b, self.c]
    }

    pub fn area(&self) -> f64 {
        0.5 * signed_area2(self.a, self.b, self.c).abs()
    }
}

/// Twice the signed area; positive for counter-clockwise `a, b, c`.
#[inline]
pub fn signed_area2(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn is_degenerate(a: Point, b: Point, c: Point) -> bool {
    let min_x = a.x.min(b.x).min(c.x);
    let max_x = a.x.max(b.x).max(c.x);
    let min_y = a.y.min(b.y).min(c.y);
    let max_y = a.y.max(b.y).max(c.y);
    let diag2 = (max_x - min_x).powi(2) + (max_y - min_y).powi(2);
    let area = 0.5 * signed_area2(a, b, c).abs();
    !(area >= DEGENERACY_TOL * diag2) || diag2 == 0.0
}

/// Circumcentre and circumradius of the triangle `a, b, c`.
pub fn circumcircle(a: Point, b: Point, c: Point) -> Result<(Point, f64), GeometryError> {
    for p in [a, b, c] {
        Point::try_new(p.x, p.y)?;
    }
    if is_degenerate(a, b, c) {
        return Err(GeometryError::DegenerateTriangle);
    }
    // Work relative to `a` to limit cancellation.
    let bx = b.x - a.x;
    let by = b.y - a.y;
    let cx = c.x - a.x;
    let cy = c.y - a.y;
    let d = 2.0 * (bx * cy - by * cx);
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    let center = Point::new(a.x + ux, a.y + uy);
    Ok((center, ux.hypot(uy)))
}

/// Interior angles at `a`, `b` and `c`, from the law of cosines.
pub fn triangle_angles(a: Point, b: Point, c: Point) -> Result<(f64, f64, f64), GeometryError> {
    if is_degenerate(a, b, c) {
        return Err(GeometryError::DegenerateTriangle);
    }
    // Side lengths opposite each vertex.
    let la2 = b.dist2(&c);
    let lb2 = a.dist2(&c);
    let lc2 = a.dist2(&b);
    let (la, lb, lc) = (la2.sqrt(), lb2.sqrt(), lc2.sqrt());
    let angle = |adj1: f64, adj2: f64, adj1_sq: f64, adj2_sq: f64, opp_sq: f64| {
        let cos = ((adj1_sq + adj2_sq - opp_sq) / (2.0 * adj1 * adj2)).clamp(-1.0, 1.0);
        cos.acos()
    };
    Ok((
        angle(lb, lc, lb2, lc2, la2),
        angle(la, lc, la2, lc2, lb2),
        angle(la, lb, la2, lb2, lc2),
    ))
}

/// Smallest interior angle, in `(0, pi/3]`.
pub fn min_angle(a: Point, b: Point, c: Point) -> Result<f64, GeometryError> {
    let (x, y, z) = triangle_angles(a, b, c)?;
    Ok(x.min(y).min(z))
}

/// Truncated distance `min(|x - y|, 1)`.
#[inline]
pub fn d0(x: &Point, y: &Point) -> f64 {
    x.dist(y).min(1.0)
}

/// Largest possible smallest angle of a triangle.
pub const MAX_MIN_ANGLE: f64 = PI / 3.0;
