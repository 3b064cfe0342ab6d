//! Points, balls, radial shells and the dyadic truncation grid.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn check_dim(n: usize) -> Result<()> {
    if n == 2 || n == 3 {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(n))
    }
}

/// A point (or direction) of R^n, n in {2, 3}.
#[derive(Clone, Copy, PartialEq)]
pub struct Point {
    c: [f64; 3],
    dim: usize,
}

impl Point {
    pub fn new(coords: &[f64]) -> Result<Self> {
        check_dim(coords.len())?;
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "point coordinates must be finite, got {coords:?}"
            )));
        }
        let mut c = [0.0; 3];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Self {
            c,
            dim: coords.len(),
        })
    }

    /// Unchecked constructor for internal hot paths; `dim` must be 2 or 3.
    pub(crate) fn raw(c: [f64; 3], dim: usize) -> Self {
        debug_assert!(dim == 2 || dim == 3);
        Self { c, dim }
    }

    pub fn origin(dim: usize) -> Self {
        Self::raw([0.0; 3], dim)
    }

    /// Unit vector along the first axis.
    pub fn e1(dim: usize) -> Self {
        Self::raw([1.0, 0.0, 0.0], dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.c[..self.dim]
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.c[0] * other.c[0] + self.c[1] * other.c[1] + self.c[2] * other.c[2]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (*self - *other).norm()
    }

    /// `self + t * dir`
    #[inline]
    pub fn along(&self, dir: &Point, t: f64) -> Point {
        Point::raw(
            [
                self.c[0] + t * dir.c[0],
                self.c[1] + t * dir.c[1],
                self.c[2] + t * dir.c[2],
            ],
            self.dim,
        )
    }

    pub fn scaled(&self, s: f64) -> Point {
        Point::raw([self.c[0] * s, self.c[1] * s, self.c[2] * s], self.dim)
    }

    /// Unit vector in the direction of `self`, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Point> {
        let r = self.norm();
        (r > 0.0).then(|| self.scaled(1.0 / r))
    }

    pub(crate) fn ensure_dim(&self, dim: usize) -> Result<()> {
        if self.dim == dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: dim,
                found: self.dim,
            })
        }
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        self.along(&o, 1.0)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        self.along(&o, -1.0)
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Point::new(&v).map_err(serde::de::Error::custom)
    }
}

/// |B(0,1)| = pi^{n/2} / Gamma(n/2 + 1).
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => PI.powf(n as f64 / 2.0) / statrs::function::gamma::gamma(n as f64 / 2.0 + 1.0),
    }
}

/// sigma(S^{n-1}) = 2 pi^{n/2} / Gamma(n/2).
pub fn sphere_area(n: usize) -> f64 {
    match n {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => 2.0 * PI.powf(n as f64 / 2.0) / statrs::function::gamma::gamma(n as f64 / 2.0),
    }
}

/// Open Euclidean ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "ball radius must be positive and finite, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn volume(&self) -> f64 {
        unit_ball_volume(self.dim()) * self.radius.powi(self.dim() as i32)
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.center.dist(p) < self.radius
    }

    /// Whether `other` lies inside the closure of `self`.
    pub fn encloses(&self, other: &Ball) -> bool {
        self.center.dist(&other.center) + other.radius <= self.radius
    }

    pub fn intersects(&self, other: &Ball) -> bool {
        self.center.dist(&other.center) < self.radius + other.radius
    }
}

/// {y : inner < |y - center| <= outer}
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialShell {
    pub center: Point,
    pub inner: f64,
    pub outer: f64,
}

impl RadialShell {
    pub fn new(center: Point, inner: f64, outer: f64) -> Result<Self> {
        if !(inner >= 0.0 && inner < outer && outer.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "shell needs 0 <= inner < outer < inf, got ({inner}, {outer})"
            )));
        }
        Ok(Self {
            center,
            inner,
            outer,
        })
    }
}

/// Radii 2^{k_min + j/s}, j = 0..=(k_max - k_min) s, over which the
/// truncation supremum is sampled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicTruncationGrid {
    pub k_min: i32,
    pub k_max: i32,
    pub subdivisions_per_octave: usize,
}

impl DyadicTruncationGrid {
    pub fn new(k_min: i32, k_max: i32, subdivisions_per_octave: usize) -> Result<Self> {
        if k_min >= k_max || subdivisions_per_octave == 0 {
            return Err(Error::InvalidArgument(format!(
                "truncation grid needs k_min < k_max and subdivisions >= 1, got ({k_min}, {k_max}, {subdivisions_per_octave})"
            )));
        }
        Ok(Self {
            k_min,
            k_max,
            subdivisions_per_octave,
        })
    }

    pub fn octaves(&self) -> i32 {
        self.k_max - self.k_min
    }

    pub fn radii(&self) -> Vec<f64> {
        let s = self.subdivisions_per_octave;
        let count = self.octaves() as usize * s;
        (0..=count)
            .map(|j| (self.k_min as f64 + j as f64 / s as f64).exp2())
            .collect()
    }

    pub fn refined(&self) -> Self {
        Self {
            subdivisions_per_octave: self.subdivisions_per_octave * 2,
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ball_constants() {
        for n in 2..=3 {
            let g = statrs::function::gamma::gamma;
            let v = PI.powf(n as f64 / 2.0) / g(n as f64 / 2.0 + 1.0);
            assert!((unit_ball_volume(n) / v - 1.0).abs() < 1e-13);
            assert!((sphere_area(n) - n as f64 * v).abs() < 1e-13);
        }
    }

    #[test]
    fn point_rejects_bad_input() {
        assert!(Point::new(&[1.0]).is_err());
        assert!(Point::new(&[1.0, 2.0, 3.0, 4.0]).is_err());
        assert!(Point::new(&[f64::NAN, 0.0]).is_err());
        let p = Point::new(&[3.0, 4.0]).unwrap();
        assert_eq!(p.norm(), 5.0);
    }

    #[test]
    fn ball_and_shell_validation() {
        let o = Point::origin(2);
        assert!(Ball::new(o, 0.0).is_err());
        assert!(Ball::new(o, f64::INFINITY).is_err());
        assert!(RadialShell::new(o, 2.0, 1.0).is_err());
        assert!(RadialShell::new(o, 0.0, 1.0).is_ok());
    }

    #[test]
    fn dyadic_grid_is_strictly_increasing() {
        let g = DyadicTruncationGrid::new(-3, 2, 4).unwrap();
        let r = g.radii();
        assert_eq!(r.len(), 21);
        assert_eq!(r[0], 0.125);
        assert_eq!(*r.last().unwrap(), 4.0);
        assert!(r.windows(2).all(|w| w[0] < w[1]));
        assert!(DyadicTruncationGrid::new(2, 2, 4).is_err());
    }
}
