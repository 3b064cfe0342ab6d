//! Test functions: smooth compactly supported fields with analytic
//! gradients, plus the Poincaré-Sobolev oscillation check.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_dim, Ball, Point};
use crate::quadrature::{integrate_region, QuadratureBudget};

/// A scalar field on R^n, zero outside `support()` when that is `Some`.
pub trait Field: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Point) -> f64;
    fn support(&self) -> Option<Ball>;
    fn label(&self) -> String;
}

/// Anisotropy of the `anisobump` shape: per-axis scale factors.
const ANISO_SCALES: [f64; 3] = [1.0, 1.6, 0.8];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    /// amplitude * exp(-1 / (1 - |x - c|^2 / R^2)) inside B(c, R).
    Bump,
    /// Difference of two bumps of radius R/2 centered at c ± (R/2) e1.
    Dipole,
    /// A bump in the coordinates (x - c)_i / (R s_i), support radius R max s_i.
    Aniso,
    /// The constant `amplitude` everywhere (no compact support).
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothField {
    pub shape: Shape,
    pub center: Point,
    pub radius: f64,
    pub amplitude: f64,
}

/// value and gradient of the unit bump exp(-1/(1-u)), u = |z|^2, at z.
#[inline]
fn unit_bump(z: &Point) -> (f64, f64) {
    let u = z.dot(z);
    if u >= 1.0 {
        return (0.0, 0.0);
    }
    let v = (-1.0 / (1.0 - u)).exp();
    // d/dz of exp(-1/(1-u)) = v * (-1/(1-u)^2) * 2z; return the scalar factor.
    (v, -2.0 * v / ((1.0 - u) * (1.0 - u)))
}

impl SmoothField {
    pub fn bump(center: Point, radius: f64, amplitude: f64) -> Result<Self> {
        Self::with_shape(Shape::Bump, center, radius, amplitude)
    }

    pub fn with_shape(shape: Shape, center: Point, radius: f64, amplitude: f64) -> Result<Self> {
        check_dim(center.dim())?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "support radius must be positive, got {radius}"
            )));
        }
        if !amplitude.is_finite() {
            return Err(Error::InvalidArgument(format!("amplitude {amplitude}")));
        }
        Ok(Self {
            shape,
            center,
            radius,
            amplitude,
        })
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self {
            shape: Shape::Constant,
            center: Point::origin(n),
            radius: 1.0,
            amplitude: c,
        }
    }

    pub fn value(&self, x: &Point) -> f64 {
        self.value_and_gradient(x).0
    }

    pub fn gradient(&self, x: &Point) -> Point {
        self.value_and_gradient(x).1
    }

    pub fn value_and_gradient(&self, x: &Point) -> (f64, Point) {
        let n = self.center.dim();
        let zero = Point::origin(n);
        let a = self.amplitude;
        match self.shape {
            Shape::Constant => (a, zero),
            Shape::Bump => {
                let z = (*x - self.center).scaled(1.0 / self.radius);
                let (v, g) = unit_bump(&z);
                (a * v, z.scaled(a * g / self.radius))
            }
            Shape::Dipole => {
                let h = 0.5 * self.radius;
                let shift = Point::e1(n).scaled(h);
                let zp = (*x - (self.center + shift)).scaled(1.0 / h);
                let zm = (*x - (self.center - shift)).scaled(1.0 / h);
                let (vp, gp) = unit_bump(&zp);
                let (vm, gm) = unit_bump(&zm);
                let grad = zp.scaled(a * gp / h).along(&zm, -a * gm / h);
                (a * (vp - vm), grad)
            }
            Shape::Aniso => {
                let d = *x - self.center;
                let mut z = [0.0; 3];
                for (i, zi) in z.iter_mut().enumerate().take(n) {
                    *zi = d.coords()[i] / (self.radius * ANISO_SCALES[i]);
                }
                let zp = Point::raw(z, n);
                let (v, g) = unit_bump(&zp);
                let mut grad = [0.0; 3];
                for (i, gi) in grad.iter_mut().enumerate().take(n) {
                    *gi = a * g * z[i] / (self.radius * ANISO_SCALES[i]);
                }
                (a * v, Point::raw(grad, n))
            }
        }
    }

    pub fn support_ball(&self) -> Option<Ball> {
        let r = match self.shape {
            Shape::Constant => return None,
            Shape::Aniso => {
                self.radius
                    * ANISO_SCALES[..self.center.dim()]
                        .iter()
                        .cloned()
                        .fold(0.0, f64::max)
            }
            _ => self.radius,
        };
        Some(Ball {
            center: self.center,
            radius: r,
        })
    }

    /// x -> f(lambda x).
    pub fn dilate(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("dilation factor {lambda}")));
        }
        Ok(Self {
            center: self.center.scaled(1.0 / lambda),
            radius: self.radius / lambda,
            ..*self
        })
    }

    /// x -> f(x - v).
    pub fn translate(&self, v: &Point) -> Self {
        Self {
            center: self.center + *v,
            ..*self
        }
    }

    /// Sampled (sup |f|, sup |grad f|) over a grid covering the support.
    pub fn sup_norms(&self) -> (f64, f64) {
        let Some(b) = self.support_ball() else {
            return (self.amplitude.abs(), 0.0);
        };
        let n = b.dim();
        let m: usize = if n == 2 { 201 } else { 61 };
        let mut best = (0.0f64, 0.0f64);
        let total = m.pow(n as u32);
        for idx in 0..total {
            let mut c = [0.0; 3];
            let mut r = idx;
            for slot in c.iter_mut().take(n) {
                *slot = -1.0 + 2.0 * (r % m) as f64 / (m - 1) as f64;
                r /= m;
            }
            let x = b.center.along(&Point::raw(c, n), b.radius);
            let (v, g) = self.value_and_gradient(&x);
            best.0 = best.0.max(v.abs());
            best.1 = best.1.max(g.norm());
        }
        best
    }

    /// max(sup |f|, sup |grad f|), the scale used for exclusion thresholds.
    pub fn scale(&self) -> f64 {
        let (a, b) = self.sup_norms();
        a.max(b)
    }
}

impl Field for SmoothField {
    fn dim(&self) -> usize {
        self.center.dim()
    }
    fn value(&self, x: &Point) -> f64 {
        SmoothField::value(self, x)
    }
    fn support(&self) -> Option<Ball> {
        self.support_ball()
    }
    fn label(&self) -> String {
        format!("{:?}", self.shape).to_lowercase()
    }
}

/// |grad f|^power for a smooth field.
#[derive(Clone, Copy, Debug)]
pub struct GradientNorm {
    pub field: SmoothField,
    pub power: f64,
}

impl Field for GradientNorm {
    fn dim(&self) -> usize {
        self.field.center.dim()
    }
    fn value(&self, x: &Point) -> f64 {
        let g = self.field.gradient(x).norm();
        if self.power == 1.0 {
            g
        } else {
            g.powf(self.power)
        }
    }
    fn support(&self) -> Option<Ball> {
        self.field.support_ball()
    }
    fn label(&self) -> String {
        format!("|grad {}|^{}", self.field.label(), self.power)
    }
}

/// Indicator of a ball.
#[derive(Clone, Copy, Debug)]
pub struct Indicator(pub Ball);

impl Field for Indicator {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &Point) -> f64 {
        if self.0.contains(x) {
            1.0
        } else {
            0.0
        }
    }
    fn support(&self) -> Option<Ball> {
        Some(self.0)
    }
    fn label(&self) -> String {
        format!("1_B({:?},{})", self.0.center, self.0.radius)
    }
}

/// An arbitrary closure with a declared support.
#[derive(Clone)]
pub struct FnField {
    dim: usize,
    label: String,
    support: Option<Ball>,
    f: Arc<dyn Fn(&Point) -> f64 + Send + Sync>,
}

impl FnField {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        support: Option<Ball>,
        f: impl Fn(&Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            label: label.into(),
            support,
            f: Arc::new(f),
        }
    }
}

impl Field for FnField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &Point) -> f64 {
        (self.f)(x)
    }
    fn support(&self) -> Option<Ball> {
        self.support
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Named corpus entry as it appears in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub radius: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl CorpusSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            center: None,
            radius: 1.0,
            amplitude: 1.0,
        }
    }

    pub fn build(&self, n: usize) -> Result<SmoothField> {
        check_dim(n)?;
        let default_center: &[f64] = match self.name.as_str() {
            "offbump" => &[0.35, -0.2, 0.1],
            _ => &[0.0, 0.0, 0.0],
        };
        let center = match &self.center {
            Some(c) => {
                let p = Point::new(c).map_err(|e| Error::Catalog(e.to_string()))?;
                if p.dim() != n {
                    return Err(Error::Catalog(format!(
                        "corpus center {c:?} does not have dimension {n}"
                    )));
                }
                p
            }
            None => Point::new(&default_center[..n])?,
        };
        let shape = match self.name.as_str() {
            "bump" | "offbump" => Shape::Bump,
            "dipole" => Shape::Dipole,
            "anisobump" => Shape::Aniso,
            other => return Err(Error::Catalog(format!("unknown corpus function `{other}`"))),
        };
        SmoothField::with_shape(shape, center, self.radius, self.amplitude)
            .map_err(|e| Error::Catalog(e.to_string()))
    }
}

pub const CORPUS_NAMES: &[&str] = &["bump", "offbump", "dipole", "anisobump"];

/// The four named fields with default parameters.
pub fn standard_corpus(n: usize) -> Result<Vec<SmoothField>> {
    CORPUS_NAMES
        .iter()
        .map(|name| CorpusSpec::named(name).build(n))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientCheck {
    pub points: usize,
    pub max_relative_error: f64,
}

/// Compares the analytic gradient with central differences (step 1e-4) at
/// 100 seeded random points at 0.9 of the way to the support boundary (of a
/// lobe for the dipole, of the ellipsoid for the anisotropic bump). Errors are
/// relative to max(|grad f(x)|, 1e-3 sup |grad f|).
pub fn check_gradient(f: &SmoothField, seed: u64) -> Result<GradientCheck> {
    let support = f
        .support_ball()
        .ok_or_else(|| Error::UnknownSupport(f.label()))?;
    let n = support.dim();
    let (_, gsup) = f.sup_norms();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    while count < 100 {
        let mut c = [0.0; 3];
        for slot in c.iter_mut().take(n) {
            *slot = rng.gen_range(-1.0..1.0);
        }
        let d = Point::raw(c, n);
        if d.norm() >= 0.9 {
            continue;
        }
        let x = match f.shape {
            // Interior of one of the two lobes, chosen by the sign of d_1.
            Shape::Dipole => {
                let h = 0.5 * f.radius;
                let lobe = f.center.along(&Point::e1(n), h.copysign(d.coords()[0]));
                lobe.along(&d, h)
            }
            Shape::Aniso => {
                let mut e = [0.0; 3];
                for i in 0..n {
                    e[i] = d.coords()[i] * f.radius * ANISO_SCALES[i];
                }
                f.center + Point::raw(e, n)
            }
            _ => support.center.along(&d, support.radius),
        };
        let g = f.gradient(&x);
        let mut err2 = 0.0;
        for i in 0..n {
            let mut e = [0.0; 3];
            e[i] = h;
            let step = Point::raw(e, n);
            let fd = (f.value(&(x + step)) - f.value(&(x - step))) / (2.0 * h);
            err2 += (fd - g.coords()[i]).powi(2);
        }
        let denom = g.norm().max(1e-3 * gsup);
        worst = worst.max(err2.sqrt() / denom);
        count += 1;
    }
    Ok(GradientCheck {
        points: count,
        max_relative_error: worst,
    })
}

/// Both sides of the Poincaré-Sobolev inequality on B, without its constant:
/// lhs = ((1/|B|) int_B |f - f_B|^q)^{1/q}, rhs = r ((1/|B|) int_B |grad f|^s)^{1/s}.
pub fn poincare_sobolev_check(
    f: &SmoothField,
    ball: &Ball,
    q: f64,
    s: f64,
    budget: &QuadratureBudget,
) -> Result<(f64, f64)> {
    let n = ball.dim() as f64;
    ball.center.ensure_dim(f.center.dim())?;
    if !(s >= 1.0 && s < n) {
        return Err(Error::InvalidArgument(format!("Poincaré exponent s={s} outside [1, n)")));
    }
    let q_max = n * s / (n - s);
    if !(q >= 1.0 && q <= q_max * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "q={q} outside the window [1, {q_max}]"
        )));
    }
    if let Some(supp) = f.support_ball() {
        if !supp.encloses(ball) {
            return Err(Error::InvalidArgument(
                "Poincaré ball must lie inside the support of f".into(),
            ));
        }
    }
    let vol = ball.volume();
    let mean = integrate_region(ball, None, None, budget, |y| f.value(y)) / vol;
    let osc = integrate_region(ball, None, None, budget, |y| (f.value(y) - mean).abs().powf(q)) / vol;
    let grad = integrate_region(ball, None, None, budget, |y| f.gradient(y).norm().powf(s)) / vol;
    Ok((osc.powf(1.0 / q), ball.radius * grad.powf(1.0 / s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pt(c: &[f64]) -> Point {
        Point::new(c).unwrap()
    }

    #[test]
    fn bump_examples() {
        let c = pt(&[0.5, -1.0]);
        let f = SmoothField::bump(c, 2.0, 3.0).unwrap();
        assert_relative_eq!(f.value(&c), 3.0 * (-1f64).exp(), max_relative = 1e-15);
        assert_eq!(f.gradient(&c).norm(), 0.0);
        let x = c + pt(&[1.0, 0.0]);
        let h = 1e-6;
        let fd = (f.value(&(x + pt(&[h, 0.0]))) - f.value(&(x - pt(&[h, 0.0])))) / (2.0 * h);
        assert_relative_eq!(f.gradient(&x).coords()[0], fd, max_relative = 1e-6);
        assert_eq!(f.value(&pt(&[2.6, -1.0])), 0.0);
        assert!(SmoothField::bump(c, 0.0, 1.0).is_err());
    }

    #[test]
    fn corpus_passes_gradient_check() {
        for n in [2, 3] {
            for f in standard_corpus(n).unwrap() {
                let chk = check_gradient(&f, 3).unwrap();
                assert_eq!(chk.points, 100);
                assert!(chk.max_relative_error < 1e-5, "{f:?}: {}", chk.max_relative_error);
            }
        }
    }

    #[test]
    fn dipole_changes_sign() {
        let f = CorpusSpec::named("dipole").build(2).unwrap();
        assert!(f.value(&pt(&[0.5, 0.0])) > 0.0);
        assert!(f.value(&pt(&[-0.5, 0.0])) < 0.0);
        assert!(CorpusSpec::named("mystery").build(2).is_err());
    }

    #[test]
    fn poincare_constant_has_zero_oscillation() {
        let f = SmoothField::constant(2, 2.5);
        let b = Ball::new(pt(&[3.0, 1.0]), 0.7).unwrap();
        let (l, r) = poincare_sobolev_check(&f, &b, 2.0, 1.5, &QuadratureBudget::default()).unwrap();
        assert!(l.abs() < 1e-14);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn poincare_ratio_is_stable() {
        let f = SmoothField::bump(Point::origin(2), 1.0, 1.0).unwrap();
        let b = Ball::new(Point::origin(2), 0.5).unwrap();
        let base = QuadratureBudget::default();
        for q in [2.0, 6.0] {
            let (l0, r0) = poincare_sobolev_check(&f, &b, q, 1.5, &base).unwrap();
            let (l1, r1) = poincare_sobolev_check(&f, &b, q, 1.5, &base.refined()).unwrap();
            let (a, c) = (l0 / r0, l1 / r1);
            assert!(a.is_finite() && a > 0.0);
            assert!((a / c - 1.0).abs() < 0.05);
        }
        assert!(poincare_sobolev_check(&f, &b, 6.5, 1.5, &base).is_err());
        assert!(poincare_sobolev_check(&f, &b, 2.0, 2.0, &base).is_err());
        let outside = Ball::new(pt(&[0.8, 0.0]), 0.5).unwrap();
        assert!(poincare_sobolev_check(&f, &outside, 2.0, 1.5, &base).is_err());
    }

    #[test]
    fn dilation_and_translation() {
        let f = CorpusSpec::named("offbump").build(2).unwrap();
        let g = f.dilate(2.0).unwrap();
        let x = pt(&[0.1, -0.05]);
        assert_relative_eq!(g.value(&x), f.value(&x.scaled(2.0)), max_relative = 1e-14);
        let v = pt(&[1.0, 2.0]);
        let t = f.translate(&v);
        assert_relative_eq!(t.value(&(x + v)), f.value(&x), max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn fields_vanish_outside_support(idx in 0usize..4, r in 1.0f64..5.0, ang in 0.0f64..std::f64::consts::TAU) {
            let f = CorpusSpec::named(CORPUS_NAMES[idx]).build(2).unwrap();
            let b = f.support_ball().unwrap();
            let x = b.center.along(&pt(&[ang.cos(), ang.sin()]), b.radius * r);
            prop_assert_eq!(f.value(&x), 0.0);
            prop_assert_eq!(f.gradient(&x).norm(), 0.0);
        }
    }
}
