//! Weight catalog, ball masses and the Muckenhoupt / doubling / Ahlfors
//! estimators built on top of them.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::Field;
use crate::error::{Error, Result};
use crate::geometry::{check_dim, sphere_area, Ball, Point};
use crate::quadrature::{
    cached_sphere_rule, gauss_legendre, integrate_region, radial_panels, split_panels_at,
    visit_region, Pole, QuadratureBudget,
};

/// Masses below this are treated as numerically vacuous.
pub const VACUOUS_MASS: f64 = 1e-300;

/// Nodes of the Gauss rule used for the angular-cap integral of power weights.
const CAP_NODES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFactor {
    pub gamma: f64,
    pub origin: Point,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothFactor {
    pub gamma: f64,
    pub eps: f64,
}

/// scale * |x - x0|^gamma * (eps^2 + |x|^2)^{gamma'/2}, any factor optional.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    dim: usize,
    label: String,
    scale: f64,
    power: Option<PowerFactor>,
    smooth: Option<SmoothFactor>,
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Weight({})", self.label)
    }
}

impl Weight {
    pub fn constant(n: usize, c: f64) -> Result<Self> {
        check_dim(n)?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Catalog(format!("constant weight must be positive, got {c}")));
        }
        Ok(Self {
            dim: n,
            label: format!("const:{c}"),
            scale: c,
            power: None,
            smooth: None,
        })
    }

    /// |x - origin|^gamma; origin defaults to 0. Requires gamma > -n.
    pub fn power(n: usize, gamma: f64, origin: Option<Point>) -> Result<Self> {
        check_dim(n)?;
        if !(gamma > -(n as f64) && gamma.is_finite()) {
            return Err(Error::Catalog(format!(
                "power weight |x|^{gamma} is not locally integrable in dimension {n}"
            )));
        }
        let origin = origin.unwrap_or_else(|| Point::origin(n));
        origin.ensure_dim(n)?;
        let label = if origin.norm() == 0.0 {
            format!("power:{gamma}")
        } else {
            let c: Vec<String> = origin.coords().iter().map(|v| v.to_string()).collect();
            format!("power:{gamma}:{}", c.join(","))
        };
        Ok(Self {
            dim: n,
            label,
            scale: 1.0,
            power: Some(PowerFactor { gamma, origin }),
            smooth: None,
        })
    }

    /// (eps^2 + |x|^2)^{gamma/2} with eps > 0.
    pub fn smooth_power(n: usize, gamma: f64, eps: f64) -> Result<Self> {
        check_dim(n)?;
        if !(eps > 0.0 && eps.is_finite() && gamma.is_finite()) {
            return Err(Error::Catalog(format!(
                "smoothed power needs finite gamma and eps > 0, got ({gamma}, {eps})"
            )));
        }
        Ok(Self {
            dim: n,
            label: format!("smoothpower:{gamma}:{eps}"),
            scale: 1.0,
            power: None,
            smooth: Some(SmoothFactor { gamma, eps }),
        })
    }

    /// Pointwise product; at most one factor of each kind is supported.
    pub fn product(&self, other: &Weight) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        if (self.power.is_some() && other.power.is_some())
            || (self.smooth.is_some() && other.smooth.is_some())
        {
            return Err(Error::Catalog(format!(
                "product `{}*{}` repeats a factor kind",
                self.label, other.label
            )));
        }
        Ok(Self {
            dim: self.dim,
            label: format!("{}*{}", self.label, other.label),
            scale: self.scale * other.scale,
            power: self.power.or(other.power),
            smooth: self.smooth.or(other.smooth),
        })
    }

    /// Catalog lookup: `const:c`, `power:g[:x0]` (x0 comma separated),
    /// `smoothpower:g:eps`, and products joined by `*`.
    pub fn from_spec(spec: &str, n: usize) -> Result<Self> {
        check_dim(n)?;
        let mut acc: Option<Weight> = None;
        for part in spec.split('*') {
            let w = Self::parse_factor(part.trim(), n)?;
            acc = Some(match acc {
                None => w,
                Some(a) => a.product(&w)?,
            });
        }
        let mut w = acc.ok_or_else(|| Error::Catalog("empty weight spec".into()))?;
        w.label = spec.trim().to_string();
        Ok(w)
    }

    fn parse_factor(spec: &str, n: usize) -> Result<Self> {
        let fields: Vec<&str> = spec.split(':').collect();
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Catalog(format!("weight spec `{spec}`: {e}")))
        };
        match fields.as_slice() {
            ["const", c] => Self::constant(n, num(c)?),
            ["power", g] => Self::power(n, num(g)?, None),
            ["power", g, x0] => {
                let coords = x0.split(',').map(num).collect::<Result<Vec<f64>>>()?;
                let p = Point::new(&coords).map_err(|e| Error::Catalog(e.to_string()))?;
                if p.dim() != n {
                    return Err(Error::Catalog(format!(
                        "weight origin `{x0}` has dimension {}, expected {n}",
                        p.dim()
                    )));
                }
                Self::power(n, num(g)?, Some(p))
            }
            ["smoothpower", g, e] => Self::smooth_power(n, num(g)?, num(e)?),
            _ => Err(Error::Catalog(format!("unknown weight `{spec}`"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn power_factor(&self) -> Option<PowerFactor> {
        self.power
    }

    pub fn is_constant(&self) -> bool {
        self.power.is_none() && self.smooth.is_none()
    }

    #[inline]
    pub fn evaluate(&self, x: &Point) -> f64 {
        let mut v = self.scale;
        if let Some(p) = &self.power {
            v *= x.dist(&p.origin).powf(p.gamma);
        }
        if let Some(s) = &self.smooth {
            v *= (s.eps * s.eps + x.dot(x)).powf(0.5 * s.gamma);
        }
        v
    }

    /// Singular point of the power factor, used to grade quadrature.
    pub fn pole(&self) -> Option<Pole> {
        self.power.map(|p| Pole {
            point: p.origin,
            exponent: p.gamma,
        })
    }

    /// omega^e. The result may fail to be locally integrable; its masses are
    /// then finite only because of the quadrature floor.
    pub fn powered(&self, e: f64) -> Weight {
        Weight {
            dim: self.dim,
            label: format!("({})^{e}", self.label),
            scale: self.scale.powf(e),
            power: self.power.map(|p| PowerFactor {
                gamma: p.gamma * e,
                origin: p.origin,
            }),
            smooth: self.smooth.map(|s| SmoothFactor {
                gamma: s.gamma * e,
                eps: s.eps,
            }),
        }
    }

    /// Whether `ball_mass` avoids quadrature (closed form or the cap integral).
    pub fn has_cheap_masses(&self) -> bool {
        self.smooth.is_none()
    }

    /// Catalog membership in A_delta, read off the local and far-field
    /// power exponents: |x|^g is in A_delta iff -n < g < n(delta - 1), and in
    /// A_1 iff -n < g <= 0.
    pub fn in_muckenhoupt_class(&self, delta: f64) -> bool {
        let n = self.dim as f64;
        let ok = |g: f64| {
            if delta > 1.0 {
                g > -n && g < n * (delta - 1.0)
            } else {
                delta == 1.0 && g > -n && g <= 0.0
            }
        };
        let local = self.power.map_or(0.0, |p| p.gamma);
        let far = local + self.smooth.map_or(0.0, |s| s.gamma);
        ok(local) && ok(far)
    }

    /// The exponent d with C r^d <= omega(B(x, r)) for all x and r, when one
    /// exists: n for constants, n + gamma for |x - x0|^gamma with gamma >= 0.
    pub fn lower_ahlfors_exponent(&self) -> Option<f64> {
        let n = self.dim as f64;
        match (&self.power, &self.smooth) {
            (None, None) => Some(n),
            (Some(p), None) if p.gamma >= 0.0 => Some(n + p.gamma),
            (None, Some(s)) if s.gamma == 0.0 => Some(n),
            _ => None,
        }
    }

    /// Closed-form mass, available for constants anywhere and for pure
    /// powers on balls centered at their origin.
    pub fn analytic_ball_mass(&self, ball: &Ball) -> Option<f64> {
        if self.smooth.is_some() || ball.dim() != self.dim {
            return None;
        }
        match &self.power {
            None => Some(self.scale * ball.volume()),
            Some(p) if ball.center == p.origin && p.gamma > -(self.dim as f64) => {
                let e = self.dim as f64 + p.gamma;
                Some(self.scale * sphere_area(self.dim) * ball.radius.powf(e) / e)
            }
            Some(_) => None,
        }
    }

    /// Mass of a ball for weights without a smooth factor, in polar
    /// coordinates about the power origin: the angular integral is the
    /// measure of a spherical cap in closed form, leaving one radial integral.
    /// Non-integrable powers are cut off at radius `ball.radius * 2^-depth`.
    fn cap_ball_mass(&self, ball: &Ball, depth: usize) -> f64 {
        let n = self.dim;
        let Some(p) = &self.power else {
            return self.scale * ball.volume();
        };
        let s = ball.radius;
        let d = ball.center.dist(&p.origin);
        let e = n as f64 + p.gamma;
        let sigma = sphere_area(n);
        let floor = if e > 0.0 { 0.0 } else { s * (-(depth as f64)).exp2() };
        let radial = |a: f64, b: f64| -> f64 {
            if b <= a {
                0.0
            } else if e.abs() < 1e-12 {
                (b / a).ln()
            } else {
                (b.powf(e) - a.powf(e)) / e
            }
        };
        if d <= 1e-14 * s {
            return self.scale * sigma * radial(floor, s);
        }
        let mut total = 0.0;
        let (lo, hi) = ((s - d).abs(), s + d);
        if s > d {
            total += sigma * radial(floor, lo);
        }
        let a = lo.max(floor);
        if hi > a {
            let gl = gauss_legendre(CAP_NODES);
            let (mid, half) = (0.5 * (hi + lo), 0.5 * (hi - lo));
            // rho = mid - half cos(t) absorbs the square-root endpoint
            // behaviour of the cap measure.
            let t0 = if a > lo {
                ((mid - a) / half).clamp(-1.0, 1.0).acos()
            } else {
                0.0
            };
            for (t, w) in gl.mapped(t0, PI) {
                let rho = mid - half * t.cos();
                if rho <= 0.0 {
                    continue;
                }
                // 1 - cos(cap half-angle), factored to avoid cancellation
                // when the ball is small compared with its distance d.
                let u = ((s - rho + d) * (s + rho - d) / (2.0 * rho * d)).clamp(0.0, 2.0);
                let cap = if n == 2 {
                    4.0 * (0.5 * u).sqrt().asin()
                } else {
                    2.0 * PI * u
                };
                total += w * half * t.sin() * rho.powf(e - 1.0) * cap;
            }
        }
        self.scale * total
    }

    /// omega(B), by closed form when available, the cap integral for
    /// power-type weights, and pole-graded quadrature otherwise.
    pub fn ball_mass(&self, ball: &Ball, budget: &QuadratureBudget) -> Result<f64> {
        ball.center.ensure_dim(self.dim)?;
        let m = if let Some(m) = self.analytic_ball_mass(ball) {
            m
        } else if self.smooth.is_none() {
            self.cap_ball_mass(ball, budget.grading_depth)
        } else {
            self.quadrature_ball_mass(ball, budget)?
        };
        check_mass(m)
    }

    /// omega(B) by direct quadrature, graded toward the power origin.
    pub fn quadrature_ball_mass(&self, ball: &Ball, budget: &QuadratureBudget) -> Result<f64> {
        budget.validate()?;
        let mut bad = None;
        let m = integrate_region(ball, None, self.pole().as_ref(), budget, |y| {
            let v = self.evaluate(y);
            if !v.is_finite() && bad.is_none() {
                bad = Some(*y);
            }
            v
        });
        if let Some(y) = bad {
            return Err(Error::NonFiniteSample {
                location: format!("weight `{}` at {y:?}", self.label),
            });
        }
        check_mass(m)
    }

    /// Integral of g * omega over `domain ∩ clip`.
    pub fn integrate(
        &self,
        domain: &Ball,
        clip: Option<&Ball>,
        budget: &QuadratureBudget,
        g: impl Fn(&Point) -> f64,
    ) -> f64 {
        integrate_region(domain, clip, self.pole().as_ref(), budget, |y| {
            g(y) * self.evaluate(y)
        })
    }

    /// Max of 1/omega over the quadrature nodes of `ball`.
    pub fn max_inverse_on(&self, ball: &Ball, budget: &QuadratureBudget) -> f64 {
        if self.is_constant() {
            return 1.0 / self.scale;
        }
        let mut best = 1.0 / self.evaluate(&ball.center);
        visit_region(ball, None, self.pole().as_ref(), budget, |y, _| {
            best = best.max(1.0 / self.evaluate(y));
        });
        best
    }
}

fn check_mass(m: f64) -> Result<f64> {
    if !m.is_finite() {
        return Err(Error::NonFiniteSample {
            location: format!("ball mass evaluated to {m}"),
        });
    }
    if m < VACUOUS_MASS {
        return Err(Error::VacuousBall { mass: m });
    }
    Ok(m)
}

/// Parameters of a ball family: centers on a uniform grid over
/// `center ± half_width` (optionally plus `center`), radii
/// `scale * 2^{k/radii_per_octave}` for k in [k_min, k_max].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilySpec {
    pub center: Vec<f64>,
    pub half_width: f64,
    pub centers_per_axis: usize,
    pub include_center: bool,
    pub radius_scale: f64,
    pub k_min: i32,
    pub k_max: i32,
    pub radii_per_octave: usize,
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self {
            center: vec![0.0, 0.0],
            half_width: 4.0,
            centers_per_axis: 9,
            include_center: true,
            radius_scale: 1.0,
            k_min: -12,
            k_max: 6,
            radii_per_octave: 2,
        }
    }
}

impl FamilySpec {
    pub fn standard(n: usize) -> Self {
        Self {
            center: vec![0.0; n],
            ..Self::default()
        }
    }

    /// Twice the center density and twice the radii per octave.
    pub fn refined(&self) -> Self {
        Self {
            centers_per_axis: 2 * self.centers_per_axis - 1,
            k_min: 2 * self.k_min,
            k_max: 2 * self.k_max,
            radii_per_octave: 2 * self.radii_per_octave,
            ..self.clone()
        }
    }

    pub fn refined_by(&self, levels: usize) -> Self {
        (0..levels).fold(self.clone(), |f, _| f.refined())
    }

    pub fn build(&self) -> Result<BallFamily> {
        let n = self.center.len();
        check_dim(n)?;
        if self.centers_per_axis == 0 || self.radii_per_octave == 0 || self.k_min > self.k_max {
            return Err(Error::InvalidArgument(format!("degenerate ball family {self:?}")));
        }
        if !(self.radius_scale > 0.0 && self.half_width >= 0.0) {
            return Err(Error::InvalidArgument(format!("degenerate ball family {self:?}")));
        }
        let c0 = Point::new(&self.center)?;
        let m = self.centers_per_axis;
        let axis: Vec<f64> = (0..m)
            .map(|i| {
                if m == 1 {
                    0.0
                } else {
                    -self.half_width + 2.0 * self.half_width * i as f64 / (m - 1) as f64
                }
            })
            .collect();
        let mut centers = Vec::new();
        let total = m.pow(n as u32);
        for idx in 0..total {
            let mut c = [0.0; 3];
            let mut r = idx;
            for slot in c.iter_mut().take(n) {
                *slot = axis[r % m];
                r /= m;
            }
            centers.push(c0 + Point::raw(c, n));
        }
        if self.include_center && !centers.contains(&c0) {
            centers.push(c0);
        }
        let radii = (self.k_min..=self.k_max)
            .map(|k| self.radius_scale * (k as f64 / self.radii_per_octave as f64).exp2())
            .collect();
        Ok(BallFamily { centers, radii })
    }
}

/// Every (center, radius) combination of the two lists.
#[derive(Clone, Debug, PartialEq)]
pub struct BallFamily {
    pub centers: Vec<Point>,
    pub radii: Vec<f64>,
}

impl BallFamily {
    pub fn new(centers: Vec<Point>, mut radii: Vec<f64>) -> Result<Self> {
        if centers.is_empty() || radii.is_empty() {
            return Err(Error::InvalidArgument("ball family is empty".into()));
        }
        if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidArgument("family radii must be positive".into()));
        }
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        Ok(Self { centers, radii })
    }

    pub fn len(&self) -> usize {
        self.centers.len() * self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn balls(&self) -> impl Iterator<Item = Ball> + '_ {
        self.centers.iter().flat_map(move |c| {
            self.radii.iter().map(move |r| Ball {
                center: *c,
                radius: *r,
            })
        })
    }

    pub fn octaves(&self) -> f64 {
        (self.radii[self.radii.len() - 1] / self.radii[0]).log2()
    }
}

/// omega(B(c, r)) over a center list and an increasing radius list.
#[derive(Clone, Debug)]
pub struct BallMassTable {
    pub weight: Weight,
    pub centers: Vec<Point>,
    pub radii: Vec<f64>,
    /// masses[i][j] = omega(B(centers[i], radii[j])), nondecreasing in j.
    pub masses: Vec<Vec<f64>>,
    /// d log m / d log r at each entry, when the table was built by a radial
    /// sweep. Enables cubic Hermite interpolation in `mass_at`.
    pub log_slopes: Option<Vec<Vec<f64>>>,
    pub budget: QuadratureBudget,
}

impl BallMassTable {
    pub fn build(weight: &Weight, family: &BallFamily, budget: &QuadratureBudget) -> Result<Self> {
        let masses = family
            .centers
            .iter()
            .map(|c| {
                let mut row = family
                    .radii
                    .iter()
                    .map(|r| weight.ball_mass(&Ball::new(*c, *r)?, budget))
                    .collect::<Result<Vec<f64>>>()?;
                enforce_monotone(&mut row);
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            weight: weight.clone(),
            centers: family.centers.clone(),
            radii: family.radii.clone(),
            masses,
            log_slopes: None,
            budget: *budget,
        })
    }

    /// Single-center table on radii `s_min * 2^{j/density}` up to `s_max`,
    /// accumulated shell by shell in polar coordinates about `center`.
    pub fn radial_profile(
        weight: &Weight,
        center: Point,
        s_min: f64,
        s_max: f64,
        budget: &QuadratureBudget,
    ) -> Result<Self> {
        budget.validate()?;
        center.ensure_dim(weight.dim)?;
        if !(s_min > 0.0 && s_max > s_min) {
            return Err(Error::InvalidArgument(format!(
                "profile radii need 0 < s_min < s_max, got ({s_min}, {s_max})"
            )));
        }
        let dens = budget.mass_table_density as f64;
        let count = (dens * (s_max / s_min).log2()).ceil().max(1.0) as usize;
        let radii: Vec<f64> = (0..=count)
            .map(|j| {
                if j == count {
                    s_max
                } else {
                    s_min * (j as f64 / dens).exp2()
                }
            })
            .collect();
        let first = weight.quadrature_ball_mass(&Ball::new(center, s_min)?, budget)?;
        let rule = cached_sphere_rule(weight.dim, budget.sphere_resolution)?;
        let gl = gauss_legendre(budget.radial_nodes);
        let m = gl.len();
        let n = weight.dim as i32;
        let mut panels = radial_panels(s_min, s_max, 1, 0);
        if let Some(p) = weight.pole() {
            split_panels_at(&mut panels, center.dist(&p.point));
        }
        let mut masses = Vec::with_capacity(radii.len());
        masses.push(first);
        let mut base = first;
        let mut h = vec![0.0; m];
        let mut tail = vec![0.0; m];
        let mut j = 1;
        let shell_density = |r: f64| -> f64 {
            let ang: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(xi, w)| w * weight.evaluate(&center.along(xi, r)))
                .sum();
            r.powi(n - 1) * ang
        };
        for (a, b) in panels {
            for (i, (r, _)) in gl.mapped(a, b).enumerate() {
                h[i] = shell_density(r);
            }
            let half = 0.5 * (b - a);
            let full: f64 = gl.weights().iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() * half;
            while j < radii.len() && radii[j] <= b * (1.0 + 1e-14) {
                let u = ((2.0 * radii[j] - a - b) / (b - a)).clamp(-1.0, 1.0);
                gl.tail_weights(u, &mut tail);
                let t: f64 = tail.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() * half;
                masses.push(base + full - t);
                j += 1;
            }
            base += full;
        }
        while masses.len() < radii.len() {
            masses.push(base);
        }
        for m in &masses {
            check_mass(*m)?;
        }
        enforce_monotone(&mut masses);
        let slopes = radii
            .iter()
            .zip(&masses)
            .map(|(r, m)| r * shell_density(*r) / m)
            .collect();
        Ok(Self {
            weight: weight.clone(),
            centers: vec![center],
            radii,
            masses: vec![masses],
            log_slopes: Some(vec![slopes]),
            budget: *budget,
        })
    }

    pub fn family(&self) -> BallFamily {
        BallFamily {
            centers: self.centers.clone(),
            radii: self.radii.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len() * self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> impl Iterator<Item = (Ball, f64)> + '_ {
        self.centers.iter().zip(&self.masses).flat_map(move |(c, row)| {
            self.radii.iter().zip(row).map(move |(r, m)| {
                (
                    Ball {
                        center: *c,
                        radius: *r,
                    },
                    *m,
                )
            })
        })
    }

    /// Log-log interpolated mass of B(centers[idx], r); radii outside the
    /// tabulated range are an error.
    pub fn mass_at(&self, idx: usize, r: f64) -> Result<f64> {
        let radii = &self.radii;
        let row = &self.masses[idx];
        let (lo, hi) = (radii[0], radii[radii.len() - 1]);
        if !(r >= lo * (1.0 - 1e-12) && r <= hi * (1.0 + 1e-12)) {
            return Err(Error::MissingMassData { radius: r });
        }
        let k = radii.partition_point(|x| *x < r);
        if k == 0 {
            return Ok(row[0]);
        }
        if k >= radii.len() {
            return Ok(row[radii.len() - 1]);
        }
        let (r0, r1) = (radii[k - 1], radii[k]);
        let (m0, m1) = (row[k - 1], row[k]);
        let du = (r1 / r0).ln();
        let t = (r / r0).ln() / du;
        let dv = (m1 / m0).ln();
        let slopes = self
            .log_slopes
            .as_ref()
            .map(|s| (s[idx][k - 1], s[idx][k]))
            .filter(|(a, b)| a.is_finite() && b.is_finite());
        let v = match slopes {
            // Cubic Hermite in (log r, log m).
            Some((s0, s1)) => {
                let (t2, t3) = (t * t, t * t * t);
                (2.0 * t3 - 3.0 * t2 + 1.0) * m0.ln()
                    + (t3 - 2.0 * t2 + t) * du * s0
                    + (-2.0 * t3 + 3.0 * t2) * m1.ln()
                    + (t3 - t2) * du * s1
            }
            None => m0.ln() + t * dv,
        };
        Ok(v.exp().clamp(m0, m1))
    }

    /// Writes `c1,..,cn,radius,mass` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.weight.dim;
        let mut header: Vec<String> = (1..=n).map(|i| format!("c{i}")).collect();
        header.push("radius".into());
        header.push("mass".into());
        w.write_record(&header)?;
        for (ball, m) in self.entries() {
            let mut rec: Vec<String> = ball.center.coords().iter().map(|v| v.to_string()).collect();
            rec.push(ball.radius.to_string());
            rec.push(m.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn enforce_monotone(row: &mut [f64]) {
    for j in 1..row.len() {
        if row[j] < row[j - 1] {
            row[j] = row[j - 1];
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MuckenhouptEstimate {
    pub delta: f64,
    pub value: f64,
    pub family_size: usize,
    /// Values at successive family refinements, ending with `value`.
    pub history: Vec<f64>,
}

impl MuckenhouptEstimate {
    /// Relative change between the last two history entries.
    pub fn last_growth(&self) -> Option<f64> {
        let h = &self.history;
        (h.len() >= 2).then(|| h[h.len() - 1] / h[h.len() - 2] - 1.0)
    }
}

/// Per-ball A_delta characteristic (avg omega)(avg omega^{-1/(delta-1)})^{delta-1},
/// or (avg omega)(max 1/omega) for delta = 1.
pub fn ball_characteristic(
    weight: &Weight,
    delta: f64,
    ball: &Ball,
    mass: f64,
    budget: &QuadratureBudget,
) -> Result<f64> {
    let avg = mass / ball.volume();
    if delta == 1.0 {
        return Ok(avg * weight.max_inverse_on(ball, budget));
    }
    let dual = weight.powered(-1.0 / (delta - 1.0));
    let dual_avg = dual.ball_mass(ball, budget)? / ball.volume();
    Ok(avg * dual_avg.powf(delta - 1.0))
}

/// Max of the A_delta characteristic over the table's balls, floored at 1.
pub fn estimate_muckenhoupt_constant(
    weight: &Weight,
    delta: f64,
    family: &BallMassTable,
) -> Result<MuckenhouptEstimate> {
    if !(delta >= 1.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("A_delta needs delta >= 1, got {delta}")));
    }
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty ball family".into()));
    }
    let mut value: f64 = 1.0;
    for (ball, mass) in family.entries() {
        let c = ball_characteristic(weight, delta, &ball, mass, &family.budget)?;
        value = value.max(c);
    }
    Ok(MuckenhouptEstimate {
        delta,
        value,
        family_size: family.len(),
        history: vec![value],
    })
}

/// Estimates over `levels` successive refinements of `spec`. Each level
/// doubles the family density and adds ten octaves of quadrature grading.
pub fn muckenhoupt_refinement(
    weight: &Weight,
    delta: f64,
    spec: &FamilySpec,
    levels: usize,
    budget: &QuadratureBudget,
) -> Result<MuckenhouptEstimate> {
    if levels == 0 {
        return Err(Error::InvalidArgument("refinement needs at least one level".into()));
    }
    let mut history = Vec::with_capacity(levels);
    let mut last = None;
    for level in 0..levels {
        let fam = spec.refined_by(level).build()?;
        let b = QuadratureBudget {
            grading_depth: budget.grading_depth + 10 * level,
            ..*budget
        };
        let table = BallMassTable::build(weight, &fam, &b)?;
        let est = estimate_muckenhoupt_constant(weight, delta, &table)?;
        history.push(est.value);
        last = Some(est);
    }
    let mut est = last.expect("levels >= 1");
    est.history = history;
    Ok(est)
}

/// A doubling sample: the pair of balls B(x, r), B(x, lambda r).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DoublingSample {
    pub ball: Ball,
    pub lambda: f64,
    /// omega(B(x, lambda r))
    pub lhs: f64,
    /// lambda^{n delta} A omega(B(x, r))
    pub rhs: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct DoublingReport {
    pub samples: Vec<DoublingSample>,
    /// Indices into `samples` with lhs > rhs (1 + 1e-6).
    pub violations: Vec<usize>,
    pub max_ratio: f64,
}

pub fn check_doubling(
    weight: &Weight,
    delta: f64,
    a_const: f64,
    samples: &[(Ball, f64)],
    budget: &QuadratureBudget,
) -> Result<DoublingReport> {
    let mut report = DoublingReport::default();
    let n = weight.dim as f64;
    for (i, (ball, lambda)) in samples.iter().enumerate() {
        if *lambda <= 1.0 {
            return Err(Error::InvalidArgument(format!("doubling factor {lambda} must exceed 1")));
        }
        let big = Ball::new(ball.center, ball.radius * lambda)?;
        let lhs = weight.ball_mass(&big, budget)?;
        let rhs = lambda.powf(n * delta) * a_const * weight.ball_mass(ball, budget)?;
        report.max_ratio = report.max_ratio.max(lhs / rhs);
        if lhs > rhs * (1.0 + 1e-6) {
            report.violations.push(i);
        }
        report.samples.push(DoublingSample {
            ball: *ball,
            lambda: *lambda,
            lhs,
            rhs,
        });
    }
    Ok(report)
}

/// min over the table of omega(B) / r^d.
pub fn estimate_lower_ahlfors(d: f64, family: &BallMassTable) -> Result<f64> {
    if !(d > 1.0) {
        return Err(Error::InvalidArgument(format!("Ahlfors exponent must exceed 1, got {d}")));
    }
    if family.family().octaves() < 3.0 - 1e-12 {
        return Err(Error::InvalidArgument(
            "Ahlfors estimate needs radii spanning at least three octaves".into(),
        ));
    }
    Ok(family
        .entries()
        .map(|(b, m)| m / b.radius.powf(d))
        .fold(f64::INFINITY, f64::min))
}

/// Both sides of (1/|B|) int_B |f| <= A^{1/delta} ((1/omega(B)) int_B |f|^delta omega)^{1/delta}.
pub fn check_holder_average(
    weight: &Weight,
    delta: f64,
    a_const: f64,
    f: &dyn Field,
    ball: &Ball,
    budget: &QuadratureBudget,
) -> Result<(f64, f64)> {
    if delta < 1.0 {
        return Err(Error::InvalidArgument(format!("delta must be >= 1, got {delta}")));
    }
    let clip = f.support();
    let lhs = integrate_region(ball, clip.as_ref(), None, budget, |y| f.value(y).abs()) / ball.volume();
    let num = weight.integrate(ball, clip.as_ref(), budget, |y| f.value(y).abs().powf(delta));
    let rhs = a_const.powf(1.0 / delta) * (num / weight.ball_mass(ball, budget)?).powf(1.0 / delta);
    Ok((lhs, rhs))
}
