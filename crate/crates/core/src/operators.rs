//! Operator evaluations at a point: truncated and maximal rough singular
//! integrals, the principal value ladder, classical and weighted Riesz
//! potentials, and the weighted maximal function.
//!
//! Every integral is done in polar coordinates about the evaluation point.
//! Radii are split into Gauss-Legendre panels, and at each radial node only
//! the part of the sphere that meets the support of `f` is integrated.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::corpus::Field;
use crate::error::{Error, Result};
use crate::geometry::{Ball, DyadicTruncationGrid, Point};
use crate::kernels::KernelOnSphere;
use crate::quadrature::{
    cached_sphere_rule, cap_panel_width, gauss_legendre, pole_grading_depth, radial_panels,
    sphere_section, sphere_section_avoiding, split_panels_at, QuadratureBudget, SphereRule,
};
use crate::weights::{BallMassTable, Weight};

/// c(n, alpha) = pi^{-n/2} 2^{-alpha} Gamma((n - alpha)/2) / Gamma(alpha/2).
pub fn riesz_constant(n: usize, alpha: f64) -> f64 {
    let nf = n as f64;
    PI.powf(-nf / 2.0) * (-alpha).exp2() * gamma((nf - alpha) / 2.0) / gamma(alpha / 2.0)
}

fn require_support(f: &dyn Field) -> Result<Ball> {
    f.support().ok_or_else(|| Error::UnknownSupport(f.label()))
}

fn check_order(alpha: f64, n: usize) -> Result<()> {
    if alpha > 0.0 && alpha < n as f64 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "order alpha={alpha} must lie in (0, {n})"
        )))
    }
}

/// Radial panels covering the radii at which the sphere S(x, s) meets `supp`,
/// starting no lower than `floor`. When x lies in the support and `floor` is
/// zero, panels are graded toward s = 0 for an integrand behaving like
/// s^{n - 1 + exponent}.
fn support_panels(
    x: &Point,
    supp: &Ball,
    floor: f64,
    exponent: f64,
    budget: &QuadratureBudget,
) -> Vec<(f64, f64)> {
    let n = x.dim();
    let d = x.dist(&supp.center);
    let hi = d + supp.radius;
    let lo = (d - supp.radius).max(floor);
    if hi <= lo {
        return Vec::new();
    }
    let mut panels = if lo <= 0.0 {
        radial_panels(0.0, hi, budget.panels_per_octave, pole_grading_depth(n, exponent, budget))
    } else {
        radial_panels(lo, hi, budget.panels_per_octave, 0)
    };
    if supp.radius > d {
        split_panels_at(&mut panels, supp.radius - d);
    }
    cap_panel_width(&mut panels, supp.radius / (4.0 * budget.panels_per_octave as f64));
    panels
}

/// Integral of `g` over the part of S(x, s) where the field can be nonzero,
/// with `support` already placed relative to x.
fn spherical_mean(
    x: &Point,
    s: f64,
    support: &Ball,
    rule: &SphereRule,
    mut g: impl FnMut(&Point) -> f64,
) -> f64 {
    let mut acc = 0.0;
    sphere_section(x, s, Some(support), rule).for_each(|xi, w| acc += w * g(xi));
    acc
}

fn finite(v: f64, what: &str, x: &Point) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteSample {
            location: format!("{what} at {x:?}"),
        })
    }
}

/// The radial integrand s ↦ s^{alpha-2} ∫ Ω(ξ) f(x - sξ) dσ(ξ) sampled on
/// Gauss panels, so that T^t for any t is a suffix sum plus one partial panel.
#[derive(Clone, Debug)]
pub struct TruncationProfile {
    panels: Vec<(f64, f64)>,
    /// Integrand values at the Gauss nodes of each panel.
    samples: Vec<Vec<f64>>,
    /// `suffix[i]` = integral over panels i.. (one extra trailing zero).
    suffix: Vec<f64>,
    radial_nodes: usize,
}

impl TruncationProfile {
    /// Samples the integrand for truncations t >= `t_min`; every radius in
    /// `breaks` becomes a panel boundary so T^t there is a plain suffix sum.
    pub fn new(
        kernel: &KernelOnSphere,
        alpha: f64,
        f: &dyn Field,
        x: &Point,
        t_min: f64,
        breaks: &[f64],
        budget: &QuadratureBudget,
    ) -> Result<Self> {
        budget.validate()?;
        let n = x.dim();
        x.ensure_dim(kernel.dim())?;
        x.ensure_dim(f.dim())?;
        check_order(alpha, n)?;
        if !(t_min > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "truncation radius must be positive, got {t_min}"
            )));
        }
        let supp = require_support(f)?;
        // f(x - s ξ) is nonzero iff x + s ξ lies in the support reflected through x.
        let reflected = Ball::new(x.scaled(2.0) - supp.center, supp.radius)?;
        let mut panels = support_panels(x, &supp, t_min, alpha - 2.0, budget);
        for &b in breaks {
            split_panels_at(&mut panels, b);
        }
        let rule = cached_sphere_rule(n, budget.sphere_resolution)?;
        let gl = gauss_legendre(budget.radial_nodes);
        let mut samples = Vec::with_capacity(panels.len());
        let mut integrals = Vec::with_capacity(panels.len());
        for &(a, b) in &panels {
            let mut h = Vec::with_capacity(gl.len());
            let mut total = 0.0;
            for (s, w) in gl.mapped(a, b) {
                let ang = spherical_mean(x, s, &reflected, &rule, |xi| {
                    kernel.evaluate(xi) * f.value(&x.along(xi, -s))
                });
                let v = finite(s.powf(alpha - 2.0) * ang, "truncation integrand", x)?;
                h.push(v);
                total += w * v;
            }
            samples.push(h);
            integrals.push(total);
        }
        let mut suffix = vec![0.0; panels.len() + 1];
        for i in (0..panels.len()).rev() {
            suffix[i] = suffix[i + 1] + integrals[i];
        }
        Ok(Self {
            panels,
            samples,
            suffix,
            radial_nodes: budget.radial_nodes,
        })
    }

    /// T^t, using the Legendre interpolant inside the panel containing t.
    pub fn at(&self, t: f64) -> f64 {
        let i = self.panels.partition_point(|&(_, b)| b <= t);
        if i >= self.panels.len() {
            return 0.0;
        }
        let (a, b) = self.panels[i];
        if t <= a {
            return self.suffix[i];
        }
        let gl = gauss_legendre(self.radial_nodes);
        let mut tail = vec![0.0; gl.len()];
        gl.tail_weights((2.0 * t - a - b) / (b - a), &mut tail);
        let partial: f64 = tail.iter().zip(&self.samples[i]).map(|(w, v)| w * v).sum();
        self.suffix[i + 1] + 0.5 * (b - a) * partial
    }

    pub fn radial_node_count(&self) -> usize {
        self.panels.len() * self.radial_nodes
    }
}

/// T^t_{Ω,α} f(x) = ∫_{|y|>t} Ω(y/|y|) |y|^{-(n+1-α)} f(x - y) dy.
pub fn truncated_singular(
    kernel: &KernelOnSphere,
    alpha: f64,
    f: &dyn Field,
    t: f64,
    x: &Point,
    budget: &QuadratureBudget,
) -> Result<f64> {
    Ok(TruncationProfile::new(kernel, alpha, f, x, t, &[], budget)?.at(t))
}

/// One operator value with what is needed to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorEvaluation {
    pub point: Point,
    pub value: f64,
    /// Truncation radii sampled, with T^t at each.
    pub truncations: Vec<(f64, f64)>,
    pub radial_nodes: usize,
    pub budget: QuadratureBudget,
}

impl OperatorEvaluation {
    /// Truncation radius attaining the maximum.
    pub fn argmax(&self) -> Option<f64> {
        self.truncations
            .iter()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|p| p.0)
    }
}

/// max over the grid radii t of |T^t_{Ω,α} f(x)|.
pub fn maximal_truncated_order(
    kernel: &KernelOnSphere,
    alpha: f64,
    f: &dyn Field,
    x: &Point,
    grid: &DyadicTruncationGrid,
    budget: &QuadratureBudget,
) -> Result<OperatorEvaluation> {
    if grid.octaves() < 2 {
        return Err(Error::GridTooCoarse {
            octaves: grid.octaves(),
        });
    }
    let radii = grid.radii();
    let profile = TruncationProfile::new(kernel, alpha, f, x, radii[0], &radii, budget)?;
    let truncations: Vec<(f64, f64)> = radii.iter().map(|&t| (t, profile.at(t))).collect();
    let value = truncations.iter().fold(0.0f64, |m, p| m.max(p.1.abs()));
    Ok(OperatorEvaluation {
        point: *x,
        value,
        truncations,
        radial_nodes: profile.radial_node_count(),
        budget: *budget,
    })
}

/// T*_Ω f(x) restricted to the grid radii.
pub fn maximal_truncated(
    kernel: &KernelOnSphere,
    f: &dyn Field,
    x: &Point,
    grid: &DyadicTruncationGrid,
    budget: &QuadratureBudget,
) -> Result<OperatorEvaluation> {
    maximal_truncated_order(kernel, 1.0, f, x, grid, budget)
}

/// Minimum decay factor of successive ladder differences.
pub const PV_DECAY: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrincipalValue {
    /// T^ε at the smallest ε of the ladder.
    pub value: f64,
    /// (ε, T^ε) for every ladder level.
    pub ladder: Vec<(f64, f64)>,
    /// |T^{ε_{k+1}} - T^{ε_k}|.
    pub differences: Vec<f64>,
    /// False when the differences fail to decay; the value is still reported.
    pub converged: bool,
}

/// p.v. T_Ω f(x) estimated along a decreasing ladder of truncations.
pub fn principal_value_singular(
    kernel: &KernelOnSphere,
    f: &dyn Field,
    x: &Point,
    ladder: &[f64],
    budget: &QuadratureBudget,
) -> Result<PrincipalValue> {
    if ladder.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "principal value ladder needs at least 3 levels, got {}",
            ladder.len()
        )));
    }
    if ladder
        .windows(2)
        .any(|w| !(w[1] > 0.0 && w[1] <= 0.5 * w[0]))
    {
        return Err(Error::InvalidArgument(
            "ladder must be positive and shrink by a factor of at least 2 per level".into(),
        ));
    }
    let eps_min = *ladder.last().expect("non-empty ladder");
    let profile = TruncationProfile::new(kernel, 1.0, f, x, eps_min, ladder, budget)?;
    let values: Vec<(f64, f64)> = ladder.iter().map(|&e| (e, profile.at(e))).collect();
    let differences: Vec<f64> = values.windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect();
    let size = values.iter().fold(0.0f64, |m, v| m.max(v.1.abs()));
    let floor = 1e-12 * size + 1e-15;
    let converged = differences
        .windows(2)
        .all(|d| d[1] <= floor || d[1] * PV_DECAY <= d[0]);
    Ok(PrincipalValue {
        value: values.last().expect("non-empty ladder").1,
        ladder: values,
        differences,
        converged,
    })
}

/// I_α f(x) = c(n, α) ∫ f(y) |x - y|^{α-n} dy.
pub fn riesz_potential(
    f: &dyn Field,
    alpha: f64,
    x: &Point,
    budget: &QuadratureBudget,
) -> Result<f64> {
    let n = x.dim();
    Ok(riesz_constant(n, alpha) * riesz_integral(f, alpha, x, budget)?)
}

/// ∫ f(y) |x - y|^{α-n} dy without the normalizing constant.
pub fn riesz_integral(
    f: &dyn Field,
    alpha: f64,
    x: &Point,
    budget: &QuadratureBudget,
) -> Result<f64> {
    radial_sweep(f, alpha, x, None, budget, |s, _| Ok(s.powf(alpha - 1.0)))
}

/// Shared driver for I_α and F_{ω,α}: ∫_0^∞ radial(s) ∫_S f(x + sξ) ω(x + sξ) dσ ds,
/// where `radial(s, ...)` already includes the s^{n-1} Jacobian.
fn radial_sweep(
    f: &dyn Field,
    alpha: f64,
    x: &Point,
    weight: Option<&Weight>,
    budget: &QuadratureBudget,
    mut radial: impl FnMut(f64, usize) -> Result<f64>,
) -> Result<f64> {
    budget.validate()?;
    let n = x.dim();
    x.ensure_dim(f.dim())?;
    check_order(alpha, n)?;
    let supp = require_support(f)?;
    let panels = sweep_panels(x, &supp, alpha, weight, budget);
    let rule = cached_sphere_rule(n, budget.sphere_resolution)?;
    let gl = gauss_legendre(budget.radial_nodes);
    let pole = weight.and_then(|w| w.pole()).map(|p| p.point);
    let mut total = 0.0;
    let mut k = 0;
    for (a, b) in panels {
        for (s, w) in gl.mapped(a, b) {
            let section = match &pole {
                Some(p) => sphere_section_avoiding(x, s, Some(&supp), &rule, p),
                None => sphere_section(x, s, Some(&supp), &rule),
            };
            let mut ang = 0.0;
            section.for_each(|xi, wx| {
                let y = x.along(xi, s);
                ang += wx * f.value(&y) * weight.map_or(1.0, |om| om.evaluate(&y));
            });
            if ang != 0.0 {
                total += w * radial(s, k)? * ang;
            }
            k += 1;
        }
    }
    finite(total, "radial sweep", x)
}

fn sweep_panels(
    x: &Point,
    supp: &Ball,
    alpha: f64,
    weight: Option<&Weight>,
    budget: &QuadratureBudget,
) -> Vec<(f64, f64)> {
    let mut panels = support_panels(x, supp, 0.0, alpha - x.dim() as f64, budget);
    if let Some(p) = weight.and_then(|w| w.pole()) {
        split_panels_at(&mut panels, x.dist(&p.point));
    }
    panels
}

/// Radial nodes at which `radial_sweep` evaluates, in order.
fn sweep_nodes(
    x: &Point,
    supp: &Ball,
    alpha: f64,
    weight: &Weight,
    budget: &QuadratureBudget,
) -> Vec<f64> {
    let gl = gauss_legendre(budget.radial_nodes);
    sweep_panels(x, supp, alpha, Some(weight), budget)
        .into_iter()
        .flat_map(|(a, b)| gl.mapped(a, b).map(|p| p.0).collect::<Vec<_>>())
        .collect()
}

/// F_{ω,α} f(x) = ∫ |x - y|^α ω(B(x, |x - y|))^{-1} f(y) ω(y) dy.
///
/// Ball masses come in closed form or from the cap integral for weights
/// without a smooth factor, and otherwise from a radial mass profile about x
/// covering exactly the radii the sweep visits.
pub fn weighted_riesz(
    weight: &Weight,
    alpha: f64,
    f: &dyn Field,
    x: &Point,
    budget: &QuadratureBudget,
) -> Result<f64> {
    x.ensure_dim(weight.dim())?;
    let n = x.dim() as i32;
    if weight.has_cheap_masses() {
        return radial_sweep(f, alpha, x, Some(weight), budget, |s, _| {
            let m = weight.ball_mass(&Ball::new(*x, s)?, budget)?;
            Ok(s.powf(alpha) * s.powi(n - 1) / m)
        });
    }
    let supp = require_support(f)?;
    let nodes = sweep_nodes(x, &supp, alpha, weight, budget);
    let (Some(&lo), Some(&hi)) = (nodes.first(), nodes.last()) else {
        return Ok(0.0);
    };
    let table = BallMassTable::radial_profile(weight, *x, lo, hi * (1.0 + 1e-12), budget)?;
    weighted_riesz_from_table(weight, &table, 0, alpha, f, budget)
}

/// F_{ω,α} f at the table center `idx`, with masses interpolated from the
/// table's radial row.
pub fn weighted_riesz_from_table(
    weight: &Weight,
    table: &BallMassTable,
    idx: usize,
    alpha: f64,
    f: &dyn Field,
    budget: &QuadratureBudget,
) -> Result<f64> {
    let x = *table
        .centers
        .get(idx)
        .ok_or_else(|| Error::InvalidArgument(format!("table has no center {idx}")))?;
    let n = x.dim() as i32;
    radial_sweep(f, alpha, &x, Some(weight), budget, |s, _| {
        let m = table.mass_at(idx, s)?;
        Ok(s.powf(alpha) * s.powi(n - 1) / m)
    })
}

/// Balls containing x over which M_ω is maximized: balls centered at x and
/// balls shifted toward `toward` by a fraction of their radius, with radii
/// `scale * 2^{k / per_octave}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PointFamilySpec {
    pub k_min: i32,
    pub k_max: i32,
    pub per_octave: usize,
    /// Center offsets, as fractions of the radius, in [0, 1).
    pub shifts: Vec<f64>,
}

impl Default for PointFamilySpec {
    fn default() -> Self {
        Self {
            k_min: -8,
            k_max: 3,
            per_octave: 2,
            shifts: vec![0.5, 0.9],
        }
    }
}

impl PointFamilySpec {
    /// Twice the radii per octave and one more octave at each end.
    pub fn refined(&self) -> Self {
        Self {
            k_min: self.k_min - 1,
            k_max: self.k_max + 1,
            per_octave: self.per_octave * 2,
            shifts: self.shifts.clone(),
        }
    }

    pub fn balls(&self, x: &Point, toward: Option<&Point>, scale: f64) -> Result<Vec<Ball>> {
        if self.k_min > self.k_max || self.per_octave == 0 {
            return Err(Error::InvalidArgument("empty point family".into()));
        }
        if self.shifts.iter().any(|s| !(0.0..1.0).contains(s)) {
            return Err(Error::InvalidArgument(
                "family shifts must lie in [0, 1)".into(),
            ));
        }
        let dir = toward
            .and_then(|c| (*c - *x).normalized())
            .unwrap_or_else(|| Point::e1(x.dim()));
        let p = self.per_octave as i32;
        let mut out = Vec::new();
        for k in (self.k_min * p)..=(self.k_max * p) {
            let r = scale * (k as f64 / p as f64).exp2();
            out.push(Ball::new(*x, r)?);
            for &s in &self.shifts {
                if s > 0.0 {
                    out.push(Ball::new(x.along(&dir, s * r), r)?);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalAverage {
    pub value: f64,
    pub ball: Ball,
}

/// max over the given balls containing x of (1/ω(B)) ∫_B |f| ω.
pub fn weighted_maximal(
    weight: &Weight,
    f: &dyn Field,
    x: &Point,
    balls: &[Ball],
    budget: &QuadratureBudget,
) -> Result<MaximalAverage> {
    budget.validate()?;
    x.ensure_dim(weight.dim())?;
    let supp = f.support();
    let mut total = None;
    let mut best: Option<MaximalAverage> = None;
    for ball in balls.iter().filter(|b| b.contains(x)) {
        let value = match &supp {
            Some(s) if !ball.intersects(s) => 0.0,
            Some(s) => {
                let num = if ball.encloses(s) {
                    *total.get_or_insert_with(|| {
                        weight.integrate(s, None, budget, |y| f.value(y).abs())
                    })
                } else {
                    weight.integrate(ball, Some(s), budget, |y| f.value(y).abs())
                };
                num / weight.ball_mass(ball, budget)?
            }
            // Unbounded fields: numerator and mass share the same nodes.
            None => {
                let num = weight.integrate(ball, None, budget, |y| f.value(y).abs());
                num / weight.integrate(ball, None, budget, |_| 1.0)
            }
        };
        if best.is_none_or(|b| value > b.value) {
            best = Some(MaximalAverage { value, ball: *ball });
        }
    }
    best.ok_or(Error::NoBallContainsPoint)
}
