//! Quadrature rules: Gauss-Legendre panels in radius, sphere rules in angle,
//! and ray-based integration over balls with an optional singular point.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_dim, sphere_area, Ball, Point, RadialShell};

/// Resolution knobs shared by every operator and norm evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureBudget {
    /// Angular nodes on S^1; azimuthal nodes on S^2 (with half as many polar nodes).
    pub sphere_resolution: usize,
    /// Gauss-Legendre nodes per radial panel.
    pub radial_nodes: usize,
    /// Geometric radial panels per octave for operator shells.
    pub panels_per_octave: usize,
    /// Octaves of geometric grading toward a singular radius.
    pub grading_depth: usize,
    /// Radii per octave in per-point ball-mass tables.
    pub mass_table_density: usize,
    /// Uniform radial panels for ball integrals without a singular point.
    pub ball_panels: usize,
}

impl Default for QuadratureBudget {
    fn default() -> Self {
        Self {
            sphere_resolution: 128,
            radial_nodes: 8,
            panels_per_octave: 1,
            grading_depth: 30,
            mass_table_density: 16,
            ball_panels: 2,
        }
    }
}

impl QuadratureBudget {
    pub fn for_dim(n: usize) -> Self {
        match n {
            3 => Self {
                sphere_resolution: 32,
                ..Self::default()
            },
            _ => Self::default(),
        }
    }

    /// One refinement level: doubled angular/radial resolution and table
    /// density, ten more octaves of grading.
    pub fn refined(&self) -> Self {
        Self {
            sphere_resolution: self.sphere_resolution * 2,
            radial_nodes: (self.radial_nodes * 2).min(64),
            panels_per_octave: self.panels_per_octave,
            grading_depth: self.grading_depth + 10,
            mass_table_density: self.mass_table_density * 2,
            ball_panels: self.ball_panels,
        }
    }

    pub fn refined_by(&self, levels: usize) -> Self {
        (0..levels).fold(*self, |b, _| b.refined())
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.sphere_resolution < 8 {
            return Err(Error::InvalidArgument(format!(
                "sphere resolution {} below minimum 8",
                self.sphere_resolution
            )));
        }
        if self.radial_nodes < 4 {
            return Err(Error::InvalidArgument(format!(
                "radial_nodes {} below minimum 4",
                self.radial_nodes
            )));
        }
        if self.panels_per_octave == 0 || self.mass_table_density == 0 || self.ball_panels == 0 {
            return Err(Error::InvalidArgument(
                "panel counts and table density must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Gauss-Legendre rule on [-1, 1] together with the projection needed to
/// integrate its Legendre interpolant over sub-intervals [u, 1].
#[derive(Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    // proj[k * m + i] = (2k+1)/2 * w_i * P_k(x_i)
    proj: Vec<f64>,
}

fn legendre_upto(x: f64, m: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if m >= 1 {
        out[1] = x;
    }
    for k in 1..m {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0) * x * out[k] - kf * out[k - 1]) / (kf + 1.0);
    }
}

impl GaussLegendre {
    pub fn new(m: usize) -> Self {
        assert!(m >= 1, "Gauss-Legendre needs at least one node");
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        let mf = m as f64;
        for i in 0..m.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 1..m {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
                    p0 = p1;
                    p1 = p2;
                }
                let (pm, pm1) = if m == 1 { (x, 1.0) } else { (p1, p0) };
                dp = mf * (x * pm - pm1) / (x * x - 1.0);
                let dx = pm / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[m - 1 - i] = x;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
        if m % 2 == 1 {
            nodes[m / 2] = 0.0;
        }
        let mut proj = vec![0.0; m * m];
        let mut p = vec![0.0; m + 1];
        for i in 0..m {
            legendre_upto(nodes[i], m, &mut p);
            for k in 0..m {
                proj[k * m + i] = (2.0 * k as f64 + 1.0) / 2.0 * weights[i] * p[k];
            }
        }
        Self {
            nodes,
            weights,
            proj,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + h * x, h * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Weights `v` such that the integral over [u, 1] of the degree m-1
    /// interpolant through (x_i, h_i) equals sum_i v_i h_i.
    pub fn tail_weights(&self, u: f64, out: &mut [f64]) {
        let m = self.len();
        let mut p = vec![0.0; m + 2];
        legendre_upto(u, m + 1, &mut p);
        out[..m].fill(0.0);
        for k in 0..m {
            let t = if k == 0 {
                1.0 - u
            } else {
                (p[k - 1] - p[k + 1]) / (2.0 * k as f64 + 1.0)
            };
            let row = &self.proj[k * m..(k + 1) * m];
            for (o, c) in out[..m].iter_mut().zip(row) {
                *o += c * t;
            }
        }
    }
}

pub fn gauss_legendre(m: usize) -> Arc<GaussLegendre> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().expect("gauss-legendre cache poisoned");
    guard
        .entry(m)
        .or_insert_with(|| Arc::new(GaussLegendre::new(m)))
        .clone()
}

/// Quadrature rule for surface measure on S^{n-1}.
#[derive(Clone, Debug)]
pub struct SphereRule {
    dim: usize,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    /// Polynomial (n = 3) or trigonometric (n = 2) degree integrated exactly.
    pub exactness: usize,
}

impl SphereRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, g: impl Fn(&Point) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * g(p))
            .sum()
    }
}

/// Equally spaced nodes on S^1 (offset by half a step); on S^2 a
/// latitude-longitude product rule, Gauss in cos(polar angle).
pub fn sphere_rule(n: usize, resolution: usize) -> Result<SphereRule> {
    check_dim(n)?;
    if resolution < 8 {
        return Err(Error::InvalidArgument(format!(
            "sphere rule resolution {resolution} below minimum 8"
        )));
    }
    let rule = match n {
        2 => {
            let m = resolution;
            let w = 2.0 * PI / m as f64;
            let nodes = (0..m)
                .map(|j| {
                    let t = 2.0 * PI * (j as f64 + 0.5) / m as f64;
                    Point::raw([t.cos(), t.sin(), 0.0], 2)
                })
                .collect();
            SphereRule {
                dim: 2,
                nodes,
                weights: vec![w; m],
                exactness: m - 1,
            }
        }
        _ => {
            let n_az = resolution;
            let n_pol = resolution / 2;
            let gl = gauss_legendre(n_pol);
            let mut nodes = Vec::with_capacity(n_az * n_pol);
            let mut weights = Vec::with_capacity(n_az * n_pol);
            let w_az = 2.0 * PI / n_az as f64;
            for (mu, wmu) in gl.nodes().iter().zip(gl.weights()) {
                let s = (1.0 - mu * mu).sqrt();
                for j in 0..n_az {
                    let t = 2.0 * PI * (j as f64 + 0.5) / n_az as f64;
                    nodes.push(Point::raw([s * t.cos(), s * t.sin(), *mu], 3));
                    weights.push(wmu * w_az);
                }
            }
            SphereRule {
                dim: 3,
                nodes,
                weights,
                exactness: (2 * n_pol - 1).min(n_az - 1),
            }
        }
    };
    debug_assert!((rule.total_weight() / sphere_area(n) - 1.0).abs() < 1e-12);
    Ok(rule)
}

type RuleCache = Mutex<HashMap<(usize, usize), Arc<SphereRule>>>;

pub fn cached_sphere_rule(n: usize, resolution: usize) -> Result<Arc<SphereRule>> {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().expect("sphere cache poisoned").get(&(n, resolution)) {
        return Ok(r.clone());
    }
    let rule = Arc::new(sphere_rule(n, resolution)?);
    cache
        .lock()
        .expect("sphere cache poisoned")
        .insert((n, resolution), rule.clone());
    Ok(rule)
}

/// Directions and weights covering part of the sphere.
#[derive(Clone, Debug, Default)]
pub struct PartialRule {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
}

/// Orthonormal completion of a unit vector in R^3.
fn frame(axis: &Point) -> (Point, Point) {
    let a = if axis.coords()[0].abs() < 0.9 {
        Point::raw([1.0, 0.0, 0.0], 3)
    } else {
        Point::raw([0.0, 1.0, 0.0], 3)
    };
    let u = a
        .along(axis, -a.dot(axis))
        .normalized()
        .expect("helper axis is never parallel");
    let (e, uc) = (axis.coords(), u.coords());
    let v = Point::raw(
        [
            e[1] * uc[2] - e[2] * uc[1],
            e[2] * uc[0] - e[0] * uc[2],
            e[0] * uc[1] - e[1] * uc[0],
        ],
        3,
    );
    (u, v)
}

/// Gauss rule on the spherical cap of directions within `half_angle` of `axis`.
pub fn cap_rule(axis: &Point, half_angle: f64, resolution: usize) -> PartialRule {
    let mut out = PartialRule::default();
    if axis.dim() == 2 {
        let gl = gauss_legendre((resolution / 2).max(8));
        let (c, s) = (axis.coords()[0], axis.coords()[1]);
        for (x, w) in gl.nodes().iter().zip(gl.weights()) {
            let t = half_angle * x;
            let (ct, st) = (t.cos(), t.sin());
            out.nodes
                .push(Point::raw([c * ct - s * st, s * ct + c * st, 0.0], 2));
            out.weights.push(half_angle * w);
        }
    } else {
        let gl = gauss_legendre((resolution / 2).max(4));
        let n_az = resolution.max(8);
        let (u, v) = frame(axis);
        let w_az = 2.0 * PI / n_az as f64;
        for (x, w) in gl.mapped(0.0, half_angle) {
            let (cp, sp) = (x.cos(), x.sin());
            for j in 0..n_az {
                let b = 2.0 * PI * (j as f64 + 0.5) / n_az as f64;
                let d = axis.scaled(cp).along(&u, sp * b.cos()).along(&v, sp * b.sin());
                out.nodes.push(d);
                out.weights.push(w * sp * w_az);
            }
        }
    }
    out
}

/// Directions from `from` that hit `target`, assuming `from` lies outside
/// (or on) the target ball. Uses sin(phi) = (r/d) sin(psi) so the ray chord
/// length r cos(psi) is smooth in the quadrature variable.
pub fn cone_rule(from: &Point, target: &Ball, resolution: usize) -> PartialRule {
    let mut out = PartialRule::default();
    let diff = target.center - *from;
    let d = diff.norm();
    let Some(axis) = diff.normalized() else {
        return out;
    };
    let k = (target.radius / d).min(1.0);
    if from.dim() == 2 {
        let gl = gauss_legendre((resolution / 2).max(8));
        let (c, s) = (axis.coords()[0], axis.coords()[1]);
        for (psi, w) in gl.mapped(-PI / 2.0, PI / 2.0) {
            let sphi = k * psi.sin();
            let cphi = (1.0 - sphi * sphi).sqrt();
            if cphi <= 0.0 {
                continue;
            }
            out.nodes
                .push(Point::raw([c * cphi - s * sphi, s * cphi + c * sphi, 0.0], 2));
            out.weights.push(w * k * psi.cos() / cphi);
        }
    } else {
        let gl = gauss_legendre((resolution / 2).max(4));
        let n_az = (resolution / 2).max(8);
        let (u, v) = frame(&axis);
        let w_az = 2.0 * PI / n_az as f64;
        for (psi, w) in gl.mapped(0.0, PI / 2.0) {
            let sphi = k * psi.sin();
            let cphi = (1.0 - sphi * sphi).sqrt();
            if cphi <= 0.0 {
                continue;
            }
            let jac = w * sphi * k * psi.cos() / cphi * w_az;
            for j in 0..n_az {
                let b = 2.0 * PI * (j as f64 + 0.5) / n_az as f64;
                let dir = axis
                    .scaled(cphi)
                    .along(&u, sphi * b.cos())
                    .along(&v, sphi * b.sin());
                out.nodes.push(dir);
                out.weights.push(jac);
            }
        }
    }
    out
}

/// The part of the sphere S(x, r) on which a field supported in `support`
/// can be nonzero.
pub enum Section<'a> {
    Empty,
    Full(&'a SphereRule),
    Partial(PartialRule),
}

impl Section<'_> {
    pub fn for_each(&self, mut f: impl FnMut(&Point, f64)) {
        match self {
            Section::Empty => {}
            Section::Full(rule) => rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .for_each(|(p, w)| f(p, *w)),
            Section::Partial(rule) => rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .for_each(|(p, w)| f(p, *w)),
        }
    }
}

/// Directions xi such that `x + r xi` can lie in `support`.
pub fn sphere_section<'a>(
    x: &Point,
    r: f64,
    support: Option<&Ball>,
    full: &'a SphereRule,
) -> Section<'a> {
    let Some(s) = support else {
        return Section::Full(full);
    };
    let diff = s.center - *x;
    let d = diff.norm();
    if d + r <= s.radius {
        return Section::Full(full);
    }
    if r >= d + s.radius || r <= d - s.radius {
        return Section::Empty;
    }
    let cos_cap = ((r * r + d * d - s.radius * s.radius) / (2.0 * r * d)).clamp(-1.0, 1.0);
    let half = cos_cap.acos();
    match diff.normalized() {
        Some(axis) if half < PI * (1.0 - 1e-12) => {
            let res = if full.dim() == 2 {
                full.len()
            } else {
                (2 * full.len()).isqrt()
            };
            Section::Partial(cap_rule(&axis, half, res))
        }
        _ => Section::Full(full),
    }
}

/// Gauss rule on the arc of S^1 from angle `a` to angle `b`.
fn arc_rule(a: f64, b: f64, nodes: usize, out: &mut PartialRule) {
    let gl = gauss_legendre(nodes);
    for (t, w) in gl.mapped(a, b) {
        out.nodes.push(Point::raw([t.cos(), t.sin(), 0.0], 2));
        out.weights.push(w);
    }
}

/// Like [`sphere_section`], but with the integrand allowed a kink or an
/// integrable singularity at the point `avoid`. Rules are arranged so the
/// direction of `avoid` is a panel endpoint: on S^1 the arc is split there,
/// and on a full S^2 the polar axis points away from it. Partial caps on S^2
/// are returned unchanged.
pub fn sphere_section_avoiding<'a>(
    x: &Point,
    r: f64,
    support: Option<&Ball>,
    full: &'a SphereRule,
    avoid: &Point,
) -> Section<'a> {
    let section = sphere_section(x, r, support, full);
    let Some(toward) = (*avoid - *x).normalized() else {
        return section;
    };
    let n = full.dim();
    let res = if n == 2 { full.len() } else { (2 * full.len()).isqrt() };
    match (&section, n) {
        (Section::Empty, _) => section,
        (Section::Full(_), 3) => Section::Partial(cap_rule(&toward.scaled(-1.0), PI, res)),
        (Section::Partial(_), 3) => section,
        (Section::Full(_), _) => {
            let p = toward.coords()[1].atan2(toward.coords()[0]);
            let mut out = PartialRule::default();
            arc_rule(p, p + PI, res / 2, &mut out);
            arc_rule(p + PI, p + 2.0 * PI, res / 2, &mut out);
            Section::Partial(out)
        }
        (Section::Partial(_), _) => {
            let s = support.expect("partial sections come from a support ball");
            let axis = (s.center - *x).normalized().expect("x is not the support center");
            let d = s.center.dist(x);
            let cos_cap = ((r * r + d * d - s.radius * s.radius) / (2.0 * r * d)).clamp(-1.0, 1.0);
            let half = cos_cap.acos();
            let c = axis.coords()[1].atan2(axis.coords()[0]);
            let p = toward.coords()[1].atan2(toward.coords()[0]);
            // Offset of the avoided direction from the cap axis, in (-pi, pi].
            let off = (p - c + PI).rem_euclid(2.0 * PI) - PI;
            let mut out = PartialRule::default();
            if off.abs() < half {
                arc_rule(c - half, c + off, res / 2, &mut out);
                arc_rule(c + off, c + half, res / 2, &mut out);
            } else {
                arc_rule(c - half, c + half, res / 2, &mut out);
            }
            Section::Partial(out)
        }
    }
}

/// Composite panels on [lo, hi]. From zero: `depth` octaves graded toward the
/// origin plus one innermost panel. From lo > 0: geometric with ratio at most
/// 2^{1/per_octave}.
pub fn radial_panels(lo: f64, hi: f64, per_octave: usize, depth: usize) -> Vec<(f64, f64)> {
    if !(hi > lo) {
        return Vec::new();
    }
    let p = per_octave.max(1);
    let mut breaks = Vec::new();
    if lo <= 0.0 {
        let count = depth * p;
        breaks.push(0.0);
        for j in (0..=count).rev() {
            breaks.push(hi * (-(j as f64) / p as f64).exp2());
        }
    } else {
        let count = ((p as f64) * (hi / lo).log2()).ceil().max(1.0) as usize;
        let ratio = hi / lo;
        for j in 0..=count {
            breaks.push(lo * ratio.powf(j as f64 / count as f64));
        }
    }
    *breaks.last_mut().unwrap() = hi;
    breaks.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Splits the panel containing `b` (if any) at `b`.
pub fn split_panels_at(panels: &mut Vec<(f64, f64)>, b: f64) {
    if let Some(i) = panels.iter().position(|&(a, c)| a < b && b < c) {
        let (a, c) = panels[i];
        let rel = (b - a).min(c - b) / (c - a);
        if rel > 1e-6 {
            panels[i] = (a, b);
            panels.insert(i + 1, (b, c));
        }
    }
}

/// Subdivides panels wider than `max_width` into equal pieces.
pub fn cap_panel_width(panels: &mut Vec<(f64, f64)>, max_width: f64) {
    let mut out = Vec::with_capacity(panels.len());
    for &(a, b) in panels.iter() {
        let m = ((b - a) / max_width).ceil().max(1.0) as usize;
        let h = (b - a) / m as f64;
        out.extend((0..m).map(|j| (a + j as f64 * h, if j + 1 == m { b } else { a + (j + 1) as f64 * h })));
    }
    *panels = out;
}

/// Integral of `g` over a shell, Gauss-Legendre in radius (panels graded
/// toward the inner boundary) composed with the sphere rule.
pub fn integrate_polar(
    g: impl Fn(&Point) -> f64,
    shell: &RadialShell,
    rule: &SphereRule,
    radial_nodes: usize,
) -> Result<f64> {
    shell.center.ensure_dim(rule.dim())?;
    if radial_nodes < 4 {
        return Err(Error::InvalidArgument(format!(
            "radial_nodes {radial_nodes} below minimum 4"
        )));
    }
    let n = rule.dim() as i32;
    let gl = gauss_legendre(radial_nodes);
    let mut panels = radial_panels(shell.inner, shell.outer, 1, 30);
    cap_panel_width(&mut panels, (shell.outer - shell.inner) / 8.0);
    let mut total = 0.0;
    for (a, b) in panels {
        for (r, wr) in gl.mapped(a, b) {
            let jac = wr * r.powi(n - 1);
            for (xi, w) in rule.nodes.iter().zip(&rule.weights) {
                let y = shell.center.along(xi, r);
                let v = g(&y);
                if !v.is_finite() {
                    return Err(Error::NonFiniteSample {
                        location: format!("{y:?}"),
                    });
                }
                total += jac * w * v;
            }
        }
    }
    Ok(total)
}

/// Singular (or non-smooth) point of an integrand behaving like
/// |y - point|^exponent nearby.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pole {
    pub point: Point,
    pub exponent: f64,
}

/// Octaves of grading needed to push the innermost-panel contribution of
/// r^{n-1+exponent} below ~1e-12; non-integrable poles use the budget depth.
pub fn pole_grading_depth(n: usize, exponent: f64, budget: &QuadratureBudget) -> usize {
    let order = n as f64 + exponent;
    if order > 0.0 {
        ((40.0 / order).ceil() as usize).clamp(4, 4 * budget.grading_depth)
    } else {
        budget.grading_depth
    }
}

/// Chord of the ray `o + t xi`, t >= 0, through `ball`.
fn ray_chord(o: &Point, xi: &Point, ball: &Ball) -> Option<(f64, f64)> {
    let oc = *o - ball.center;
    let b = oc.dot(xi);
    let c = oc.dot(&oc) - ball.radius * ball.radius;
    let disc = b * b - c;
    if disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let (t1, t2) = (-b - s, -b + s);
    (t2 > 0.0).then_some((t1.max(0.0), t2))
}

/// Visits quadrature nodes (point, weight) for the region `domain ∩ clip`.
///
/// Rays are cast from the pole when one is given, otherwise from the domain
/// center; directions cover the full sphere when the origin of the rays lies
/// in the region and a substituted cone otherwise.
pub fn visit_region(
    domain: &Ball,
    clip: Option<&Ball>,
    pole: Option<&Pole>,
    budget: &QuadratureBudget,
    mut visit: impl FnMut(&Point, f64),
) {
    if let Some(s) = clip {
        if !domain.intersects(s) {
            return;
        }
    }
    let n = domain.dim();
    let o = pole.map(|p| p.point).unwrap_or(domain.center);
    let in_domain = domain.center.dist(&o) < domain.radius;
    let in_clip = clip.is_none_or(|s| s.center.dist(&o) < s.radius);
    let full;
    let cone;
    let (nodes, weights): (&[Point], &[f64]) = if in_domain && in_clip {
        full = cached_sphere_rule(n, budget.sphere_resolution).expect("validated budget");
        (&full.nodes, &full.weights)
    } else {
        let target = match clip {
            Some(s) if !in_clip && (in_domain || s.radius / s.center.dist(&o) < domain.radius / domain.center.dist(&o)) => s,
            _ => domain,
        };
        cone = cone_rule(&o, target, budget.sphere_resolution);
        (&cone.nodes, &cone.weights)
    };
    let gl = gauss_legendre(budget.radial_nodes);
    let depth = pole.map(|p| pole_grading_depth(n, p.exponent, budget));
    let mut panels = Vec::new();
    for (xi, wxi) in nodes.iter().zip(weights) {
        let Some((mut lo, mut hi)) = ray_chord(&o, xi, domain) else {
            continue;
        };
        if let Some(s) = clip {
            let Some((l2, h2)) = ray_chord(&o, xi, s) else {
                continue;
            };
            lo = lo.max(l2);
            hi = hi.min(h2);
        }
        if hi <= lo {
            continue;
        }
        panels.clear();
        match depth {
            Some(k) if lo <= 0.0 => panels.extend(radial_panels(0.0, hi, 1, k)),
            Some(k) => {
                let mut p = radial_panels(lo, hi, 1, k);
                p.truncate(k.max(1));
                if let Some(last) = p.last_mut() {
                    last.1 = hi;
                }
                panels.extend(p);
            }
            None => {
                let m = budget.ball_panels;
                let h = (hi - lo) / m as f64;
                panels.extend((0..m).map(|j| (lo + j as f64 * h, lo + (j + 1) as f64 * h)));
            }
        }
        for &(a, b) in &panels {
            for (r, wr) in gl.mapped(a, b) {
                visit(&o.along(xi, r), wxi * wr * r.powi(n as i32 - 1));
            }
        }
    }
}

/// Integral of `g` over `domain ∩ clip`.
pub fn integrate_region(
    domain: &Ball,
    clip: Option<&Ball>,
    pole: Option<&Pole>,
    budget: &QuadratureBudget,
    mut g: impl FnMut(&Point) -> f64,
) -> f64 {
    let mut total = 0.0;
    visit_region(domain, clip, pole, budget, |p, w| total += w * g(p));
    total
}
