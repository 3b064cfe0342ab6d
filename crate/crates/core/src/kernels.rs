//! Rough kernels on the unit sphere and their integrability norms.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{check_dim, sphere_area, Point};
use crate::quadrature::SphereRule;

type DirectionFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// A real function on S^{n-1}, evaluated analytically at arbitrary directions.
#[derive(Clone)]
pub struct KernelOnSphere {
    dim: usize,
    label: String,
    eval: DirectionFn,
    offset: f64,
    declared_rho: Option<f64>,
}

impl fmt::Debug for KernelOnSphere {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelOnSphere")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("offset", &self.offset)
            .field("declared_rho", &self.declared_rho)
            .finish()
    }
}

impl KernelOnSphere {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        eval: impl Fn(&Point) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            label: label.into(),
            eval: Arc::new(eval),
            offset: 0.0,
            declared_rho: None,
        })
    }

    /// Records the integrability exponent the kernel is meant to exercise.
    pub fn with_declared_rho(mut self, rho: f64) -> Result<Self> {
        if !(rho > 1.0 && rho < self.dim as f64) {
            return Err(Error::InvalidArgument(format!(
                "declared rho must lie in (1, {}), got {rho}",
                self.dim
            )));
        }
        self.declared_rho = Some(rho);
        Ok(self)
    }

    /// Catalog lookup: `cosine`, `sign`, `harmonic:k`, `constant:c`.
    pub fn from_spec(spec: &str, n: usize) -> Result<Self> {
        check_dim(n)?;
        let mut parts = spec.trim().split(':');
        let name = parts.next().unwrap_or_default();
        let arg = parts.next();
        if parts.next().is_some() {
            return Err(Error::Catalog(format!("malformed kernel spec `{spec}`")));
        }
        let parse = |s: Option<&str>| -> Result<f64> {
            s.ok_or_else(|| Error::Catalog(format!("kernel spec `{spec}` needs a parameter")))?
                .parse::<f64>()
                .map_err(|e| Error::Catalog(format!("kernel spec `{spec}`: {e}")))
        };
        match name {
            "cosine" if arg.is_none() => Self::new(n, spec, |xi| xi.coords()[0]),
            "sign" if arg.is_none() => Self::new(n, spec, |xi| {
                let v = xi.coords()[0];
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }),
            "harmonic" => {
                let k = parse(arg)?;
                if k < 1.0 || k.fract() != 0.0 {
                    return Err(Error::Catalog(format!(
                        "harmonic degree must be a positive integer, got {k}"
                    )));
                }
                let k = k as usize;
                if n == 2 {
                    Self::new(n, spec, move |xi| {
                        let c = xi.coords();
                        (k as f64 * c[1].atan2(c[0])).cos()
                    })
                } else {
                    Self::new(n, spec, move |xi| legendre_p(k, xi.coords()[0]))
                }
            }
            "constant" => {
                let c = parse(arg)?;
                if !c.is_finite() {
                    return Err(Error::Catalog(format!("constant kernel value {c}")));
                }
                Self::new(n, spec, move |_| c)
            }
            _ => Err(Error::Catalog(format!("unknown kernel `{spec}`"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn declared_rho(&self) -> Option<f64> {
        self.declared_rho
    }

    #[inline]
    pub fn evaluate(&self, xi: &Point) -> f64 {
        (self.eval)(xi) - self.offset
    }

    fn samples(&self, rule: &SphereRule) -> Result<Vec<f64>> {
        if rule.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: rule.dim(),
            });
        }
        rule.nodes
            .iter()
            .map(|xi| {
                let v = self.evaluate(xi);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFiniteSample {
                        location: format!("kernel `{}` at {xi:?}", self.label),
                    })
                }
            })
            .collect()
    }

    /// Fails with `KernelNotMeanZero` unless the quadrature mean is below
    /// 1e-10 relative to the mean of |Omega|.
    pub fn ensure_mean_zero(&self, rule: &SphereRule) -> Result<()> {
        let mean = kernel_mean(self, rule)?;
        let l1 = lrho_norm(self, 1.0, rule)? / sphere_area(self.dim);
        if mean.abs() <= 1e-10 * l1.max(f64::MIN_POSITIVE) {
            Ok(())
        } else {
            Err(Error::KernelNotMeanZero {
                label: self.label.clone(),
                mean,
            })
        }
    }
}

/// Legendre polynomial P_k by the three-term recurrence.
fn legendre_p(k: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if k == 0 {
        return p0;
    }
    for j in 1..k {
        let jf = j as f64;
        let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Quadrature mean (1/sigma) sum_i w_i Omega(xi_i).
pub fn kernel_mean(kernel: &KernelOnSphere, rule: &SphereRule) -> Result<f64> {
    let s = kernel.samples(rule)?;
    let total: f64 = s.iter().zip(&rule.weights).map(|(v, w)| v * w).sum();
    Ok(total / rule.total_weight())
}

/// Omega minus its quadrature mean; the label gains a `~0` suffix.
pub fn project_mean_zero(kernel: &KernelOnSphere, rule: &SphereRule) -> Result<KernelOnSphere> {
    let mean = kernel_mean(kernel, rule)?;
    let mut out = kernel.clone();
    out.offset += mean;
    if !out.label.ends_with("~0") {
        out.label.push_str("~0");
    }
    Ok(out)
}

pub fn lrho_norm(kernel: &KernelOnSphere, rho: f64, rule: &SphereRule) -> Result<f64> {
    if !(rho >= 1.0 && rho.is_finite()) {
        return Err(Error::InvalidArgument(format!("L^rho norm needs rho >= 1, got {rho}")));
    }
    let s = kernel.samples(rule)?;
    let total: f64 = s
        .iter()
        .zip(&rule.weights)
        .map(|(v, w)| w * v.abs().powf(rho))
        .sum();
    Ok(total.powf(1.0 / rho))
}

/// Weak-type norm estimate and where its supremum was attained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakNorm {
    pub value: f64,
    pub argmax_lambda: f64,
    /// Set when every sample vanishes; `value` is then 0.
    pub zero_kernel: bool,
}

/// sup over a geometric lambda grid of lambda * sigma(|Omega| >= lambda)^{1/p}.
///
/// The level set is taken closed so that the supremum of the step-shaped
/// discrete distribution (a left limit) is attained on grid points that
/// coincide with sample values, including both grid endpoints.
pub fn lorentz_weak_norm(
    kernel: &KernelOnSphere,
    p: f64,
    rule: &SphereRule,
    lambda_grid_size: usize,
) -> Result<WeakNorm> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("weak norm needs p > 1, got {p}")));
    }
    if lambda_grid_size < 32 {
        return Err(Error::InvalidArgument(format!(
            "lambda grid of {lambda_grid_size} points is below the minimum 32"
        )));
    }
    let s = kernel.samples(rule)?;
    let mut pairs: Vec<(f64, f64)> = s
        .iter()
        .zip(&rule.weights)
        .map(|(v, w)| (v.abs(), *w))
        .filter(|(v, _)| *v > 0.0)
        .collect();
    if pairs.is_empty() {
        return Ok(WeakNorm {
            value: 0.0,
            argmax_lambda: 0.0,
            zero_kernel: true,
        });
    }
    // Sort descending so the distribution function is a running sum.
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let lo = pairs.last().unwrap().0;
    let hi = pairs[0].0;
    let mut best = WeakNorm {
        value: 0.0,
        argmax_lambda: hi,
        zero_kernel: false,
    };
    let mut idx = 0;
    let mut mass = 0.0;
    let m = lambda_grid_size - 1;
    // Walk lambda downward so the mass accumulates monotonically.
    for j in (0..=m).rev() {
        let lambda = if j == m {
            hi
        } else if j == 0 {
            lo
        } else {
            lo * (hi / lo).powf(j as f64 / m as f64)
        };
        while idx < pairs.len() && pairs[idx].0 >= lambda {
            mass += pairs[idx].1;
            idx += 1;
        }
        let v = lambda * mass.powf(1.0 / p);
        if v > best.value {
            best.value = v;
            best.argmax_lambda = lambda;
        }
    }
    Ok(best)
}

/// Constant C with ||Omega||_{L^rho} <= C ||Omega||_{L^{p,inf}} on S^{n-1},
/// rho < p: splitting the layer-cake integral at the optimal height gives
/// C = (p / (p - rho))^{1/rho} sigma^{1/rho - 1/p}.
pub fn lorentz_inclusion_constant(rho: f64, p: f64, n: usize) -> Result<f64> {
    check_dim(n)?;
    if !(rho >= 1.0 && rho < p) {
        return Err(Error::InvalidArgument(format!(
            "inclusion needs 1 <= rho < p, got rho={rho}, p={p}"
        )));
    }
    let sigma = sphere_area(n);
    Ok((p / (p - rho)).powf(1.0 / rho) * sigma.powf(1.0 / rho - 1.0 / p))
}

/// The catalog names accepted by [`KernelOnSphere::from_spec`], with a
/// representative parameter where one is required.
pub const CATALOG_EXAMPLES: &[&str] = &["cosine", "sign", "harmonic:2", "harmonic:3", "constant:1.5"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::sphere_rule;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn circle() -> SphereRule {
        sphere_rule(2, 256).unwrap()
    }

    #[test]
    fn mean_examples() {
        let rule = circle();
        let cos = KernelOnSphere::from_spec("cosine", 2).unwrap();
        assert!(kernel_mean(&cos, &rule).unwrap().abs() < 1e-12);
        let one = KernelOnSphere::from_spec("constant:1", 2).unwrap();
        assert_relative_eq!(kernel_mean(&one, &rule).unwrap(), 1.0, max_relative = 1e-14);
        let shifted = KernelOnSphere::new(2, "cos+0.3", |xi| xi.coords()[0] + 0.3).unwrap();
        assert!((kernel_mean(&shifted, &rule).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let rule = circle();
        let shifted = KernelOnSphere::new(2, "cos+0.3", |xi| xi.coords()[0] + 0.3).unwrap();
        let p = project_mean_zero(&shifted, &rule).unwrap();
        assert!(kernel_mean(&p, &rule).unwrap().abs() < 1e-12);
        for xi in &rule.nodes {
            assert!((p.evaluate(xi) - xi.coords()[0]).abs() < 1e-12);
        }
        let sign = KernelOnSphere::from_spec("sign", 2).unwrap();
        let ps = project_mean_zero(&sign, &rule).unwrap();
        assert!(kernel_mean(&ps, &rule).unwrap().abs() < 1e-14);
        for xi in &rule.nodes {
            assert!((ps.evaluate(xi) - sign.evaluate(xi)).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_kernel_is_rejected_until_projected() {
        let rule = circle();
        let c = KernelOnSphere::from_spec("constant:2", 2).unwrap();
        assert!(matches!(
            c.ensure_mean_zero(&rule),
            Err(Error::KernelNotMeanZero { .. })
        ));
        let p = project_mean_zero(&c, &rule).unwrap();
        p.ensure_mean_zero(&rule).unwrap();
    }

    #[test]
    fn lrho_examples() {
        let rule = circle();
        let cos = KernelOnSphere::from_spec("cosine", 2).unwrap();
        assert_relative_eq!(lrho_norm(&cos, 2.0, &rule).unwrap(), PI.sqrt(), max_relative = 1e-13);
        // |cos| has kinks, so the equispaced rule converges algebraically.
        assert_relative_eq!(lrho_norm(&cos, 1.0, &rule).unwrap(), 4.0, max_relative = 1e-4);
        let c = KernelOnSphere::from_spec("constant:-1.5", 2).unwrap();
        for rho in [1.0, 1.7, 3.0] {
            let want = 1.5 * (2.0 * PI).powf(1.0 / rho);
            assert_relative_eq!(lrho_norm(&c, rho, &rule).unwrap(), want, max_relative = 1e-13);
        }
        assert!(lrho_norm(&cos, 0.5, &rule).is_err());
    }

    #[test]
    fn weak_norm_examples() {
        let rule = circle();
        let c = KernelOnSphere::from_spec("constant:2", 2).unwrap();
        let w = lorentz_weak_norm(&c, 3.0, &rule, 256).unwrap();
        assert_relative_eq!(w.value, 2.0 * (2.0 * PI).powf(1.0 / 3.0), max_relative = 1e-13);

        let half = KernelOnSphere::new(2, "halves", |xi| xi.coords()[1].signum()).unwrap();
        let w = lorentz_weak_norm(&half, 2.0, &rule, 256).unwrap();
        assert_relative_eq!(w.value, (2.0 * PI).sqrt(), max_relative = 1e-13);

        let zero = KernelOnSphere::from_spec("constant:0", 2).unwrap();
        let z = lorentz_weak_norm(&zero, 2.0, &rule, 64).unwrap();
        assert!(z.zero_kernel && z.value == 0.0);
    }

    #[test]
    fn weak_norm_of_cosine_matches_scalar_maximization() {
        // Independent oracle: maximize lambda * sqrt(4 arccos(lambda)) by
        // golden-section search.
        let g = |l: f64| l * (4.0 * l.acos()).sqrt();
        let (mut a, mut b) = (1e-9, 1.0 - 1e-12);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if g(c) > g(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let exact = g(0.5 * (a + b));
        let rule = sphere_rule(2, 4096).unwrap();
        let cos = KernelOnSphere::from_spec("cosine", 2).unwrap();
        let w = lorentz_weak_norm(&cos, 2.0, &rule, 1024).unwrap();
        assert_relative_eq!(w.value, exact, max_relative = 2e-3);
    }

    #[test]
    fn harmonics_are_mean_zero_in_both_dimensions() {
        for n in [2, 3] {
            let rule = sphere_rule(n, 32).unwrap();
            for spec in ["cosine", "harmonic:2", "harmonic:5"] {
                let k = KernelOnSphere::from_spec(spec, n).unwrap();
                k.ensure_mean_zero(&rule).unwrap();
            }
        }
        assert!(KernelOnSphere::from_spec("harmonic:0", 2).is_err());
        assert!(KernelOnSphere::from_spec("wavelet", 2).is_err());
        assert!(KernelOnSphere::from_spec("cosine", 4).is_err());
    }

    #[test]
    fn declared_rho_window() {
        let k = KernelOnSphere::from_spec("cosine", 2).unwrap();
        assert!(k.clone().with_declared_rho(1.5).is_ok());
        assert!(k.with_declared_rho(2.0).is_err());
    }

    proptest! {
        #[test]
        fn normalized_power_means_increase(rho1 in 1.0f64..4.0, gap in 0.0f64..3.0, shift in -0.5f64..0.5) {
            let rule = sphere_rule(2, 128).unwrap();
            let k = KernelOnSphere::new(2, "p", move |xi| xi.coords()[0] + shift * xi.coords()[1].powi(2)).unwrap();
            let sigma = rule.total_weight();
            let m = |r: f64| lrho_norm(&k, r, &rule).unwrap() / sigma.powf(1.0 / r);
            prop_assert!(m(rho1) <= m(rho1 + gap) * (1.0 + 1e-12));
        }

        #[test]
        fn projection_is_idempotent(a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let rule = sphere_rule(2, 64).unwrap();
            let k = KernelOnSphere::new(2, "k", move |xi| a + b * xi.coords()[0].powi(3)).unwrap();
            let p1 = project_mean_zero(&k, &rule).unwrap();
            let p2 = project_mean_zero(&p1, &rule).unwrap();
            for xi in &rule.nodes {
                prop_assert!((p1.evaluate(xi) - p2.evaluate(xi)).abs() <= 1e-14);
            }
        }

        #[test]
        fn inclusion_holds_for_catalog(idx in 0usize..CATALOG_EXAMPLES.len(), rho in 1.0f64..1.95) {
            let rule = sphere_rule(2, 256).unwrap();
            let k = KernelOnSphere::from_spec(CATALOG_EXAMPLES[idx], 2).unwrap();
            let lhs = lrho_norm(&k, rho, &rule).unwrap();
            let weak = lorentz_weak_norm(&k, 2.0, &rule, 256).unwrap().value;
            let c = lorentz_inclusion_constant(rho, 2.0, 2).unwrap();
            prop_assert!(lhs <= c * weak * (1.0 + 1e-12));
        }
    }
}
