//! Weighted Lebesgue and Morrey norms.
//!
//! Smooth fields are integrated by quadrature over their support. Fields
//! known only through samples on a uniform grid (operator outputs) use
//! midpoint sums, with ball masses computed by the same sums so that the
//! discrete Hölder inequality, and with it the Lebesgue-into-Morrey
//! embedding, holds exactly.

use serde::{Deserialize, Serialize};

use crate::corpus::Field;
use crate::error::{Error, Result};
use crate::geometry::{Ball, Point};
use crate::quadrature::QuadratureBudget;
use crate::weights::{FamilySpec, Weight};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Lebesgue,
    Morrey,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEvaluation {
    pub value: f64,
    pub kind: SpaceKind,
    pub p: f64,
    /// Second Morrey exponent; `None` for Lebesgue norms.
    pub q: Option<f64>,
    pub weight: String,
    /// Balls examined (zero for Lebesgue norms).
    pub balls: usize,
    /// Ball attaining a Morrey maximum.
    pub best_ball: Option<Ball>,
}

impl NormEvaluation {
    fn lebesgue(value: f64, p: f64, weight: &Weight) -> Self {
        Self {
            value,
            kind: SpaceKind::Lebesgue,
            p,
            q: None,
            weight: weight.label().to_string(),
            balls: 0,
            best_ball: None,
        }
    }
}

fn check_exponents(p: f64, q: Option<f64>) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("norm exponent p={p} must be >= 1")));
    }
    if let Some(q) = q {
        if !(q >= p && q.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Morrey exponents need p <= q, got p={p}, q={q}"
            )));
        }
    }
    Ok(())
}

/// (∫ |f|^p ω)^{1/p} over the support of f, intersected with `domain`.
pub fn weighted_lp_norm(
    f: &dyn Field,
    p: f64,
    weight: &Weight,
    domain: Option<&Ball>,
    budget: &QuadratureBudget,
) -> Result<f64> {
    check_exponents(p, None)?;
    let (region, clip) = match (f.support(), domain) {
        (Some(s), Some(d)) => (s, Some(*d)),
        (Some(s), None) => (s, None),
        (None, Some(d)) => (*d, None),
        (None, None) => return Err(Error::UnknownSupport(f.label())),
    };
    let integral = weight.integrate(&region, clip.as_ref(), budget, |y| f.value(y).abs().powf(p));
    Ok(integral.powf(1.0 / p))
}

/// max over `balls` of (ω(B)^{-(1 - p/q)} ∫_B |f|^p ω)^{1/p}. For p = q the
/// weighted Lebesgue norm is returned directly.
pub fn weighted_morrey_norm(
    f: &dyn Field,
    p: f64,
    q: f64,
    weight: &Weight,
    balls: &[Ball],
    budget: &QuadratureBudget,
) -> Result<NormEvaluation> {
    check_exponents(p, Some(q))?;
    if balls.is_empty() {
        return Err(Error::InvalidArgument("Morrey norm needs a nonempty ball family".into()));
    }
    if p == q {
        let v = weighted_lp_norm(f, p, weight, None, budget)?;
        return Ok(NormEvaluation {
            kind: SpaceKind::Morrey,
            q: Some(q),
            ..NormEvaluation::lebesgue(v, p, weight)
        });
    }
    let supp = f.support();
    let mut best = (0.0f64, None);
    for ball in balls {
        if supp.as_ref().is_some_and(|s| !ball.intersects(s)) {
            continue;
        }
        let local = weight.integrate(ball, supp.as_ref(), budget, |y| f.value(y).abs().powf(p));
        let mass = weight.ball_mass(ball, budget)?;
        let term = (mass.powf(p / q - 1.0) * local).powf(1.0 / p);
        if term > best.0 {
            best = (term, Some(*ball));
        }
    }
    Ok(NormEvaluation {
        value: best.0,
        kind: SpaceKind::Morrey,
        p,
        q: Some(q),
        weight: weight.label().to_string(),
        balls: balls.len(),
        best_ball: best.1,
    })
}

/// The default Morrey family around a support ball: 5 centers per axis over
/// the ball's bounding box, radii from R/8 to 4R at two per octave.
pub fn morrey_family_spec(support: &Ball) -> FamilySpec {
    FamilySpec {
        center: support.center.coords().to_vec(),
        half_width: support.radius,
        centers_per_axis: 5,
        include_center: true,
        radius_scale: support.radius,
        k_min: -6,
        k_max: 4,
        radii_per_octave: 2,
    }
}

/// Values of a field at the cell midpoints of a uniform grid on a cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledField {
    pub dim: usize,
    /// Lower corner of the cube.
    pub corner: Point,
    pub spacing: f64,
    pub per_axis: usize,
    pub values: Vec<f64>,
}

impl SampledField {
    /// Midpoints of the `per_axis^n` cells of `center ± half_width`, in
    /// lexicographic order with the first coordinate fastest.
    pub fn grid(center: &Point, half_width: f64, per_axis: usize) -> Result<Vec<Point>> {
        if per_axis == 0 || !(half_width > 0.0) {
            return Err(Error::InvalidArgument("empty sampling grid".into()));
        }
        let n = center.dim();
        let h = 2.0 * half_width / per_axis as f64;
        let total = per_axis.pow(n as u32);
        Ok((0..total)
            .map(|idx| {
                let mut c = [0.0; 3];
                let mut r = idx;
                for (i, slot) in c.iter_mut().enumerate().take(n) {
                    *slot = center.coords()[i] - half_width + h * ((r % per_axis) as f64 + 0.5);
                    r /= per_axis;
                }
                Point::raw(c, n)
            })
            .collect())
    }

    pub fn new(center: &Point, half_width: f64, per_axis: usize, values: Vec<f64>) -> Result<Self> {
        let n = center.dim();
        if values.len() != per_axis.pow(n as u32) {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                per_axis.pow(n as u32),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample {
                location: "sampled field".into(),
            });
        }
        let corner = center.along(&Point::raw([1.0; 3], n), -half_width);
        Ok(Self {
            dim: n,
            corner,
            spacing: 2.0 * half_width / per_axis as f64,
            per_axis,
            values,
        })
    }

    /// Samples `f` on the midpoint grid of `center ± half_width`.
    pub fn sample(
        f: &dyn Field,
        center: &Point,
        half_width: f64,
        per_axis: usize,
    ) -> Result<Self> {
        let values = Self::grid(center, half_width, per_axis)?
            .iter()
            .map(|p| f.value(p))
            .collect();
        Self::new(center, half_width, per_axis, values)
    }

    pub fn points(&self) -> Vec<Point> {
        let half = 0.5 * self.spacing * self.per_axis as f64;
        let center = self.corner.along(&Point::raw([1.0; 3], self.dim), half);
        Self::grid(&center, half, self.per_axis).expect("grid was valid at construction")
    }

    fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// (Σ |v|^p ω h^n)^{1/p}.
    pub fn lp_norm(&self, p: f64, weight: &Weight) -> Result<f64> {
        check_exponents(p, None)?;
        let h = self.cell_volume();
        let s: f64 = self
            .points()
            .iter()
            .zip(&self.values)
            .map(|(x, v)| v.abs().powf(p) * weight.evaluate(x) * h)
            .sum();
        Ok(s.powf(1.0 / p))
    }

    /// Discrete Morrey norm over `balls`, with ω(B) the midpoint sum of ω over
    /// the cells whose centers lie in B. Delegates to `lp_norm` when p = q.
    pub fn morrey_norm(&self, p: f64, q: f64, weight: &Weight, balls: &[Ball]) -> Result<f64> {
        check_exponents(p, Some(q))?;
        if p == q {
            return self.lp_norm(p, weight);
        }
        let h = self.cell_volume();
        let pts = self.points();
        let om: Vec<f64> = pts.iter().map(|x| weight.evaluate(x) * h).collect();
        let mut best = 0.0f64;
        for ball in balls {
            let (mut mass, mut local) = (0.0, 0.0);
            for ((x, v), w) in pts.iter().zip(&self.values).zip(&om) {
                if ball.contains(x) {
                    mass += w;
                    local += v.abs().powf(p) * w;
                }
            }
            if mass > 0.0 {
                best = best.max((mass.powf(p / q - 1.0) * local).powf(1.0 / p));
            }
        }
        Ok(best)
    }

    /// The sample-wise power |v|^e.
    pub fn abs_pow(&self, e: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v.abs().powf(e)).collect(),
            ..self.clone()
        }
    }
}
