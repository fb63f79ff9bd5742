//! Arrival-intensity curves `Λ(δ)` and their admissibility checks.
//!
//! An admissible intensity is positive, strictly decreasing, vanishes for
//! large offsets, and satisfies `sup_δ Λ(δ)Λ''(δ)/Λ'(δ)² < 2`. The last
//! condition makes the instantaneous-profit functions unimodal, which is
//! what the quote optimizers rely on. Exponential curves `A e^{-kδ}`
//! satisfy all four identically; user-supplied curves are checked on a
//! finite grid.

use std::fmt;
use std::sync::Arc;

use crate::error::{CoreError, Result};

/// Evaluation of `(Λ(δ), Λ'(δ), Λ''(δ))` for a user-supplied curve.
pub type CustomEval = Arc<dyn Fn(f64) -> (f64, f64, f64) + Send + Sync>;

/// An arrival-rate curve with first and second derivatives.
#[derive(Clone)]
pub enum IntensityModel {
    /// `Λ(δ) = A e^{-kδ}` with `A > 0` (rate) and `k > 0` (inverse price).
    Exponential { a: f64, k: f64 },
    /// A user-supplied curve. `decay_scale` plays the role of `k` when the
    /// code needs a characteristic inverse-price scale (bracket widths,
    /// finite-difference steps, default validation windows).
    Custom { eval: CustomEval, decay_scale: f64 },
}

impl fmt::Debug for IntensityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntensityModel::Exponential { a, k } => {
                write!(f, "Exponential {{ a: {a}, k: {k} }}")
            }
            IntensityModel::Custom { decay_scale, .. } => {
                write!(f, "Custom {{ decay_scale: {decay_scale} }}")
            }
        }
    }
}

impl IntensityModel {
    pub fn exponential(a: f64, k: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) || !(k > 0.0 && k.is_finite()) {
            return Err(CoreError::Config {
                what: format!("exponential intensity requires A > 0 and k > 0, got A = {a}, k = {k}"),
            });
        }
        Ok(IntensityModel::Exponential { a, k })
    }

    pub fn custom<F>(eval: F, decay_scale: f64) -> Result<Self>
    where
        F: Fn(f64) -> (f64, f64, f64) + Send + Sync + 'static,
    {
        if !(decay_scale > 0.0 && decay_scale.is_finite()) {
            return Err(CoreError::Config {
                what: format!("custom intensity requires a positive decay scale, got {decay_scale}"),
            });
        }
        Ok(IntensityModel::Custom { eval: Arc::new(eval), decay_scale })
    }

    /// `(Λ, Λ', Λ'')` at `δ`, with a finiteness check.
    pub fn eval(&self, delta: f64) -> Result<(f64, f64, f64)> {
        let out = match self {
            IntensityModel::Exponential { a, k } => {
                let v = a * (-k * delta).exp();
                (v, -k * v, k * k * v)
            }
            IntensityModel::Custom { eval, .. } => eval(delta),
        };
        if out.0.is_finite() && out.1.is_finite() && out.2.is_finite() {
            Ok(out)
        } else {
            Err(CoreError::Evaluation { delta })
        }
    }

    /// `Λ(δ)` alone.
    pub fn value(&self, delta: f64) -> Result<f64> {
        Ok(self.eval(delta)?.0)
    }

    /// Characteristic inverse-price scale (`k` for exponential curves).
    pub fn decay_scale(&self) -> f64 {
        match self {
            IntensityModel::Exponential { k, .. } => *k,
            IntensityModel::Custom { decay_scale, .. } => *decay_scale,
        }
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self, IntensityModel::Exponential { .. })
    }
}

/// Relative tail threshold: the curve must satisfy
/// `Λ(δ_max) < EPS_TAIL · Λ(0)`.
pub const EPS_TAIL: f64 = 1e-6;

/// Default number of grid points for hypothesis checks.
pub const DEFAULT_GRID_POINTS: usize = 10_001;

/// Offset window on which a custom curve is checked.
#[derive(Clone, Copy, Debug)]
pub struct DeltaGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl DeltaGrid {
    /// The default window `[-5/k, 20/k]` for a curve of decay scale `k`.
    pub fn default_for(decay_scale: f64) -> Self {
        DeltaGrid { lo: -5.0 / decay_scale, hi: 20.0 / decay_scale, points: DEFAULT_GRID_POINTS }
    }
}

/// Which hypothesis a grid point violated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hypothesis {
    /// `Λ(δ) > 0`
    Positive,
    /// `Λ'(δ) < 0`
    StrictlyDecreasing,
    /// `Λ(δ_max) < ε_tail · Λ(0)`
    VanishingTail,
    /// `Λ Λ'' / Λ'² < 2`
    CurvatureRatio,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Hypothesis::Positive => "positivity",
            Hypothesis::StrictlyDecreasing => "strict decrease",
            Hypothesis::VanishingTail => "vanishing tail",
            Hypothesis::CurvatureRatio => "curvature ratio < 2",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Violation {
    pub check: Hypothesis,
    pub delta: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the four admissibility hypotheses.
///
/// Exponential curves pass symbolically (each hypothesis holds for every
/// `δ`, so no grid is sampled). Custom curves are checked pointwise on
/// `grid`, which must cover at least `[-5/k, 20/k]` for the declared decay
/// scale `k` — the hypotheses are stated for all real offsets, and a
/// narrower window would silently miss the region where real quotes live.
pub fn validate_intensity(model: &IntensityModel, grid: DeltaGrid) -> Result<ValidationReport> {
    if let IntensityModel::Exponential { .. } = model {
        // Ae^{-kδ}: positive, derivative -kΛ < 0, vanishing tail, and
        // ΛΛ''/Λ'² = 1 < 2, all identically in δ.
        return Ok(ValidationReport::default());
    }

    let scale = model.decay_scale();
    if grid.lo > -5.0 / scale || grid.hi < 20.0 / scale {
        return Err(CoreError::Config {
            what: format!(
                "validation grid [{}, {}] does not cover [{}, {}] for decay scale {}",
                grid.lo,
                grid.hi,
                -5.0 / scale,
                20.0 / scale,
                scale
            ),
        });
    }
    if grid.points < 2 {
        return Err(CoreError::Config { what: "validation grid needs at least 2 points".into() });
    }

    let mut report = ValidationReport::default();
    let step = (grid.hi - grid.lo) / (grid.points - 1) as f64;
    for i in 0..grid.points {
        let d = grid.lo + step * i as f64;
        let (l, lp, lpp) = model.eval(d)?;
        if l <= 0.0 {
            report.violations.push(Violation { check: Hypothesis::Positive, delta: d, value: l });
            continue; // the remaining ratios are meaningless here
        }
        if lp >= 0.0 {
            report.violations.push(Violation {
                check: Hypothesis::StrictlyDecreasing,
                delta: d,
                value: lp,
            });
            continue;
        }
        let ratio = l * lpp / (lp * lp);
        if ratio >= 2.0 {
            report.violations.push(Violation {
                check: Hypothesis::CurvatureRatio,
                delta: d,
                value: ratio,
            });
        }
    }
    let at_zero = model.eval(0.0)?.0;
    let at_max = model.eval(grid.hi)?.0;
    if !(at_max < EPS_TAIL * at_zero) {
        report.violations.push(Violation {
            check: Hypothesis::VanishingTail,
            delta: grid.hi,
            value: at_max / at_zero,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_passes_symbolically() {
        let m = IntensityModel::exponential(1.0, 1.0).unwrap();
        let report = validate_intensity(&m, DeltaGrid::default_for(1.0)).unwrap();
        assert!(report.passed());
    }

    #[test]
    fn section6_style_exponential_passes() {
        let m = IntensityModel::exponential(9.10e-4, 1.79e4).unwrap();
        let report = validate_intensity(&m, DeltaGrid::default_for(1.79e4)).unwrap();
        assert!(report.passed());
    }

    #[test]
    fn tabulated_exponential_custom_passes_on_grid() {
        // The same section-6 curve presented as a custom evaluation.
        let (a, k) = (9.10e-4, 1.79e4);
        let m = IntensityModel::custom(
            move |d: f64| {
                let v = a * (-k * d).exp();
                (v, -k * v, k * k * v)
            },
            k,
        )
        .unwrap();
        let report = validate_intensity(&m, DeltaGrid::default_for(k)).unwrap();
        assert!(report.passed(), "violations: {:?}", report.violations);
    }

    #[test]
    fn lorentzian_fails_strict_decrease_on_negative_offsets() {
        // Λ(δ) = 1/(1+δ²) increases on δ < 0: Λ'(-1) = +0.5.
        let m = IntensityModel::custom(
            |d: f64| {
                let s = 1.0 + d * d;
                (1.0 / s, -2.0 * d / (s * s), (6.0 * d * d - 2.0) / (s * s * s))
            },
            1.0,
        )
        .unwrap();
        let report = validate_intensity(&m, DeltaGrid { lo: -5.0, hi: 20.0, points: 10_001 }).unwrap();
        assert!(!report.passed());
        assert!(report
            .violations
            .iter()
            .any(|v| v.check == Hypothesis::StrictlyDecreasing && v.delta < 0.0));
        // 1/(1+δ²) also has a fat tail relative to ε_tail
        assert!(report.violations.iter().any(|v| v.check == Hypothesis::VanishingTail));
    }

    #[test]
    fn non_finite_evaluation_is_reported_with_location() {
        let m = IntensityModel::custom(|d: f64| (1.0 / d, -1.0, 0.0), 1.0).unwrap();
        let err = validate_intensity(&m, DeltaGrid { lo: -5.0, hi: 20.0, points: 11 })
            .unwrap_err();
        match err {
            // first non-finite evaluation sits at δ = 0 where 1/δ blows up
            CoreError::Evaluation { delta } => assert_eq!(delta, 0.0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let m = IntensityModel::custom(|_| (1.0, -1.0, 0.0), 1.0).unwrap();
        let err = validate_intensity(&m, DeltaGrid { lo: 0.0, hi: 10.0, points: 11 }).unwrap_err();
        assert!(matches!(err, CoreError::Config { .. }));
    }
}
