//! The Hamiltonian transforms of an intensity curve.
//!
//! For a marginal inventory cost `p`, the side value of quoting optimally is
//!
//! ```text
//! H_ξ(p) = sup_δ  Λ(δ)/ξ · (1 - exp(-ξΔ(δ - p)))     (ξ > 0)
//! H_0(p) = sup_δ  Δ Λ(δ) (δ - p)                      (ξ = 0)
//! ```
//!
//! Both suprema are attained at a unique offset `δ̃*_ξ(p)`, characterized by
//! a strictly increasing first-order condition, so the maximizer can be
//! found by safe bracketing for any admissible curve. For exponential
//! curves everything collapses to closed form:
//!
//! ```text
//! H_ξ(p)   = (AΔ/k) C_ξ e^{-kp},   C_ξ = (1 + ξΔ/k)^{-k/(ξΔ) - 1}, C_0 = 1/e
//! δ̃*_ξ(p) = p + log(1 + ξΔ/k)/(ξΔ)          (ξ > 0)
//! δ̃*_0(p) = p + 1/k
//! ```
//!
//! `ξ = 0` is handled as its own code path with the limit functions rather
//! than as a small-ξ limit of the generic branch.

use crate::error::{CoreError, Result};
use crate::intensity::IntensityModel;

/// Maximum number of bracket doublings before giving up on a custom curve.
const MAX_BRACKET_EXPANSIONS: u32 = 64;
/// Newton polishing steps applied after bisection.
const NEWTON_POLISH_STEPS: u32 = 10;
/// Relative step for the central second difference of `H'` at 0, in units
/// of the curve's natural offset scale `1/k`.
const FD_STEP_REL: f64 = 1e-4;

/// An intensity curve together with the risk parameters `(ξ, Δ)` needed to
/// evaluate its Hamiltonian transforms.
#[derive(Clone, Debug)]
pub struct HamiltonianContext {
    intensity: IntensityModel,
    xi: f64,
    delta_qty: f64,
}

impl HamiltonianContext {
    /// `xi >= 0` is the aversion to non-execution risk, `delta_qty > 0` the
    /// traded quantity per fill.
    pub fn new(intensity: IntensityModel, xi: f64, delta_qty: f64) -> Result<Self> {
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(CoreError::Config { what: format!("xi must be >= 0, got {xi}") });
        }
        if !(delta_qty > 0.0 && delta_qty.is_finite()) {
            return Err(CoreError::Config {
                what: format!("trade size must be > 0, got {delta_qty}"),
            });
        }
        Ok(HamiltonianContext { intensity, xi, delta_qty })
    }

    pub fn intensity(&self) -> &IntensityModel {
        &self.intensity
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn delta_qty(&self) -> f64 {
        self.delta_qty
    }

    /// `C_ξ` for an exponential curve of decay `k`.
    fn c_xi(&self, k: f64) -> f64 {
        if self.xi == 0.0 {
            (-1.0f64).exp()
        } else {
            let r = self.xi * self.delta_qty / k;
            (1.0 + r).powf(-1.0 / r - 1.0)
        }
    }

    /// The unique maximizer `δ̃*_ξ(p)` of the side value at marginal cost `p`.
    pub fn delta_star(&self, p: f64) -> Result<f64> {
        match &self.intensity {
            IntensityModel::Exponential { k, .. } => Ok(if self.xi == 0.0 {
                p + 1.0 / k
            } else {
                p + (1.0 + self.xi * self.delta_qty / k).ln() / (self.xi * self.delta_qty)
            }),
            IntensityModel::Custom { .. } => self.delta_star_custom(p),
        }
    }

    /// First-order condition `j(δ)` and its derivative for a custom curve.
    /// `j` is strictly increasing under the admissibility hypotheses, which
    /// is what makes plain bisection globally safe.
    fn foc(&self, delta: f64) -> Result<(f64, f64)> {
        let (l, lp, lpp) = self.intensity.eval(delta)?;
        let ratio = l * lpp / (lp * lp); // ΛΛ''/Λ'² < 2 for admissible curves
        if self.xi == 0.0 {
            Ok((delta + l / lp, 2.0 - ratio))
        } else {
            let xd = self.xi * self.delta_qty;
            let s = 1.0 - xd * l / lp; // > 1 since Λ' < 0
            let j = delta - s.ln() / xd;
            let jp = (2.0 - ratio - xd * l / lp) / s;
            Ok((j, jp))
        }
    }

    fn delta_star_custom(&self, p: f64) -> Result<f64> {
        // The maximizer lives in (p, ∞): j(p) < p always, so only the upper
        // end needs expanding.
        let mut lo = p;
        let mut width = 1.0 / self.intensity.decay_scale();
        let mut hi = p + width;
        let mut expansions = 0;
        loop {
            let (j_hi, _) = self.foc(hi)?;
            if j_hi >= p {
                break;
            }
            lo = hi;
            width *= 2.0;
            hi = p + width;
            expansions += 1;
            if expansions > MAX_BRACKET_EXPANSIONS {
                return Err(CoreError::Bracketing { p, expansions });
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break; // interval at floating-point resolution
            }
            let (j_mid, _) = self.foc(mid)?;
            if j_mid < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * (1.0 + mid.abs()) {
                break;
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..NEWTON_POLISH_STEPS {
            let (j, jp) = self.foc(x)?;
            if jp <= 0.0 {
                break;
            }
            let step = (j - p) / jp;
            let next = (x - step).clamp(lo, hi);
            if next == x {
                break;
            }
            x = next;
        }
        Ok(x)
    }

    /// `(H_ξ(p), H_ξ'(p))`.
    pub fn hamiltonian(&self, p: f64) -> Result<(f64, f64)> {
        match &self.intensity {
            IntensityModel::Exponential { a, k } => {
                let h = a * self.delta_qty / k * self.c_xi(*k) * (-k * p).exp();
                Ok((h, -k * h))
            }
            IntensityModel::Custom { .. } => {
                let ds = self.delta_star_custom(p)?;
                let l = self.intensity.value(ds)?;
                if self.xi == 0.0 {
                    let h = self.delta_qty * l * (ds - p);
                    Ok((h, -self.delta_qty * l))
                } else {
                    let e = (-self.xi * self.delta_qty * (ds - p)).exp();
                    let h = l / self.xi * (1.0 - e);
                    Ok((h, -l * self.delta_qty * e))
                }
            }
        }
    }

    /// The curvature `H_ξ''(0)`, the one constant of the curve that the
    /// asymptotic quote approximations need.
    ///
    /// Exponential curves give `AΔk C_ξ` exactly; custom curves use a
    /// central difference of `H'` at 0 and must come out positive.
    pub fn hamiltonian_second_at_zero(&self) -> Result<f64> {
        let value = match &self.intensity {
            IntensityModel::Exponential { a, k } => a * self.delta_qty * k * self.c_xi(*k),
            IntensityModel::Custom { .. } => {
                let h = FD_STEP_REL / self.intensity.decay_scale();
                let (_, hp_plus) = self.hamiltonian(h)?;
                let (_, hp_minus) = self.hamiltonian(-h)?;
                (hp_plus - hp_minus) / (2.0 * h)
            }
        };
        if value > 0.0 {
            Ok(value)
        } else {
            Err(CoreError::Curvature { value })
        }
    }
}
