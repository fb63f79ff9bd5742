//! Asymptotic closed-form quote approximations.
//!
//! Far from the horizon the inventory finite differences of `θ` become
//! affine in `q` with slope `c = √(γσ²/(2H''_ξ(0)))`, which yields
//! time-independent approximate quotes
//!
//! ```text
//! δ^b(q) ≈ δ̃*_ξ( (2q+Δ)/2 · c )       δ^a(q) ≈ δ̃*_ξ( -(2q-Δ)/2 · c )
//! ```
//!
//! independent of the terminal penalty. For exponential intensities the
//! maximizer is an explicit shift, giving fully closed forms with a
//! `q`-independent spread and a skew linear in `q`.
//!
//! In the multi-asset case the couplings enter through
//! `Γ = D^{-1/2}(D^{1/2}ΣD^{1/2})^{1/2}D^{-1/2}` with
//! `D = diag(H^{i''}_ξ(0))`; the bid argument of asset `i` becomes
//! `√(γ/2)(Γ^{ii}(2qⁱ+Δⁱ)/2 + Σ_{j≠i} Γ^{ij} qʲ)`. The symmetric square
//! root is computed by a cyclic Jacobi eigendecomposition.

use crate::error::{CoreError, Result};
use crate::hamiltonian::HamiltonianContext;

/// Jacobi sweep tolerance on the off-diagonal Frobenius norm, relative to
/// the matrix norm.
const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;
/// Relative step for comparative-statics central differences.
const STATICS_STEP_REL: f64 = 1e-6;

/// The spectral-limit coefficient `c = √(γσ²/(2H''_ξ(0)))` and the
/// derivation intermediates `α = -½ H''(0)/(ΔH'(0)) γσ²`, `η = -ΔH'(0)`.
#[derive(Clone, Copy, Debug)]
pub struct ApproxCoefficient {
    pub c: f64,
    pub alpha: f64,
    pub eta: f64,
}

impl ApproxCoefficient {
    pub fn new(ctx: &HamiltonianContext, sigma: f64, gamma: f64) -> Result<Self> {
        let h2 = ctx.hamiltonian_second_at_zero()?;
        let (_, hp0) = ctx.hamiltonian(0.0)?;
        let gs2 = gamma * sigma * sigma;
        Ok(ApproxCoefficient {
            c: (gs2 / (2.0 * h2)).sqrt(),
            alpha: -0.5 * h2 / (ctx.delta_qty() * hp0) * gs2,
            eta: -ctx.delta_qty() * hp0,
        })
    }
}

/// Asymptotic approximate quotes for one asset; valid for any admissible
/// intensity with `H''_ξ(0) > 0`, independent of `t` and of the terminal
/// penalty.
pub fn approx_quotes_single(
    ctx: &HamiltonianContext,
    sigma: f64,
    gamma: f64,
    q: f64,
) -> Result<(f64, f64)> {
    let c = ApproxCoefficient::new(ctx, sigma, gamma)?.c;
    let dq = ctx.delta_qty();
    let bid = ctx.delta_star((2.0 * q + dq) / 2.0 * c)?;
    let ask = ctx.delta_star(-(2.0 * q - dq) / 2.0 * c)?;
    Ok((bid, ask))
}

/// Fully closed-form quotes for `Λ(δ) = A e^{-kδ}`.
#[derive(Clone, Copy, Debug)]
pub struct GlftQuotes {
    pub bid: f64,
    pub ask: f64,
    /// `bid + ask`; independent of `q` for exponential intensities.
    pub spread: f64,
    /// `bid - ask`; linear in `q` for exponential intensities.
    pub skew: f64,
}

/// Explicit exponential-intensity formulas for both objectives.
pub fn glft_exponential(
    a: f64,
    k: f64,
    delta_qty: f64,
    gamma: f64,
    xi: f64,
    sigma: f64,
    q: f64,
) -> Result<GlftQuotes> {
    if !(a > 0.0 && k > 0.0 && delta_qty > 0.0 && gamma > 0.0 && xi >= 0.0 && sigma >= 0.0) {
        return Err(CoreError::Config {
            what: "glft parameters must satisfy A, k, Delta, gamma > 0, xi, sigma >= 0".into(),
        });
    }
    let (base, coeff) = if xi > 0.0 {
        let r = xi * delta_qty / k;
        (
            (1.0 + r).ln() / (xi * delta_qty),
            (gamma * sigma * sigma / (2.0 * a * delta_qty * k) * (1.0 + r).powf(k / (xi * delta_qty) + 1.0))
                .sqrt(),
        )
    } else {
        (
            1.0 / k,
            (gamma * sigma * sigma * std::f64::consts::E / (2.0 * a * delta_qty * k)).sqrt(),
        )
    };
    let bid = base + (2.0 * q + delta_qty) / 2.0 * coeff;
    let ask = base - (2.0 * q - delta_qty) / 2.0 * coeff;
    Ok(GlftQuotes { bid, ask, spread: 2.0 * base + delta_qty * coeff, skew: 2.0 * q * coeff })
}

/// Central-difference sensitivities of the approximate quotes.
#[derive(Clone, Copy, Debug)]
pub struct ComparativeStatics {
    pub dbid_dsigma: f64,
    pub dask_dsigma: f64,
    pub dbid_dq: f64,
    pub dask_dq: f64,
}

/// Sensitivities of `(δ^b, δ^a)` to volatility and inventory at `q`.
///
/// The signs follow a three-case pattern in σ: both quotes widen at `q = 0`,
/// a long book (`q ≥ Δ`) lowers both prices (bid offset up, ask offset
/// down), a short book mirrors it. In `q` the bid offset always rises and
/// the ask offset always falls.
pub fn comparative_statics(
    ctx: &HamiltonianContext,
    sigma: f64,
    gamma: f64,
    q: f64,
) -> Result<ComparativeStatics> {
    let hs = STATICS_STEP_REL * sigma.max(1e-12);
    let (b_up, a_up) = approx_quotes_single(ctx, sigma + hs, gamma, q)?;
    let (b_dn, a_dn) = approx_quotes_single(ctx, sigma - hs, gamma, q)?;
    let hq = STATICS_STEP_REL * q.abs().max(ctx.delta_qty());
    let (b_qup, a_qup) = approx_quotes_single(ctx, sigma, gamma, q + hq)?;
    let (b_qdn, a_qdn) = approx_quotes_single(ctx, sigma, gamma, q - hq)?;
    Ok(ComparativeStatics {
        dbid_dsigma: (b_up - b_dn) / (2.0 * hs),
        dask_dsigma: (a_up - a_dn) / (2.0 * hs),
        dbid_dq: (b_qup - b_qdn) / (2.0 * hq),
        dask_dq: (a_qup - a_qdn) / (2.0 * hq),
    })
}

/// Symmetric square root of a symmetric PSD matrix via cyclic Jacobi
/// rotations: `V diag(√λ) Vᵀ`.
pub fn symmetric_sqrt(m: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = m.len();
    if m.iter().any(|row| row.len() != d) {
        return Err(CoreError::Contract { what: "matrix is not square".into() });
    }
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
        .max(1e-300);
    for i in 0..d {
        for j in 0..i {
            if (m[i][j] - m[j][i]).abs() > 1e-12 * scale {
                return Err(CoreError::Contract {
                    what: format!("matrix is not symmetric at ({i}, {j})"),
                });
            }
        }
    }
    let (eigvals, eigvecs) = jacobi_eigen(m)?;
    let mut clamped = Vec::with_capacity(d);
    let lambda_max = eigvals.iter().fold(0.0f64, |a, &v| a.max(v));
    for &l in &eigvals {
        if l < -1e-12 * lambda_max.max(1.0) {
            return Err(CoreError::Contract {
                what: format!("matrix has a negative eigenvalue {l}"),
            });
        }
        clamped.push(l.max(0.0).sqrt());
    }
    // V diag(√λ) Vᵀ
    let mut out = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = 0.0;
            for t in 0..d {
                s += eigvecs[i][t] * clamped[t] * eigvecs[j][t];
            }
            out[i][j] = s;
            out[j][i] = s;
        }
    }
    Ok(out)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns the
/// eigenvalues and the matrix whose columns are the eigenvectors.
fn jacobi_eigen(m: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let d = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut v = vec![vec![0.0; d]; d];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let norm: f64 = m.iter().flat_map(|r| r.iter()).map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..i {
                    s += 2.0 * a[i][j] * a[i][j];
                }
            }
            s.sqrt()
        };
        if off <= JACOBI_TOL * norm {
            let eig = (0..d).map(|i| a[i][i]).collect();
            return Ok((eig, v));
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if a[p][q] == 0.0 {
                    continue;
                }
                // rotation angle zeroing a[p][q]
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..d {
                    let (aip, aiq) = (a[i][p], a[i][q]);
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for j in 0..d {
                    let (apj, aqj) = (a[p][j], a[q][j]);
                    a[p][j] = c * apj - s * aqj;
                    a[q][j] = s * apj + c * aqj;
                }
                for i in 0..d {
                    let (vip, viq) = (v[i][p], v[i][q]);
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }
    Err(CoreError::Contract { what: "Jacobi sweeps did not converge".into() })
}

/// The inventory-coupling matrix of the multi-asset approximations.
#[derive(Clone, Debug)]
pub struct GammaMatrix {
    /// `Γ`, symmetric positive definite.
    pub matrix: Vec<Vec<f64>>,
    /// `D` diagonal: per-asset `H''_ξ(0)`.
    pub curvatures: Vec<f64>,
}

/// `Γ = D^{-1/2} (D^{1/2} Σ D^{1/2})^{1/2} D^{-1/2}` with
/// `D = diag(H^{i''}_ξ(0))`.
pub fn gamma_matrix(
    covariance: &[Vec<f64>],
    contexts: &[HamiltonianContext],
) -> Result<GammaMatrix> {
    let d = contexts.len();
    if covariance.len() != d || covariance.iter().any(|r| r.len() != d) {
        return Err(CoreError::Contract {
            what: format!("covariance must be {d}x{d} to match the contexts"),
        });
    }
    let mut curv = Vec::with_capacity(d);
    for ctx in contexts {
        curv.push(ctx.hamiltonian_second_at_zero()?);
    }
    let half: Vec<f64> = curv.iter().map(|&x| x.sqrt()).collect();
    let mut inner = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            inner[i][j] = half[i] * covariance[i][j] * half[j];
        }
    }
    let root = symmetric_sqrt(&inner)?;
    let mut gamma_mat = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            gamma_mat[i][j] = root[i][j] / (half[i] * half[j]);
        }
    }
    Ok(GammaMatrix { matrix: gamma_mat, curvatures: curv })
}

/// Multi-asset approximate quotes for asset `i` at inventory vector `q`.
pub fn approx_quotes_multi(
    gm: &GammaMatrix,
    contexts: &[HamiltonianContext],
    gamma: f64,
    q: &[f64],
    asset: usize,
) -> Result<(f64, f64)> {
    let d = gm.matrix.len();
    if q.len() != d || contexts.len() != d || asset >= d {
        return Err(CoreError::Contract {
            what: format!("dimension mismatch: d = {d}, |q| = {}, asset = {asset}", q.len()),
        });
    }
    let dq = contexts[asset].delta_qty();
    let mut cross = 0.0;
    for j in 0..d {
        if j != asset {
            cross += gm.matrix[asset][j] * q[j];
        }
    }
    let root = (gamma / 2.0).sqrt();
    let gii = gm.matrix[asset][asset];
    let bid_arg = root * (gii * (2.0 * q[asset] + dq) / 2.0 + cross);
    let ask_arg = -root * (gii * (2.0 * q[asset] - dq) / 2.0 + cross);
    Ok((contexts[asset].delta_star(bid_arg)?, contexts[asset].delta_star(ask_arg)?))
}
