//! Maximum-likelihood estimation of exponential intensities from quote
//! exposures.
//!
//! Observations are piecewise-constant quoting intervals: at offset `δ_i`
//! the maker quoted for `τ_i` seconds and received `n_i` fills. Under
//! `Λ(δ) = A e^{-kδ}` the fill counts are Poisson with mean `Λ(δ_i) τ_i`,
//! giving the log-likelihood (up to a data-only constant)
//!
//! ```text
//! ℓ(A, k) = Σ_i  n_i (log A - k δ_i) - A e^{-k δ_i} τ_i
//! ```
//!
//! For fixed `k` the rate has the closed-form maximizer
//! `A*(k) = Σ n_i / Σ e^{-k δ_i} τ_i`, so the fit reduces to a 1-D search
//! over `k`, done by bracket expansion and golden-section refinement.

use std::io::BufRead;

use crate::error::{CoreError, Result};

/// One quoting interval: offset, exposure seconds, observed fills.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuoteExposure {
    pub delta: f64,
    pub duration: f64,
    pub fills: u64,
}

/// A fitted exponential intensity.
#[derive(Clone, Copy, Debug)]
pub struct IntensityFit {
    pub a: f64,
    pub k: f64,
    /// Log-likelihood at the optimum, up to the `Σ log n_i!` constant.
    pub log_likelihood: f64,
}

/// Profile log-likelihood at `k` with the rate concentrated out.
fn profile_loglik(observations: &[QuoteExposure], k: f64) -> f64 {
    let a = profile_rate(observations, k);
    log_likelihood(observations, a, k)
}

fn profile_rate(observations: &[QuoteExposure], k: f64) -> f64 {
    let total_fills: f64 = observations.iter().map(|o| o.fills as f64).sum();
    let exposure: f64 = observations.iter().map(|o| (-k * o.delta).exp() * o.duration).sum();
    total_fills / exposure
}

/// `Σ n_i (log A - k δ_i) - A e^{-kδ_i} τ_i`.
pub fn log_likelihood(observations: &[QuoteExposure], a: f64, k: f64) -> f64 {
    observations
        .iter()
        .map(|o| {
            o.fills as f64 * (a.ln() - k * o.delta) - a * (-k * o.delta).exp() * o.duration
        })
        .sum()
}

const GOLDEN_TOL_REL: f64 = 1e-10;

/// Fits `(A, k)` by profile maximum likelihood.
///
/// Needs at least two distinct offsets and one fill overall, otherwise the
/// decay is unidentifiable.
pub fn fit_exponential_intensity(observations: &[QuoteExposure]) -> Result<IntensityFit> {
    for (i, o) in observations.iter().enumerate() {
        if !(o.duration > 0.0) || !o.delta.is_finite() {
            return Err(CoreError::Config {
                what: format!("observation {i} needs a positive duration and finite offset"),
            });
        }
    }
    let total_fills: u64 = observations.iter().map(|o| o.fills).sum();
    if total_fills == 0 {
        return Err(CoreError::Identifiability { what: "no fills observed".into() });
    }
    // normalize the summation order so the fit is exactly invariant to how
    // the observations were listed
    let mut observations: Vec<QuoteExposure> = observations.to_vec();
    observations.sort_by(|x, y| {
        x.delta
            .partial_cmp(&y.delta)
            .unwrap()
            .then(x.duration.partial_cmp(&y.duration).unwrap())
            .then(x.fills.cmp(&y.fills))
    });
    let observations = &observations[..];
    let mut deltas: Vec<f64> = observations.iter().map(|o| o.delta).collect();
    deltas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    deltas.dedup();
    if deltas.len() < 2 {
        return Err(CoreError::Identifiability {
            what: "all exposures share one offset; the decay rate is unidentified".into(),
        });
    }

    // bracket the profile maximum by geometric expansion around 1/mean(δ)
    let mean_delta: f64 =
        observations.iter().map(|o| o.delta).sum::<f64>() / observations.len() as f64;
    let k0 = if mean_delta.abs() > 1e-300 { 1.0 / mean_delta.abs() } else { 1.0 };
    let factor = 2.0f64;
    let mut ks = vec![k0];
    for i in 1..=40 {
        ks.push(k0 * factor.powi(i));
        ks.push(k0 / factor.powi(i));
    }
    ks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (mut best_i, mut best_val) = (0, f64::NEG_INFINITY);
    for (i, &k) in ks.iter().enumerate() {
        let v = profile_loglik(observations, k);
        if v > best_val {
            best_val = v;
            best_i = i;
        }
    }
    let lo = if best_i == 0 { ks[0] / factor } else { ks[best_i - 1] };
    let hi = if best_i + 1 == ks.len() { ks[best_i] * factor } else { ks[best_i + 1] };

    // golden-section: the profiled likelihood is unimodal in k for
    // exponential intensities
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = profile_loglik(observations, x1);
    let mut f2 = profile_loglik(observations, x2);
    for _ in 0..400 {
        if b - a <= GOLDEN_TOL_REL * a.abs().max(b.abs()) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = profile_loglik(observations, x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = profile_loglik(observations, x1);
        }
    }
    let k = 0.5 * (a + b);
    let rate = profile_rate(observations, k);
    Ok(IntensityFit { a: rate, k, log_likelihood: log_likelihood(observations, rate, k) })
}

/// Reads observations from CSV with header `delta,duration,fills`.
pub fn read_exposures_csv<R: BufRead>(reader: R) -> Result<Vec<QuoteExposure>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 {
            if trimmed != "delta,duration,fills" {
                return Err(CoreError::Parse {
                    line: 1,
                    what: format!("expected header 'delta,duration,fills', got '{trimmed}'"),
                });
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 {
            return Err(CoreError::Parse { line: idx + 1, what: "expected 3 fields".into() });
        }
        let parse_f = |s: &str, what: &str| {
            s.trim().parse::<f64>().map_err(|_| CoreError::Parse {
                line: idx + 1,
                what: format!("bad {what}: '{s}'"),
            })
        };
        out.push(QuoteExposure {
            delta: parse_f(fields[0], "delta")?,
            duration: parse_f(fields[1], "duration")?,
            fills: fields[2].trim().parse::<u64>().map_err(|_| CoreError::Parse {
                line: idx + 1,
                what: format!("bad fills: '{}'", fields[2]),
            })?,
        });
    }
    Ok(out)
}
