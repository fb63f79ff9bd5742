//! Single-asset quote optimization.
//!
//! The reduced value component `θ(t, q)` solves the backward tridiagonal
//! system
//!
//! ```text
//! 0 = -∂_t θ + ½γσ²q² - 1_{q<Q} H^b_ξ((θ(q)-θ(q+Δ))/Δ) - 1_{q>-Q} H^a_ξ((θ(q)-θ(q-Δ))/Δ)
//! θ(T, q) = -ℓ(|q|)
//! ```
//!
//! on the inventory grid `{-Q, -Q+Δ, …, Q}`. [`solve_theta`] marches it
//! backward with an implicit Euler step, solving the nonlinear system at
//! each step by a damped Newton iteration with the analytic tridiagonal
//! Jacobian. For exponential intensities the change of variable
//! `v = exp(kθ/Δ)` turns the system into a linear constant-coefficient ODE
//! system, which [`exponential_oracle`] integrates with classical RK4 at a
//! tenth of the requested step; it serves as an independent reference for
//! the nonlinear path.
//!
//! Optimal offsets are inventory finite differences of `θ` mapped through
//! the Hamiltonian maximizer ([`quotes_from_theta`]); the value function is
//! recovered from `θ` by [`value_function`].

use std::io::Write;

use crate::error::{CoreError, Result};
use crate::hamiltonian::HamiltonianContext;
use crate::intensity::IntensityModel;

/// Newton tolerance on the implicit-step residual, in currency.
pub const TOL_NEWTON: f64 = 1e-12;
/// Maximum Newton iterations per implicit step.
pub const MAX_NEWTON_ITER: u32 = 50;

/// Terminal inventory penalty `ℓ(|q|)`, non-decreasing and convex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Penalty {
    Zero,
    /// `a · |q|`
    Linear(f64),
    /// `a · q²`
    Quadratic(f64),
}

impl Penalty {
    pub fn eval(&self, q: f64) -> f64 {
        match self {
            Penalty::Zero => 0.0,
            Penalty::Linear(a) => a * q.abs(),
            Penalty::Quadratic(a) => a * q * q,
        }
    }
}

/// A single-asset market making problem.
#[derive(Clone, Debug)]
pub struct SingleAssetProblem {
    /// Reference-price volatility, currency·s^(-1/2). May be zero.
    pub sigma: f64,
    /// Risk aversion γ > 0, per currency unit.
    pub gamma: f64,
    /// Non-execution risk aversion ξ ≥ 0. `ξ = γ` is the CARA objective,
    /// `ξ = 0` the running-penalty objective.
    pub xi: f64,
    /// Trade size Δ > 0, asset units.
    pub delta_qty: f64,
    /// Inventory bound Q, a positive multiple of Δ.
    pub inventory_bound: f64,
    /// Horizon T in seconds.
    pub horizon: f64,
    pub bid_intensity: IntensityModel,
    pub ask_intensity: IntensityModel,
    pub penalty: Penalty,
}

impl SingleAssetProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(CoreError::Config { what: format!("sigma must be >= 0, got {}", self.sigma) });
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(CoreError::Config { what: format!("gamma must be > 0, got {}", self.gamma) });
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(CoreError::Config { what: format!("xi must be >= 0, got {}", self.xi) });
        }
        if !(self.delta_qty > 0.0 && self.horizon > 0.0) {
            return Err(CoreError::Config { what: "delta_qty and horizon must be positive".into() });
        }
        let m = self.inventory_bound / self.delta_qty;
        if !(m > 0.5) || (m - m.round()).abs() > 1e-9 {
            return Err(CoreError::Config {
                what: format!("Q/Delta = {m} must be a positive integer"),
            });
        }
        Ok(())
    }

    /// Number of inventory steps from 0 to the bound (`Q/Δ`).
    pub fn bound_steps(&self) -> usize {
        (self.inventory_bound / self.delta_qty).round() as usize
    }

    /// The inventory grid `{-Q, …, -Δ, 0, Δ, …, Q}`.
    pub fn inventory_grid(&self) -> Vec<f64> {
        let m = self.bound_steps() as i64;
        (-m..=m).map(|j| j as f64 * self.delta_qty).collect()
    }

    pub fn bid_context(&self) -> Result<HamiltonianContext> {
        HamiltonianContext::new(self.bid_intensity.clone(), self.xi, self.delta_qty)
    }

    pub fn ask_context(&self) -> Result<HamiltonianContext> {
        HamiltonianContext::new(self.ask_intensity.clone(), self.xi, self.delta_qty)
    }
}

/// `θ(t, q)` sampled on a time × inventory grid.
#[derive(Clone, Debug)]
pub struct ThetaSurface {
    /// Ascending, last node equal to the problem horizon.
    pub time_grid: Vec<f64>,
    /// Ascending inventory nodes.
    pub inventory_grid: Vec<f64>,
    /// Time-major values: `values[ti * nq + qi]`.
    pub values: Vec<f64>,
    /// ξ the surface was solved with (drives which objective it serves).
    pub xi: f64,
    /// γ of the underlying problem.
    pub gamma: f64,
}

impl ThetaSurface {
    pub fn n_times(&self) -> usize {
        self.time_grid.len()
    }

    pub fn n_inventory(&self) -> usize {
        self.inventory_grid.len()
    }

    pub fn row(&self, ti: usize) -> &[f64] {
        let nq = self.n_inventory();
        &self.values[ti * nq..(ti + 1) * nq]
    }

    fn inventory_index(&self, q: f64) -> Result<usize> {
        let dq = self.inventory_grid[1] - self.inventory_grid[0];
        let pos = (q - self.inventory_grid[0]) / dq;
        let idx = pos.round();
        if (pos - idx).abs() > 1e-6 || idx < 0.0 || idx as usize >= self.n_inventory() {
            return Err(CoreError::Domain { what: format!("inventory {q} is not a grid node") });
        }
        Ok(idx as usize)
    }

    /// `θ(t, q)` with linear interpolation in `t`; `q` must be a grid node.
    pub fn theta_at(&self, t: f64, q: f64) -> Result<f64> {
        let qi = self.inventory_index(q)?;
        let (t0, t1) = (self.time_grid[0], *self.time_grid.last().unwrap());
        if t < t0 - 1e-9 || t > t1 + 1e-9 {
            return Err(CoreError::Domain { what: format!("time {t} outside [{t0}, {t1}]") });
        }
        let t = t.clamp(t0, t1);
        // time grid is uniform except possibly the first interval
        let ti = match self.time_grid.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => return Ok(self.row(i)[qi]),
            Err(i) => i.clamp(1, self.n_times() - 1),
        };
        let (ta, tb) = (self.time_grid[ti - 1], self.time_grid[ti]);
        let w = (t - ta) / (tb - ta);
        Ok((1.0 - w) * self.row(ti - 1)[qi] + w * self.row(ti)[qi])
    }

    /// CSV serialization: header `t,q,theta`, time-major rows, full double
    /// precision.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "t,q,theta")?;
        for (ti, t) in self.time_grid.iter().enumerate() {
            for (qi, q) in self.inventory_grid.iter().enumerate() {
                writeln!(out, "{:.16e},{:.16e},{:.16e}", t, q, self.row(ti)[qi])?;
            }
        }
        Ok(())
    }
}

/// Backward time grid for a march of step `dt`: ascending times ending at
/// `horizon`, uniform with spacing `dt` except that the earliest interval
/// may be shorter when `dt` does not divide the horizon.
fn time_grid(horizon: f64, dt: f64) -> Vec<f64> {
    let full = (horizon / dt - 1e-9).floor().max(0.0) as usize;
    let mut grid = Vec::with_capacity(full + 2);
    let lead = horizon - full as f64 * dt;
    if lead > 1e-12 * horizon.max(1.0) {
        grid.push(0.0);
    }
    for j in (0..=full).rev() {
        grid.push(horizon - j as f64 * dt);
    }
    grid
}

/// Solves the θ system by backward implicit Euler with Newton iterations.
pub fn solve_theta(problem: &SingleAssetProblem, dt: f64) -> Result<ThetaSurface> {
    problem.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CoreError::Config { what: format!("dt must be positive, got {dt}") });
    }
    let bid = problem.bid_context()?;
    let ask = problem.ask_context()?;
    let qs = problem.inventory_grid();
    let nq = qs.len();
    let dq = problem.delta_qty;
    let penalty: Vec<f64> = qs.iter().map(|&q| 0.5 * problem.gamma * problem.sigma * problem.sigma * q * q).collect();

    let times = time_grid(problem.horizon, dt);
    let nt = times.len();
    let mut values = vec![0.0; nt * nq];

    // terminal condition, exact
    for (qi, &q) in qs.iter().enumerate() {
        values[(nt - 1) * nq + qi] = -problem.penalty.eval(q);
    }

    let mut prev: Vec<f64> = values[(nt - 1) * nq..].to_vec();
    let mut x = prev.clone();
    let mut hb = vec![0.0; nq];
    let mut ha = vec![0.0; nq];
    let mut hbp = vec![0.0; nq];
    let mut hap = vec![0.0; nq];
    let mut residual = vec![0.0; nq];
    let mut step_dir = vec![0.0; nq];

    for ti in (0..nt - 1).rev() {
        let h = times[ti + 1] - times[ti];
        x.copy_from_slice(&prev);
        newton_step_single(
            &bid, &ask, &qs, dq, &penalty, h, times[ti], &prev, &mut x, &mut hb, &mut ha,
            &mut hbp, &mut hap, &mut residual, &mut step_dir,
        )?;
        values[ti * nq..(ti + 1) * nq].copy_from_slice(&x);
        prev.copy_from_slice(&x);
    }

    Ok(ThetaSurface {
        time_grid: times,
        inventory_grid: qs,
        values,
        xi: problem.xi,
        gamma: problem.gamma,
    })
}

/// Residual of one implicit step:
/// `F(x) = x - prev + dt (½γσ²q² - 1_b H^b - 1_a H^a)`.
#[allow(clippy::too_many_arguments)]
fn residual_single(
    bid: &HamiltonianContext,
    ask: &HamiltonianContext,
    dq: f64,
    penalty: &[f64],
    dt: f64,
    prev: &[f64],
    x: &[f64],
    hb: &mut [f64],
    ha: &mut [f64],
    hbp: &mut [f64],
    hap: &mut [f64],
    out: &mut [f64],
) -> Result<f64> {
    let nq = x.len();
    let mut max_abs = 0.0f64;
    for i in 0..nq {
        (hb[i], hbp[i]) = if i + 1 < nq {
            bid.hamiltonian((x[i] - x[i + 1]) / dq)?
        } else {
            (0.0, 0.0)
        };
        (ha[i], hap[i]) = if i > 0 {
            ask.hamiltonian((x[i] - x[i - 1]) / dq)?
        } else {
            (0.0, 0.0)
        };
        out[i] = x[i] - prev[i] + dt * (penalty[i] - hb[i] - ha[i]);
        max_abs = max_abs.max(out[i].abs());
    }
    Ok(max_abs)
}

/// One damped-Newton solve of the implicit step. On entry `x` holds the
/// initial guess (the previous time level); on exit the converged values.
#[allow(clippy::too_many_arguments)]
fn newton_step_single(
    bid: &HamiltonianContext,
    ask: &HamiltonianContext,
    qs: &[f64],
    dq: f64,
    penalty: &[f64],
    dt: f64,
    t: f64,
    prev: &[f64],
    x: &mut [f64],
    hb: &mut [f64],
    ha: &mut [f64],
    hbp: &mut [f64],
    hap: &mut [f64],
    residual: &mut [f64],
    step_dir: &mut [f64],
) -> Result<()> {
    let nq = qs.len();
    let mut res = residual_single(bid, ask, dq, penalty, dt, prev, x, hb, ha, hbp, hap, residual)?;
    // Below this level the residual is dominated by rounding of x - prev at
    // the magnitude of θ itself; iterating further cannot improve it.
    let scale: f64 = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let stall_floor = 64.0 * f64::EPSILON * scale;

    let mut best = res;
    let mut no_progress = 0u32;
    let mut converged = false;
    for _iter in 0..MAX_NEWTON_ITER {
        if res <= TOL_NEWTON && converged {
            return Ok(());
        }
        if res <= TOL_NEWTON {
            // one polishing step below tolerance lands the iterate at the
            // floating-point floor, where independent linear solvers agree
            converged = true;
        }
        // tridiagonal Jacobian: diag 1 - dt (H^b' + H^a')/Δ, off +dt H'/Δ
        let mut lower = vec![0.0; nq];
        let mut diag = vec![0.0; nq];
        let mut upper = vec![0.0; nq];
        for i in 0..nq {
            let mut d = 1.0;
            if i + 1 < nq {
                d -= dt * hbp[i] / dq;
                upper[i] = dt * hbp[i] / dq;
            }
            if i > 0 {
                d -= dt * hap[i] / dq;
                lower[i] = dt * hap[i] / dq;
            }
            diag[i] = d;
        }
        solve_tridiagonal(&lower, &diag, &upper, residual, step_dir);

        // damped update: halve the step while the residual increases
        let mut lambda = 1.0;
        let x_old: Vec<f64> = x.to_vec();
        let mut accepted = false;
        for _ in 0..30 {
            for i in 0..nq {
                x[i] = x_old[i] - lambda * step_dir[i];
            }
            let new_res =
                residual_single(bid, ask, dq, penalty, dt, prev, x, hb, ha, hbp, hap, residual)?;
            if new_res < res {
                res = new_res;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            // at the floor already; restore the best iterate
            x.copy_from_slice(&x_old);
            res = residual_single(bid, ask, dq, penalty, dt, prev, x, hb, ha, hbp, hap, residual)?;
            if converged || res <= stall_floor {
                return Ok(());
            }
        }
        if res < best * 0.9 {
            best = res;
            no_progress = 0;
        } else {
            no_progress += 1;
            // converged to the floating-point floor of this step
            if no_progress >= 2 && res <= stall_floor {
                return Ok(());
            }
            if no_progress >= 4 {
                break;
            }
        }
    }
    if res <= stall_floor.max(TOL_NEWTON) {
        return Ok(());
    }
    Err(CoreError::NewtonConvergence { t, residual: res, iterations: MAX_NEWTON_ITER })
}

/// Thomas algorithm. The Jacobian is strictly diagonally dominant
/// (diagonal ≥ 1, off-diagonal entries are nonpositive with row sums 1),
/// so no pivoting is needed.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64], out: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / m;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    out[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = d[i] - c[i] * out[i + 1];
    }
}

/// Exact reference for exponential intensities via the linear system
/// satisfied by `v = exp(kθ/Δ)`, integrated backward with classical RK4 at
/// `dt/10`. Bid and ask rates `A` may differ; the decay `k` must match.
pub fn exponential_oracle(problem: &SingleAssetProblem, dt: f64) -> Result<ThetaSurface> {
    problem.validate()?;
    let (a_bid, k_bid) = match problem.bid_intensity {
        IntensityModel::Exponential { a, k } => (a, k),
        _ => {
            return Err(CoreError::UnsupportedModel {
                reason: "bid intensity is not exponential".into(),
            })
        }
    };
    let (a_ask, k_ask) = match problem.ask_intensity {
        IntensityModel::Exponential { a, k } => (a, k),
        _ => {
            return Err(CoreError::UnsupportedModel {
                reason: "ask intensity is not exponential".into(),
            })
        }
    };
    if k_bid != k_ask {
        return Err(CoreError::UnsupportedModel {
            reason: format!(
                "the v-transform requires one decay rate, got k_bid = {k_bid}, k_ask = {k_ask}"
            ),
        });
    }
    let k = k_bid;
    let dq = problem.delta_qty;
    let c_xi = if problem.xi == 0.0 {
        (-1.0f64).exp()
    } else {
        let r = problem.xi * dq / k;
        (1.0 + r).powf(-1.0 / r - 1.0)
    };

    let qs = problem.inventory_grid();
    let nq = qs.len();
    // dv/ds = -(k γ σ² q²/(2Δ)) v_q + C_ξ (A_b v_{q+Δ} 1_{q<Q} + A_a v_{q-Δ} 1_{q>-Q})
    let decay: Vec<f64> =
        qs.iter().map(|&q| k * problem.gamma * problem.sigma * problem.sigma * q * q / (2.0 * dq)).collect();
    let rhs = |v: &[f64], out: &mut [f64]| {
        for i in 0..nq {
            let up = if i + 1 < nq { a_bid * v[i + 1] } else { 0.0 };
            let down = if i > 0 { a_ask * v[i - 1] } else { 0.0 };
            out[i] = -decay[i] * v[i] + c_xi * (up + down);
        }
    };

    let times = time_grid(problem.horizon, dt);
    let nt = times.len();
    let mut values = vec![0.0; nt * nq];
    let mut v: Vec<f64> = qs.iter().map(|&q| (-(k / dq) * problem.penalty.eval(q)).exp()).collect();
    for (qi, &q) in qs.iter().enumerate() {
        values[(nt - 1) * nq + qi] = -problem.penalty.eval(q);
    }

    let mut k1 = vec![0.0; nq];
    let mut k2 = vec![0.0; nq];
    let mut k3 = vec![0.0; nq];
    let mut k4 = vec![0.0; nq];
    let mut tmp = vec![0.0; nq];
    for ti in (0..nt - 1).rev() {
        let span = times[ti + 1] - times[ti];
        let h = span / 10.0;
        for _ in 0..10 {
            rhs(&v, &mut k1);
            for i in 0..nq {
                tmp[i] = v[i] + 0.5 * h * k1[i];
            }
            rhs(&tmp, &mut k2);
            for i in 0..nq {
                tmp[i] = v[i] + 0.5 * h * k2[i];
            }
            rhs(&tmp, &mut k3);
            for i in 0..nq {
                tmp[i] = v[i] + h * k3[i];
            }
            rhs(&tmp, &mut k4);
            for i in 0..nq {
                v[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        for i in 0..nq {
            values[ti * nq + i] = dq / k * v[i].ln();
        }
    }

    Ok(ThetaSurface {
        time_grid: times,
        inventory_grid: qs,
        values,
        xi: problem.xi,
        gamma: problem.gamma,
    })
}

/// Optimal bid/ask offsets read off the surface at `(t, q)`. The bid is
/// absent at `q = Q` and the ask at `q = -Q`.
pub fn quotes_from_theta(
    surface: &ThetaSurface,
    ctx_bid: &HamiltonianContext,
    ctx_ask: &HamiltonianContext,
    t: f64,
    q: f64,
) -> Result<(Option<f64>, Option<f64>)> {
    let qi = surface.inventory_index(q)?;
    let nq = surface.n_inventory();
    let dq = ctx_bid.delta_qty();
    let theta_q = surface.theta_at(t, q)?;
    let bid = if qi + 1 < nq {
        let theta_up = surface.theta_at(t, surface.inventory_grid[qi + 1])?;
        Some(ctx_bid.delta_star((theta_q - theta_up) / dq)?)
    } else {
        None
    };
    let ask = if qi > 0 {
        let theta_down = surface.theta_at(t, surface.inventory_grid[qi - 1])?;
        Some(ctx_ask.delta_star((theta_q - theta_down) / dq)?)
    } else {
        None
    };
    Ok((bid, ask))
}

/// Which objective a surface serves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// CARA utility of terminal wealth; requires `ξ = γ`.
    CaraUtility,
    /// Expected wealth with a running inventory penalty; requires `ξ = 0`.
    InventoryPenalty,
}

/// Value function reconstructed from the surface through the ansatz:
/// `-exp(-γ(x + qS + θ))` for the CARA objective, `x + qS + θ` for the
/// running-penalty objective.
pub fn value_function(
    surface: &ThetaSurface,
    objective: Objective,
    t: f64,
    x: f64,
    q: f64,
    s: f64,
) -> Result<f64> {
    match objective {
        Objective::CaraUtility => {
            if surface.xi != surface.gamma {
                return Err(CoreError::Contract {
                    what: format!(
                        "CARA value needs a surface solved with xi = gamma, got xi = {}, gamma = {}",
                        surface.xi, surface.gamma
                    ),
                });
            }
            let theta = surface.theta_at(t, q)?;
            Ok(-(-surface.gamma * (x + q * s + theta)).exp())
        }
        Objective::InventoryPenalty => {
            if surface.xi != 0.0 {
                return Err(CoreError::Contract {
                    what: format!("running-penalty value needs a surface solved with xi = 0, got xi = {}", surface.xi),
                });
            }
            let theta = surface.theta_at(t, q)?;
            Ok(x + q * s + theta)
        }
    }
}
