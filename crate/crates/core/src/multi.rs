//! Multi-asset quote optimization on a tensor inventory grid.
//!
//! The d-asset θ system couples each grid node with its 2d axis neighbors:
//!
//! ```text
//! 0 = -∂_t θ + ½γ Σ_ij Σ^{ij} q^i q^j
//!     - Σ_i 1_{q^i<Q^i}  H^{i,b}_ξ((θ(q)-θ(q+Δ^i e^i))/Δ^i)
//!     - Σ_i 1_{q^i>-Q^i} H^{i,a}_ξ((θ(q)-θ(q-Δ^i e^i))/Δ^i)
//! ```
//!
//! with `θ(T, q) = -ℓ_d(q)`. The march is the same implicit Euler + Newton
//! used for one asset; the Newton linear systems are solved matrix-free by
//! diagonally preconditioned BiCGStab on the axis-neighbor stencil. Nodes
//! are ordered lexicographically over `(q¹, …, q^d)`, so the d = 1 case is
//! bit-comparable to the single-asset solver.
//!
//! Full tensor solves are intended for small d; the node count is capped
//! and larger books should use the Γ-matrix approximations instead.

use std::io::Write;

use crate::error::{CoreError, Result};
use crate::hamiltonian::HamiltonianContext;
use crate::intensity::IntensityModel;
use crate::single::{Penalty, SingleAssetProblem, MAX_NEWTON_ITER, TOL_NEWTON};

/// Default cap on the tensor grid size.
pub const DEFAULT_NODE_CAP: usize = 100_000;
/// Relative BiCGStab tolerance for the Newton linear solves.
const TOL_LINEAR: f64 = 1e-13;

/// Per-asset quoting data.
#[derive(Clone, Debug)]
pub struct AssetSpec {
    pub bid_intensity: IntensityModel,
    pub ask_intensity: IntensityModel,
    /// Trade size Δ^i, asset units.
    pub delta_qty: f64,
    /// Inventory bound Q^i, a positive multiple of Δ^i.
    pub inventory_bound: f64,
}

/// A d-asset market making problem.
#[derive(Clone, Debug)]
pub struct MultiAssetProblem {
    pub assets: Vec<AssetSpec>,
    /// Variance-covariance matrix Σ = (ρ^{ij} σ^i σ^j), symmetric positive
    /// definite.
    pub covariance: Vec<Vec<f64>>,
    pub gamma: f64,
    pub xi: f64,
    pub horizon: f64,
    /// Terminal penalty ℓ_d(q) = Σ a^{ij} q^i q^j; `None` means zero.
    pub penalty_matrix: Option<Vec<Vec<f64>>>,
}

impl MultiAssetProblem {
    pub fn dim(&self) -> usize {
        self.assets.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(CoreError::Config { what: "no assets".into() });
        }
        if !(self.gamma > 0.0) || !(self.xi >= 0.0) || !(self.horizon > 0.0) {
            return Err(CoreError::Config {
                what: "gamma > 0, xi >= 0 and horizon > 0 required".into(),
            });
        }
        check_square_symmetric(&self.covariance, d, "covariance")?;
        // positive semidefiniteness via an unpivoted Cholesky; degenerate
        // (zero-volatility) assets are allowed
        cholesky(&self.covariance).ok_or_else(|| CoreError::Config {
            what: "covariance matrix is not positive semidefinite".into(),
        })?;
        if let Some(a) = &self.penalty_matrix {
            check_square_symmetric(a, d, "penalty matrix")?;
            cholesky(a).ok_or_else(|| CoreError::Config {
                what: "penalty matrix is not positive semidefinite".into(),
            })?;
        }
        for (i, spec) in self.assets.iter().enumerate() {
            if !(spec.delta_qty > 0.0) {
                return Err(CoreError::Config { what: format!("asset {i}: trade size must be > 0") });
            }
            let m = spec.inventory_bound / spec.delta_qty;
            if !(m > 0.5) || (m - m.round()).abs() > 1e-9 {
                return Err(CoreError::Config {
                    what: format!("asset {i}: Q/Delta = {m} must be a positive integer"),
                });
            }
        }
        Ok(())
    }

    pub fn terminal_penalty(&self, q: &[f64]) -> f64 {
        match &self.penalty_matrix {
            None => 0.0,
            Some(a) => {
                let mut s = 0.0;
                for i in 0..q.len() {
                    for j in 0..q.len() {
                        s += a[i][j] * q[i] * q[j];
                    }
                }
                s
            }
        }
    }

    /// `½ γ qᵀΣq`, the running inventory risk rate.
    pub fn risk_rate(&self, q: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..q.len() {
            for j in 0..q.len() {
                s += self.covariance[i][j] * q[i] * q[j];
            }
        }
        0.5 * self.gamma * s
    }

    pub fn contexts(&self) -> Result<Vec<(HamiltonianContext, HamiltonianContext)>> {
        self.assets
            .iter()
            .map(|a| {
                Ok((
                    HamiltonianContext::new(a.bid_intensity.clone(), self.xi, a.delta_qty)?,
                    HamiltonianContext::new(a.ask_intensity.clone(), self.xi, a.delta_qty)?,
                ))
            })
            .collect()
    }
}

fn check_square_symmetric(m: &[Vec<f64>], d: usize, name: &str) -> Result<()> {
    if m.len() != d || m.iter().any(|row| row.len() != d) {
        return Err(CoreError::Config { what: format!("{name} must be {d}x{d}") });
    }
    for i in 0..d {
        for j in 0..i {
            let scale = m[i][i].abs().max(m[j][j].abs()).max(1e-300);
            if (m[i][j] - m[j][i]).abs() > 1e-10 * scale {
                return Err(CoreError::Config { what: format!("{name} is not symmetric") });
            }
        }
    }
    Ok(())
}

/// Unpivoted Cholesky, tolerant of semidefinite directions (zero pivots
/// with consistent zero columns). `None` when the matrix is indefinite.
pub(crate) fn cholesky(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let d = m.len();
    let scale = (0..d).map(|i| m[i][i].abs()).fold(0.0f64, f64::max).max(1e-300);
    let tol = 1e-12 * scale;
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s < -tol {
                    return None;
                }
                l[i][j] = if s > tol { s.sqrt() } else { 0.0 };
            } else if l[j][j] > 0.0 {
                l[i][j] = s / l[j][j];
            } else {
                // a zero pivot demands a zero column below it
                if s.abs() > 1e-8 * scale {
                    return None;
                }
                l[i][j] = 0.0;
            }
        }
    }
    Some(l)
}

/// θ on a time × tensor-inventory grid, nodes in lexicographic order.
#[derive(Clone, Debug)]
pub struct MultiThetaSurface {
    pub time_grid: Vec<f64>,
    /// Per-asset ascending inventory grids.
    pub axes: Vec<Vec<f64>>,
    /// Time-major: `values[ti * n_nodes + node]`.
    pub values: Vec<f64>,
    pub xi: f64,
    pub gamma: f64,
}

impl MultiThetaSurface {
    pub fn n_nodes(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    pub fn n_times(&self) -> usize {
        self.time_grid.len()
    }

    pub fn row(&self, ti: usize) -> &[f64] {
        let n = self.n_nodes();
        &self.values[ti * n..(ti + 1) * n]
    }

    /// Lexicographic node index of per-axis indices (first axis slowest).
    pub fn node_index(&self, idx: &[usize]) -> usize {
        let mut out = 0;
        for (axis, &i) in self.axes.iter().zip(idx) {
            out = out * axis.len() + i;
        }
        out
    }

    fn axis_index(&self, axis: usize, q: f64) -> Result<usize> {
        let grid = &self.axes[axis];
        let dq = grid[1] - grid[0];
        let pos = (q - grid[0]) / dq;
        let idx = pos.round();
        if (pos - idx).abs() > 1e-6 || idx < 0.0 || idx as usize >= grid.len() {
            return Err(CoreError::Domain {
                what: format!("inventory {q} is not a node of axis {axis}"),
            });
        }
        Ok(idx as usize)
    }

    pub fn indices_of(&self, q: &[f64]) -> Result<Vec<usize>> {
        if q.len() != self.axes.len() {
            return Err(CoreError::Domain {
                what: format!("inventory vector has length {}, expected {}", q.len(), self.axes.len()),
            });
        }
        q.iter().enumerate().map(|(i, &qi)| self.axis_index(i, qi)).collect()
    }

    pub fn theta_at(&self, t: f64, q: &[f64]) -> Result<f64> {
        let node = self.node_index(&self.indices_of(q)?);
        self.theta_at_node(t, node)
    }

    fn theta_at_node(&self, t: f64, node: usize) -> Result<f64> {
        let (t0, t1) = (self.time_grid[0], *self.time_grid.last().unwrap());
        if t < t0 - 1e-9 || t > t1 + 1e-9 {
            return Err(CoreError::Domain { what: format!("time {t} outside [{t0}, {t1}]") });
        }
        let t = t.clamp(t0, t1);
        let ti = match self.time_grid.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => return Ok(self.row(i)[node]),
            Err(i) => i.clamp(1, self.n_times() - 1),
        };
        let (ta, tb) = (self.time_grid[ti - 1], self.time_grid[ti]);
        let w = (t - ta) / (tb - ta);
        Ok((1.0 - w) * self.row(ti - 1)[node] + w * self.row(ti)[node])
    }

    /// CSV: header `t,q1,...,qd,theta`, lexicographic node order.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let d = self.axes.len();
        write!(out, "t")?;
        for i in 1..=d {
            write!(out, ",q{i}")?;
        }
        writeln!(out, ",theta")?;
        let n = self.n_nodes();
        let mut idx = vec![0usize; d];
        for (ti, t) in self.time_grid.iter().enumerate() {
            idx.iter_mut().for_each(|v| *v = 0);
            for node in 0..n {
                write!(out, "{t:.16e}")?;
                for (axis, &i) in self.axes.iter().zip(idx.iter()) {
                    write!(out, ",{:.16e}", axis[i])?;
                }
                writeln!(out, ",{:.16e}", self.row(ti)[node])?;
                // lexicographic increment, last axis fastest
                for a in (0..d).rev() {
                    idx[a] += 1;
                    if idx[a] < self.axes[a].len() {
                        break;
                    }
                    idx[a] = 0;
                }
            }
        }
        Ok(())
    }
}

struct Stencil {
    /// Per axis: (stride, grid length, Δ^i).
    axes: Vec<(usize, usize, f64)>,
    contexts: Vec<(HamiltonianContext, HamiltonianContext)>,
    /// ½γ qᵀΣq per node.
    penalty: Vec<f64>,
}

impl Stencil {
    /// Per-axis indices of a lexicographic node.
    fn unpack(&self, mut node: usize, out: &mut [usize]) {
        for (a, &(_, len, _)) in self.axes.iter().enumerate().rev() {
            out[a] = node % len;
            node /= len;
        }
    }
}

/// Evaluates the step residual and caches `H` and `H'` per (node, axis,
/// side) for the Jacobian products.
#[allow(clippy::too_many_arguments)]
fn residual_multi(
    st: &Stencil,
    dt: f64,
    prev: &[f64],
    x: &[f64],
    h_val: &mut [f64],
    h_prime: &mut [f64],
    out: &mut [f64],
) -> Result<f64> {
    let n = x.len();
    let d = st.axes.len();
    let mut idx = vec![0usize; d];
    let mut max_abs = 0.0f64;
    for node in 0..n {
        st.unpack(node, &mut idx);
        let mut acc = st.penalty[node];
        for (a, &(stride, len, dq)) in st.axes.iter().enumerate() {
            let slot = (node * d + a) * 2;
            if idx[a] + 1 < len {
                let p = (x[node] - x[node + stride]) / dq;
                let (h, hp) = st.contexts[a].0.hamiltonian(p)?;
                h_val[slot] = h;
                h_prime[slot] = hp;
                acc -= h;
            } else {
                h_val[slot] = 0.0;
                h_prime[slot] = 0.0;
            }
            if idx[a] > 0 {
                let p = (x[node] - x[node - stride]) / dq;
                let (h, hp) = st.contexts[a].1.hamiltonian(p)?;
                h_val[slot + 1] = h;
                h_prime[slot + 1] = hp;
                acc -= h;
            } else {
                h_val[slot + 1] = 0.0;
                h_prime[slot + 1] = 0.0;
            }
        }
        out[node] = x[node] - prev[node] + dt * acc;
        max_abs = max_abs.max(out[node].abs());
    }
    Ok(max_abs)
}

/// `J v` with the Jacobian implied by the cached `H'` values.
fn jacobian_apply(st: &Stencil, dt: f64, h_prime: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    let d = st.axes.len();
    let mut idx = vec![0usize; d];
    for node in 0..n {
        st.unpack(node, &mut idx);
        let mut acc = v[node];
        for (a, &(stride, len, dq)) in st.axes.iter().enumerate() {
            let slot = (node * d + a) * 2;
            if idx[a] + 1 < len {
                acc -= dt * h_prime[slot] / dq * (v[node] - v[node + stride]);
            }
            if idx[a] > 0 {
                acc -= dt * h_prime[slot + 1] / dq * (v[node] - v[node - stride]);
            }
        }
        out[node] = acc;
    }
}

fn jacobian_diagonal(st: &Stencil, dt: f64, h_prime: &[f64], out: &mut [f64]) {
    let n = out.len();
    let d = st.axes.len();
    let mut idx = vec![0usize; d];
    for node in 0..n {
        st.unpack(node, &mut idx);
        let mut acc = 1.0;
        for (a, &(_, len, dq)) in st.axes.iter().enumerate() {
            let slot = (node * d + a) * 2;
            if idx[a] + 1 < len {
                acc -= dt * h_prime[slot] / dq;
            }
            if idx[a] > 0 {
                acc -= dt * h_prime[slot + 1] / dq;
            }
        }
        out[node] = acc;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Diagonally preconditioned BiCGStab on the stencil Jacobian.
fn bicgstab(
    st: &Stencil,
    dt: f64,
    h_prime: &[f64],
    rhs: &[f64],
    x: &mut [f64],
) -> std::result::Result<(), f64> {
    let n = rhs.len();
    let mut diag = vec![0.0; n];
    jacobian_diagonal(st, dt, h_prime, &mut diag);

    x.iter_mut().for_each(|v| *v = 0.0);
    let mut r: Vec<f64> = rhs.to_vec();
    let r0 = r.clone();
    let b_norm = norm2(rhs);
    if b_norm == 0.0 {
        return Ok(());
    }
    let tol = TOL_LINEAR * b_norm;

    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];

    for _ in 0..400 {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        for i in 0..n {
            phat[i] = p[i] / diag[i];
        }
        jacobian_apply(st, dt, h_prime, &phat, &mut v);
        alpha = rho / dot(&r0, &v);
        let mut s = r.clone();
        for i in 0..n {
            s[i] -= alpha * v[i];
        }
        if norm2(&s) <= tol {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok(());
        }
        for i in 0..n {
            shat[i] = s[i] / diag[i];
        }
        jacobian_apply(st, dt, h_prime, &shat, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm2(&r) <= tol {
            return Ok(());
        }
        if omega == 0.0 {
            break;
        }
    }
    Err(norm2(&r) / b_norm)
}

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

/// Backward implicit-Euler solve of the multi-asset θ system.
pub fn solve_theta_multi(problem: &MultiAssetProblem, dt: f64) -> Result<MultiThetaSurface> {
    solve_theta_multi_capped(problem, dt, DEFAULT_NODE_CAP)
}

pub fn solve_theta_multi_capped(
    problem: &MultiAssetProblem,
    dt: f64,
    node_cap: usize,
) -> Result<MultiThetaSurface> {
    problem.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CoreError::Config { what: format!("dt must be positive, got {dt}") });
    }
    let d = problem.dim();
    let axes: Vec<Vec<f64>> = problem
        .assets
        .iter()
        .map(|a| {
            let m = (a.inventory_bound / a.delta_qty).round() as i64;
            (-m..=m).map(|j| j as f64 * a.delta_qty).collect()
        })
        .collect();
    let n: usize = axes.iter().map(|a| a.len()).product();
    if n > node_cap {
        return Err(CoreError::GridTooLarge { nodes: n, cap: node_cap });
    }

    // strides for lexicographic order, first axis slowest
    let mut strides = vec![1usize; d];
    for a in (0..d - 1).rev() {
        strides[a] = strides[a + 1] * axes[a + 1].len();
    }
    let st = Stencil {
        axes: (0..d).map(|a| (strides[a], axes[a].len(), problem.assets[a].delta_qty)).collect(),
        contexts: problem.contexts()?,
        penalty: {
            let mut pen = vec![0.0; n];
            let mut idx = vec![0usize; d];
            let mut q = vec![0.0; d];
            for (node, p) in pen.iter_mut().enumerate() {
                let mut rest = node;
                for a in (0..d).rev() {
                    idx[a] = rest % axes[a].len();
                    rest /= axes[a].len();
                }
                for a in 0..d {
                    q[a] = axes[a][idx[a]];
                }
                *p = problem.risk_rate(&q);
            }
            pen
        },
    };

    let times = time_grid(problem.horizon, dt);
    let nt = times.len();
    let mut values = vec![0.0; nt * n];
    {
        let mut idx = vec![0usize; d];
        let mut q = vec![0.0; d];
        for node in 0..n {
            let mut rest = node;
            for a in (0..d).rev() {
                idx[a] = rest % axes[a].len();
                rest /= axes[a].len();
            }
            for a in 0..d {
                q[a] = axes[a][idx[a]];
            }
            values[(nt - 1) * n + node] = -problem.terminal_penalty(&q);
        }
    }

    let mut prev: Vec<f64> = values[(nt - 1) * n..].to_vec();
    let mut x = prev.clone();
    let mut h_val = vec![0.0; n * d * 2];
    let mut h_prime = vec![0.0; n * d * 2];
    let mut residual = vec![0.0; n];
    let mut step_dir = vec![0.0; n];

    for ti in (0..nt - 1).rev() {
        let h = times[ti + 1] - times[ti];
        x.copy_from_slice(&prev);
        let mut res = residual_multi(&st, h, &prev, &x, &mut h_val, &mut h_prime, &mut residual)?;
        let scale: f64 = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let stall_floor = 64.0 * f64::EPSILON * scale;

        let mut best = res;
        let mut no_progress = 0u32;
        let mut converged = false;
        let mut done = false;
        for _iter in 0..MAX_NEWTON_ITER {
            if res <= TOL_NEWTON && converged {
                done = true;
                break;
            }
            if res <= TOL_NEWTON {
                converged = true;
            }
            if let Err(rel) = bicgstab(&st, h, &h_prime, &residual, &mut step_dir) {
                return Err(CoreError::NewtonConvergence {
                    t: times[ti],
                    residual: rel,
                    iterations: MAX_NEWTON_ITER,
                });
            }
            let x_old = x.clone();
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                for i in 0..n {
                    x[i] = x_old[i] - lambda * step_dir[i];
                }
                let new_res =
                    residual_multi(&st, h, &prev, &x, &mut h_val, &mut h_prime, &mut residual)?;
                if new_res < res {
                    res = new_res;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                x.copy_from_slice(&x_old);
                res = residual_multi(&st, h, &prev, &x, &mut h_val, &mut h_prime, &mut residual)?;
                if converged || res <= stall_floor {
                    done = true;
                    break;
                }
            }
            if res < best * 0.9 {
                best = res;
                no_progress = 0;
            } else {
                no_progress += 1;
                if no_progress >= 2 && res <= stall_floor {
                    done = true;
                    break;
                }
                if no_progress >= 4 {
                    break;
                }
            }
        }
        if !done && res > stall_floor.max(TOL_NEWTON) {
            return Err(CoreError::NewtonConvergence {
                t: times[ti],
                residual: res,
                iterations: MAX_NEWTON_ITER,
            });
        }
        values[ti * n..(ti + 1) * n].copy_from_slice(&x);
        prev.copy_from_slice(&x);
    }

    Ok(MultiThetaSurface { time_grid: times, axes, values, xi: problem.xi, gamma: problem.gamma })
}

/// Per-asset optimal offsets at `(t, q)`; the bid of asset `i` is absent at
/// `q^i = Q^i` and its ask at `q^i = -Q^i`.
pub fn quotes_from_theta_multi(
    surface: &MultiThetaSurface,
    contexts: &[(HamiltonianContext, HamiltonianContext)],
    t: f64,
    q: &[f64],
) -> Result<Vec<(Option<f64>, Option<f64>)>> {
    let idx = surface.indices_of(q)?;
    let node = surface.node_index(&idx);
    let d = surface.axes.len();
    if contexts.len() != d {
        return Err(CoreError::Contract {
            what: format!("got {} contexts for {} assets", contexts.len(), d),
        });
    }
    let mut strides = vec![1usize; d];
    for a in (0..d - 1).rev() {
        strides[a] = strides[a + 1] * surface.axes[a + 1].len();
    }
    let theta_q = surface.theta_at_node(t, node)?;
    let mut out = Vec::with_capacity(d);
    for a in 0..d {
        let dq = contexts[a].0.delta_qty();
        let bid = if idx[a] + 1 < surface.axes[a].len() {
            let up = surface.theta_at_node(t, node + strides[a])?;
            Some(contexts[a].0.delta_star((theta_q - up) / dq)?)
        } else {
            None
        };
        let ask = if idx[a] > 0 {
            let down = surface.theta_at_node(t, node - strides[a])?;
            Some(contexts[a].1.delta_star((theta_q - down) / dq)?)
        } else {
            None
        };
        out.push((bid, ask));
    }
    Ok(out)
}

/// View of a single-asset problem as a 1-asset multi problem.
pub fn from_single(p: &SingleAssetProblem) -> MultiAssetProblem {
    MultiAssetProblem {
        assets: vec![AssetSpec {
            bid_intensity: p.bid_intensity.clone(),
            ask_intensity: p.ask_intensity.clone(),
            delta_qty: p.delta_qty,
            inventory_bound: p.inventory_bound,
        }],
        covariance: vec![vec![p.sigma * p.sigma]],
        gamma: p.gamma,
        xi: p.xi,
        horizon: p.horizon,
        penalty_matrix: match p.penalty {
            Penalty::Zero => None,
            Penalty::Quadratic(a) => Some(vec![vec![a]]),
            Penalty::Linear(_) => None, // |q| is not a quadratic form
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::single::{solve_theta, Penalty, SingleAssetProblem};

    fn exp_model(a: f64, k: f64) -> IntensityModel {
        IntensityModel::exponential(a, k).unwrap()
    }

    fn single(sigma: f64, xi: f64) -> SingleAssetProblem {
        SingleAssetProblem {
            sigma,
            gamma: 0.5,
            xi,
            delta_qty: 1.0,
            inventory_bound: 3.0,
            horizon: 2.0,
            bid_intensity: exp_model(1.0, 1.0),
            ask_intensity: exp_model(1.0, 1.0),
            penalty: Penalty::Zero,
        }
    }

    fn two_asset(rho: f64, xi: f64) -> MultiAssetProblem {
        let (s1, s2) = (0.3, 0.45);
        MultiAssetProblem {
            assets: vec![
                AssetSpec {
                    bid_intensity: exp_model(1.0, 1.0),
                    ask_intensity: exp_model(1.0, 1.0),
                    delta_qty: 1.0,
                    inventory_bound: 2.0,
                },
                AssetSpec {
                    bid_intensity: exp_model(0.8, 1.4),
                    ask_intensity: exp_model(0.8, 1.4),
                    delta_qty: 0.5,
                    inventory_bound: 1.0,
                },
            ],
            covariance: vec![
                vec![s1 * s1, rho * s1 * s2],
                vec![rho * s1 * s2, s2 * s2],
            ],
            gamma: 0.5,
            xi,
            horizon: 2.0,
            penalty_matrix: None,
        }
    }

    #[test]
    fn one_asset_reduction_matches_single_solver() {
        for xi in [0.0, 0.5] {
            let sp = single(0.3, xi);
            let mp = from_single(&sp);
            let s1 = solve_theta(&sp, 0.01).unwrap();
            let s2 = solve_theta_multi(&mp, 0.01).unwrap();
            assert_eq!(s1.time_grid.len(), s2.time_grid.len());
            let mut worst = 0.0f64;
            for ti in 0..s1.n_times() {
                for (a, b) in s1.row(ti).iter().zip(s2.row(ti)) {
                    worst = worst.max((a - b).abs());
                }
            }
            assert!(worst < 1e-12, "xi={xi}: max |single - multi| = {worst:.3e}");
        }
    }

    #[test]
    fn zero_correlation_separates() {
        let mp = two_asset(0.0, 0.5);
        let ms = solve_theta_multi(&mp, 0.02).unwrap();
        let s1 = solve_theta(
            &SingleAssetProblem {
                sigma: 0.3,
                gamma: 0.5,
                xi: 0.5,
                delta_qty: 1.0,
                inventory_bound: 2.0,
                horizon: 2.0,
                bid_intensity: exp_model(1.0, 1.0),
                ask_intensity: exp_model(1.0, 1.0),
                penalty: Penalty::Zero,
            },
            0.02,
        )
        .unwrap();
        let s2 = solve_theta(
            &SingleAssetProblem {
                sigma: 0.45,
                gamma: 0.5,
                xi: 0.5,
                delta_qty: 0.5,
                inventory_bound: 1.0,
                horizon: 2.0,
                bid_intensity: exp_model(0.8, 1.4),
                ask_intensity: exp_model(0.8, 1.4),
                penalty: Penalty::Zero,
            },
            0.02,
        )
        .unwrap();
        let (n1, n2) = (s1.n_inventory(), s2.n_inventory());
        let mut worst = 0.0f64;
        for ti in 0..ms.n_times() {
            for i in 0..n1 {
                for j in 0..n2 {
                    let sum = s1.row(ti)[i] + s2.row(ti)[j];
                    let got = ms.row(ti)[i * n2 + j];
                    worst = worst.max((got - sum).abs());
                }
            }
        }
        assert!(worst < 1e-10, "separability violated by {worst:.3e}");
    }

    #[test]
    fn asset_permutation_permutes_the_surface() {
        let mp = two_asset(0.6, 0.0);
        let mut flipped = mp.clone();
        flipped.assets.reverse();
        flipped.covariance = vec![
            vec![mp.covariance[1][1], mp.covariance[0][1]],
            vec![mp.covariance[1][0], mp.covariance[0][0]],
        ];
        let a = solve_theta_multi(&mp, 0.02).unwrap();
        let b = solve_theta_multi(&flipped, 0.02).unwrap();
        let (n1, n2) = (a.axes[0].len(), a.axes[1].len());
        let mut worst = 0.0f64;
        for ti in 0..a.n_times() {
            for i in 0..n1 {
                for j in 0..n2 {
                    worst = worst
                        .max((a.row(ti)[i * n2 + j] - b.row(ti)[j * n1 + i]).abs());
                }
            }
        }
        assert!(worst < 1e-11, "permutation symmetry violated by {worst:.3e}");
    }

    #[test]
    fn quotes_respect_bound_indicators_and_correlation_coupling() {
        let mp = two_asset(0.8, 0.0);
        let s = solve_theta_multi(&mp, 0.02).unwrap();
        let ctxs = mp.contexts().unwrap();
        // asset 1 at its long bound: bid absent, ask present
        let quotes = quotes_from_theta_multi(&s, &ctxs, 0.0, &[2.0, 0.0]).unwrap();
        assert!(quotes[0].0.is_none() && quotes[0].1.is_some());
        assert!(quotes[1].0.is_some() && quotes[1].1.is_some());
        // nonnegative correlations make every bid non-decreasing in every
        // inventory coordinate
        for asset in 0..2 {
            for other_fixed in [-0.5f64, 0.5] {
                let mut last = f64::NEG_INFINITY;
                for step in -2..=1 {
                    let q = if asset == 0 {
                        [step as f64, other_fixed]
                    } else {
                        [2.0 * other_fixed, 0.5 * step as f64]
                    };
                    let b = quotes_from_theta_multi(&s, &ctxs, 0.0, &q).unwrap()[asset]
                        .0
                        .unwrap();
                    assert!(b >= last - 1e-12, "asset {asset} bid not monotone at {q:?}");
                    last = b;
                }
            }
        }
        // off-grid point
        assert!(quotes_from_theta_multi(&s, &ctxs, 0.0, &[0.3, 0.0]).is_err());
    }

    #[test]
    fn zero_correlation_quotes_ignore_the_other_book() {
        let mp = two_asset(0.0, 0.5);
        let s = solve_theta_multi(&mp, 0.02).unwrap();
        let ctxs = mp.contexts().unwrap();
        let base = quotes_from_theta_multi(&s, &ctxs, 0.0, &[1.0, 0.0]).unwrap()[0];
        for q2 in [-1.0, -0.5, 0.5, 1.0] {
            let got = quotes_from_theta_multi(&s, &ctxs, 0.0, &[1.0, q2]).unwrap()[0];
            assert!((got.0.unwrap() - base.0.unwrap()).abs() < 1e-8);
            assert!((got.1.unwrap() - base.1.unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn supersolution_bound_holds_on_the_tensor_grid() {
        let mp = two_asset(0.5, 0.5);
        let s = solve_theta_multi(&mp, 0.02).unwrap();
        let ctxs = mp.contexts().unwrap();
        let mut h_sum = 0.0;
        for (b, a) in &ctxs {
            h_sum += b.hamiltonian(0.0).unwrap().0 + a.hamiltonian(0.0).unwrap().0;
        }
        for (ti, &t) in s.time_grid.iter().enumerate() {
            let bound = h_sum * (mp.horizon - t) + 1e-9;
            assert!(s.row(ti).iter().all(|&v| v <= bound));
        }
    }

    #[test]
    fn terminal_penalty_matrix_is_exact() {
        let mut mp = two_asset(0.0, 0.0);
        mp.penalty_matrix = Some(vec![vec![0.2, 0.05], vec![0.05, 0.1]]);
        let s = solve_theta_multi(&mp, 0.5).unwrap();
        let last = s.row(s.n_times() - 1);
        let (n1, n2) = (s.axes[0].len(), s.axes[1].len());
        for i in 0..n1 {
            for j in 0..n2 {
                let (q1, q2) = (s.axes[0][i], s.axes[1][j]);
                assert_eq!(last[i * n2 + j], -mp.terminal_penalty(&[q1, q2]));
                let algebraic = -(0.2 * q1 * q1 + 2.0 * 0.05 * q1 * q2 + 0.1 * q2 * q2);
                assert!((last[i * n2 + j] - algebraic).abs() < 1e-14 * (1.0 + algebraic.abs()));
            }
        }
    }

    #[test]
    fn oversized_grids_are_rejected() {
        let mut mp = two_asset(0.0, 0.0);
        mp.assets[0].inventory_bound = 500.0;
        mp.assets[1].inventory_bound = 100.0;
        match solve_theta_multi(&mp, 0.5) {
            Err(CoreError::GridTooLarge { nodes, cap }) => {
                assert!(nodes > cap);
            }
            other => panic!("expected grid-size error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_covariance_is_rejected() {
        let mut mp = two_asset(0.0, 0.0);
        mp.covariance[0][1] = 0.5; // asymmetric
        assert!(matches!(solve_theta_multi(&mp, 0.5), Err(CoreError::Config { .. })));
        let mut mp = two_asset(0.0, 0.0);
        mp.covariance = vec![vec![0.09, 0.2], vec![0.2, 0.09]]; // indefinite
        assert!(matches!(solve_theta_multi(&mp, 0.5), Err(CoreError::Config { .. })));
    }

    #[test]
    fn indefinite_penalty_matrix_is_rejected() {
        let mut mp = two_asset(0.0, 0.0);
        mp.penalty_matrix = Some(vec![vec![0.1, 0.4], vec![0.4, 0.1]]);
        assert!(matches!(solve_theta_multi(&mp, 0.5), Err(CoreError::Config { .. })));
    }
}
