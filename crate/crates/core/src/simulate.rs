//! Monte Carlo evaluation of quoting policies under the model dynamics:
//! correlated arithmetic Brownian reference prices, state-dependent
//! Poisson fills thinned per time step, and exact cash/inventory
//! accounting.
//!
//! Fills do not depend on the price path (quotes are offsets from the
//! reference price and intensities see only the offsets), so each path is
//! simulated in two phases: a fill phase that consumes only the per-side
//! uniform streams, and an accounting phase that evaluates the price path
//! lazily at fill times by Brownian bridging. That keeps the per-step cost
//! at two uniform draws, and lets [`compare_strategies`] price both
//! policies' fills on one shared realization of the price path — the
//! common-random-numbers coupling that makes paired comparisons sharp.
//!
//! Streams are derived from `(base_seed, path, stream)`: stream 0 is the
//! price path, streams `1 + 2i` and `2 + 2i` the bid and ask fill uniforms
//! of asset `i`. One uniform per side per step is always consumed, whether
//! or not a quote is present, so two policies on the same seed see the
//! same draws at the same steps. Aggregation uses pairwise summation over
//! the path-indexed outcome vector, so reports do not depend on evaluation
//! order.

use std::io::Write;

use crate::closed_form::{approx_quotes_multi, GammaMatrix};
use crate::error::{CoreError, Result};
use crate::hamiltonian::HamiltonianContext;
use crate::multi::{cholesky, quotes_from_theta_multi, MultiAssetProblem, MultiThetaSurface};
use crate::rng::Stream;
use crate::single::{quotes_from_theta, ThetaSurface};

/// Per-step fill probability may not exceed this at the configured offset
/// floor, bounding the bias of per-step Bernoulli thinning.
pub const THINNING_CAP: f64 = 0.1;
/// Policy tables are precomputed when they fit in this many entries.
const TABLE_ENTRY_CAP: usize = 8_000_000;

/// A quoting rule `(t, inventory) -> per-asset optional (δ^b, δ^a)`.
#[derive(Clone, Debug)]
pub enum QuotePolicy {
    /// Optimal quotes read off a solved single-asset surface.
    SolvedSingle {
        surface: ThetaSurface,
        bid: HamiltonianContext,
        ask: HamiltonianContext,
    },
    /// Optimal quotes read off a solved multi-asset surface.
    SolvedMulti {
        surface: MultiThetaSurface,
        contexts: Vec<(HamiltonianContext, HamiltonianContext)>,
    },
    /// Time-independent closed-form approximations through the Γ matrix.
    ClosedForm {
        gamma_matrix: GammaMatrix,
        contexts: Vec<HamiltonianContext>,
        gamma: f64,
    },
    /// Fixed offsets per asset; `None` suppresses that side everywhere.
    ConstantOffsets { offsets: Vec<(Option<f64>, Option<f64>)> },
    /// Another policy with both offsets scaled by a constant factor.
    Scaled { inner: Box<QuotePolicy>, factor: f64 },
}

impl QuotePolicy {
    /// Offsets at `(t, q)`. Sides are suppressed at the inventory bounds
    /// for every source, solved or not.
    pub fn quotes(
        &self,
        problem: &MultiAssetProblem,
        t: f64,
        q: &[f64],
    ) -> Result<Vec<(Option<f64>, Option<f64>)>> {
        let mut out = match self {
            QuotePolicy::SolvedSingle { surface, bid, ask } => {
                let (b, a) = quotes_from_theta(surface, bid, ask, t, q[0])?;
                vec![(b, a)]
            }
            QuotePolicy::SolvedMulti { surface, contexts } => {
                quotes_from_theta_multi(surface, contexts, t, q)?
            }
            QuotePolicy::ClosedForm { gamma_matrix, contexts, gamma } => {
                let mut v = Vec::with_capacity(q.len());
                for i in 0..q.len() {
                    let (b, a) = approx_quotes_multi(gamma_matrix, contexts, *gamma, q, i)?;
                    v.push((Some(b), Some(a)));
                }
                v
            }
            QuotePolicy::ConstantOffsets { offsets } => {
                if offsets.len() != q.len() {
                    return Err(CoreError::Contract {
                        what: format!("{} offsets for {} assets", offsets.len(), q.len()),
                    });
                }
                offsets.clone()
            }
            QuotePolicy::Scaled { inner, factor } => {
                let mut v = inner.quotes(problem, t, q)?;
                for (b, a) in &mut v {
                    *b = b.map(|x| x * factor);
                    *a = a.map(|x| x * factor);
                }
                v
            }
        };
        for (i, spec) in problem.assets.iter().enumerate() {
            if q[i] >= spec.inventory_bound - 0.5 * spec.delta_qty {
                out[i].0 = None;
            }
            if q[i] <= -spec.inventory_bound + 0.5 * spec.delta_qty {
                out[i].1 = None;
            }
        }
        Ok(out)
    }
}

/// Simulation configuration. The initial inventory must sit on the
/// problem's inventory grid.
#[derive(Clone, Debug)]
pub struct MarketSimConfig {
    pub problem: MultiAssetProblem,
    /// Thinning step, seconds.
    pub dt_sim: f64,
    pub n_paths: usize,
    pub base_seed: u64,
    pub initial_cash: f64,
    pub initial_inventory: Vec<f64>,
    pub initial_price: Vec<f64>,
    /// Most aggressive offset any policy is allowed to quote; thinning
    /// validity `Λ(floor)·dt <= 0.1` is enforced here.
    pub delta_floor: f64,
    pub record_events: bool,
}

impl MarketSimConfig {
    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        let d = self.problem.dim();
        if !(self.dt_sim > 0.0) || self.n_paths == 0 {
            return Err(CoreError::Config { what: "dt_sim > 0 and n_paths > 0 required".into() });
        }
        if self.initial_inventory.len() != d || self.initial_price.len() != d {
            return Err(CoreError::Config {
                what: "initial inventory/price dimension mismatch".into(),
            });
        }
        for (i, spec) in self.problem.assets.iter().enumerate() {
            let pos = self.initial_inventory[i] / spec.delta_qty;
            if (pos - pos.round()).abs() > 1e-9
                || self.initial_inventory[i].abs() > spec.inventory_bound + 1e-9
            {
                return Err(CoreError::Config {
                    what: format!("initial inventory of asset {i} is off the grid"),
                });
            }
            for intensity in [&spec.bid_intensity, &spec.ask_intensity] {
                let rate = intensity.value(self.delta_floor)?;
                if rate * self.dt_sim > THINNING_CAP {
                    return Err(CoreError::Config {
                        what: format!(
                            "thinning validity violated for asset {i}: Λ({}) dt = {:.3e} > {THINNING_CAP}",
                            self.delta_floor,
                            rate * self.dt_sim
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    fn n_steps(&self) -> usize {
        (self.problem.horizon / self.dt_sim).round().max(1.0) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Bid,
    Ask,
}

/// A fill, as recorded in the optional event log.
#[derive(Clone, Debug)]
pub struct FillEvent {
    pub path: usize,
    pub t: f64,
    pub asset: usize,
    pub side: Side,
    pub price: f64,
    pub offset: f64,
    pub q_after: f64,
    pub cash_after: f64,
}

/// Terminal state and objective contributions of one path.
#[derive(Clone, Debug)]
pub struct PathOutcome {
    pub cash: f64,
    pub inventory: Vec<f64>,
    pub price: Vec<f64>,
    /// `½γ ∫ qᵀΣq dt` accumulated by the left-rectangle rule.
    pub penalty_integral: f64,
    /// `X_T + q_T·S_T - ℓ_d(q_T)`.
    pub wealth: f64,
    /// `-exp(-γ · wealth)`.
    pub cara_utility: f64,
    /// `wealth - penalty_integral`.
    pub penalized_value: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug)]
pub struct SimulationReport {
    pub outcomes: Vec<PathOutcome>,
    /// CARA-utility objective estimate.
    pub cara: Estimate,
    /// Certainty equivalent `-(1/γ) log(-mean utility)`, a readable
    /// transform of the CARA estimate.
    pub certainty_equivalent: f64,
    /// Running-penalty objective estimate.
    pub penalized: Estimate,
    pub events: Option<Vec<FillEvent>>,
}

impl SimulationReport {
    /// Event log CSV: `path,t,asset,side,S,delta,q_after,x_after`.
    pub fn write_event_log<W: Write>(&self, out: &mut W) -> Result<()> {
        let events = self.events.as_ref().ok_or_else(|| CoreError::Contract {
            what: "event recording was not enabled".into(),
        })?;
        writeln!(out, "path,t,asset,side,S,delta,q_after,x_after")?;
        for e in events {
            writeln!(
                out,
                "{},{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                e.path,
                e.t,
                e.asset,
                if e.side == Side::Bid { "bid" } else { "ask" },
                e.price,
                e.offset,
                e.q_after,
                e.cash_after
            )?;
        }
        Ok(())
    }
}

/// Pairwise (cascade) summation: order-independent up to the fixed
/// recursion shape, and accurate for long vectors.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 32 {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

fn estimate(values: &[f64]) -> Estimate {
    let n = values.len();
    let mean = pairwise_sum(values) / n as f64;
    if n < 2 {
        return Estimate { mean, std_error: f64::INFINITY };
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    Estimate { mean, std_error: (var / n as f64).sqrt() }
}

/// Per-(state, step, asset) quote data; four numbers per entry:
/// `p_bid, off_bid, p_ask, off_ask`. State-major so that a path sweeping
/// steps at a fixed inventory reads the table sequentially.
struct PolicyTable {
    n_steps: usize,
    d: usize,
    data: Vec<f64>,
}

impl PolicyTable {
    #[inline]
    fn row(&self, step: usize, state: usize) -> &[f64] {
        let base = (state * self.n_steps + step) * self.d * 4;
        &self.data[base..base + self.d * 4]
    }
}

struct Prepared<'a> {
    config: &'a MarketSimConfig,
    policy: &'a QuotePolicy,
    /// per-asset inventory grids
    axes: Vec<Vec<f64>>,
    /// lexicographic strides over the state space
    strides: Vec<usize>,
    n_states: usize,
    /// `½γ qᵀΣq` per state
    risk_rate: Vec<f64>,
    table: Option<PolicyTable>,
}

impl<'a> Prepared<'a> {
    fn new(config: &'a MarketSimConfig, policy: &'a QuotePolicy) -> Result<Self> {
        let d = config.problem.dim();
        let axes: Vec<Vec<f64>> = config
            .problem
            .assets
            .iter()
            .map(|a| {
                let m = (a.inventory_bound / a.delta_qty).round() as i64;
                (-m..=m).map(|j| j as f64 * a.delta_qty).collect()
            })
            .collect();
        let mut strides = vec![1usize; d];
        for a in (0..d - 1).rev() {
            strides[a] = strides[a + 1] * axes[a + 1].len();
        }
        let n_states: usize = axes.iter().map(|a| a.len()).product();

        let mut risk_rate = vec![0.0; n_states];
        let mut q = vec![0.0; d];
        for (state, rate) in risk_rate.iter_mut().enumerate() {
            unpack_state(&axes, state, &mut q);
            *rate = config.problem.risk_rate(&q);
        }

        let mut prepared =
            Prepared { config, policy, axes, strides, n_states, risk_rate, table: None };
        let n_steps = config.n_steps();
        if n_steps.saturating_mul(n_states).saturating_mul(d).saturating_mul(4)
            <= TABLE_ENTRY_CAP
        {
            prepared.build_table(n_steps)?;
        }
        Ok(prepared)
    }

    fn build_table(&mut self, n_steps: usize) -> Result<()> {
        let d = self.config.problem.dim();
        let mut data = vec![0.0; n_steps * self.n_states * d * 4];
        let mut q = vec![0.0; d];
        for state in 0..self.n_states {
            unpack_state(&self.axes, state, &mut q);
            for step in 0..n_steps {
                let t = step as f64 * self.config.dt_sim;
                let quotes = self.policy.quotes(&self.config.problem, t, &q)?;
                let base = (state * n_steps + step) * d * 4;
                for (i, (b, a)) in quotes.iter().enumerate() {
                    let (pb, ob) = self.side_numbers(i, Side::Bid, *b)?;
                    let (pa, oa) = self.side_numbers(i, Side::Ask, *a)?;
                    data[base + 4 * i] = pb;
                    data[base + 4 * i + 1] = ob;
                    data[base + 4 * i + 2] = pa;
                    data[base + 4 * i + 3] = oa;
                }
            }
        }
        self.table = Some(PolicyTable { n_steps, d, data });
        Ok(())
    }

    /// `(p_fill, offset)` for one side; absent quotes fill with probability
    /// zero.
    fn side_numbers(&self, asset: usize, side: Side, offset: Option<f64>) -> Result<(f64, f64)> {
        match offset {
            None => Ok((0.0, f64::NAN)),
            Some(off) => {
                if off < self.config.delta_floor {
                    return Err(CoreError::Config {
                        what: format!(
                            "policy quoted {off} below the configured floor {}",
                            self.config.delta_floor
                        ),
                    });
                }
                let spec = &self.config.problem.assets[asset];
                let intensity =
                    if side == Side::Bid { &spec.bid_intensity } else { &spec.ask_intensity };
                let p = intensity.value(off)? * self.config.dt_sim;
                Ok((p, off))
            }
        }
    }

    #[inline]
    fn lookup(
        &self,
        step: usize,
        state: usize,
        scratch: &mut Vec<f64>,
        q: &mut [f64],
    ) -> Result<()> {
        scratch.clear();
        if let Some(table) = &self.table {
            scratch.extend_from_slice(table.row(step, state));
            return Ok(());
        }
        unpack_state(&self.axes, state, q);
        let t = step as f64 * self.config.dt_sim;
        let quotes = self.policy.quotes(&self.config.problem, t, q)?;
        for (i, (b, a)) in quotes.iter().enumerate() {
            let (pb, ob) = self.side_numbers(i, Side::Bid, *b)?;
            let (pa, oa) = self.side_numbers(i, Side::Ask, *a)?;
            scratch.extend_from_slice(&[pb, ob, pa, oa]);
        }
        Ok(())
    }

    fn initial_state(&self) -> usize {
        let mut state = 0;
        for (i, axis) in self.axes.iter().enumerate() {
            let pos =
                (self.config.initial_inventory[i] - axis[0]) / self.config.problem.assets[i].delta_qty;
            state += self.strides[i] * pos.round() as usize;
        }
        state
    }
}

fn unpack_state(axes: &[Vec<f64>], mut state: usize, q: &mut [f64]) {
    for a in (0..axes.len()).rev() {
        let len = axes[a].len();
        q[a] = axes[a][state % len];
        state /= len;
    }
}

/// One fill from the fill phase, before prices are known.
#[derive(Clone, Copy, Debug)]
struct RawFill {
    step: usize,
    asset: usize,
    side: Side,
    offset: f64,
}

/// Runs the fills of one path, consuming one uniform per side per step.
fn fill_phase(prep: &Prepared<'_>, path: usize) -> Result<(Vec<RawFill>, f64, usize)> {
    let config = prep.config;
    let d = config.problem.dim();
    let n_steps = config.n_steps();
    let mut fill_streams: Vec<Stream> = (0..2 * d)
        .map(|s| Stream::derive(config.base_seed, path as u64, 1 + s as u64))
        .collect();

    let mut state = prep.initial_state();
    let mut fills = Vec::new();
    let mut penalty_sum = 0.0;

    // both sides may fill in one step (independent Bernoullis), each using
    // the quotes of the step's starting state; quotes are suppressed at the
    // bounds, so a fill can never push the state outside the grid
    if let (Some(table), 1) = (&prep.table, d) {
        // single-asset fast path: the table row for a fixed state is a
        // contiguous run over steps
        let mut bid_stream = fill_streams.swap_remove(0);
        let mut ask_stream = fill_streams.swap_remove(0);
        let mut row = &table.data[state * table.n_steps * 4..(state + 1) * table.n_steps * 4];
        for step in 0..n_steps {
            penalty_sum += prep.risk_rate[state];
            let e = &row[step * 4..step * 4 + 4];
            let u_bid = bid_stream.next_f64();
            let u_ask = ask_stream.next_f64();
            if u_bid < e[0] {
                fills.push(RawFill { step, asset: 0, side: Side::Bid, offset: e[1] });
                state += 1;
                row = &table.data[state * table.n_steps * 4..(state + 1) * table.n_steps * 4];
            }
            if u_ask < e[2] {
                fills.push(RawFill { step, asset: 0, side: Side::Ask, offset: e[3] });
                state -= 1;
                row = &table.data[state * table.n_steps * 4..(state + 1) * table.n_steps * 4];
            }
        }
    } else if let Some(table) = &prep.table {
        for step in 0..n_steps {
            penalty_sum += prep.risk_rate[state];
            let row = table.row(step, state);
            for asset in 0..d {
                let u_bid = fill_streams[2 * asset].next_f64();
                let u_ask = fill_streams[2 * asset + 1].next_f64();
                if u_bid < row[4 * asset] {
                    fills.push(RawFill { step, asset, side: Side::Bid, offset: row[4 * asset + 1] });
                    state += prep.strides[asset];
                }
                if u_ask < row[4 * asset + 2] {
                    fills.push(RawFill { step, asset, side: Side::Ask, offset: row[4 * asset + 3] });
                    state -= prep.strides[asset];
                }
            }
        }
    } else {
        let mut scratch: Vec<f64> = Vec::with_capacity(d * 4);
        let mut q_scratch = vec![0.0; d];
        for step in 0..n_steps {
            penalty_sum += prep.risk_rate[state];
            prep.lookup(step, state, &mut scratch, &mut q_scratch)?;
            for asset in 0..d {
                let u_bid = fill_streams[2 * asset].next_f64();
                let u_ask = fill_streams[2 * asset + 1].next_f64();
                if u_bid < scratch[4 * asset] {
                    debug_assert!(
                        (state / prep.strides[asset]) % prep.axes[asset].len()
                            < prep.axes[asset].len() - 1
                    );
                    fills.push(RawFill {
                        step,
                        asset,
                        side: Side::Bid,
                        offset: scratch[4 * asset + 1],
                    });
                    state += prep.strides[asset];
                }
                if u_ask < scratch[4 * asset + 2] {
                    debug_assert!((state / prep.strides[asset]) % prep.axes[asset].len() > 0);
                    fills.push(RawFill {
                        step,
                        asset,
                        side: Side::Ask,
                        offset: scratch[4 * asset + 3],
                    });
                    state -= prep.strides[asset];
                }
            }
        }
    }
    Ok((fills, penalty_sum * config.dt_sim, state))
}

/// Lazily evaluated correlated price path.
struct PricePath {
    stream: Stream,
    chol: Vec<Vec<f64>>,
    sqrt_dt: f64,
    current: Vec<f64>,
    step: usize,
    z: Vec<f64>,
}

impl PricePath {
    fn new(config: &MarketSimConfig, path: usize) -> Result<Self> {
        let chol = cholesky(&config.problem.covariance).ok_or_else(|| CoreError::Config {
            what: "covariance matrix is not positive semidefinite".into(),
        })?;
        Ok(PricePath {
            stream: Stream::derive(config.base_seed, path as u64, 0),
            chol,
            sqrt_dt: config.dt_sim.sqrt(),
            current: config.initial_price.clone(),
            step: 0,
            z: vec![0.0; config.problem.dim()],
        })
    }

    /// Advance to `step`, drawing one d-dimensional Gaussian increment for
    /// the whole bridge interval.
    fn advance_to(&mut self, step: usize) {
        if step <= self.step {
            return;
        }
        let span = ((step - self.step) as f64).sqrt() * self.sqrt_dt;
        for z in &mut self.z {
            *z = self.stream.next_normal();
        }
        let d = self.current.len();
        for i in 0..d {
            let mut incr = 0.0;
            for j in 0..=i {
                incr += self.chol[i][j] * self.z[j];
            }
            self.current[i] += span * incr;
        }
        self.step = step;
    }
}

/// Prices fills and produces the terminal outcome of one path. `price_at`
/// must return the reference-price vector at the start of a step.
fn account_path(
    config: &MarketSimConfig,
    path: usize,
    fills: &[RawFill],
    penalty_integral: f64,
    price_at: &mut dyn FnMut(usize) -> Vec<f64>,
    events: Option<&mut Vec<FillEvent>>,
) -> PathOutcome {
    let d = config.problem.dim();
    let mut cash = config.initial_cash;
    let mut q = config.initial_inventory.clone();
    let mut local_events = events;
    for f in fills {
        let s = price_at(f.step);
        let spec = &config.problem.assets[f.asset];
        match f.side {
            Side::Bid => {
                cash -= (s[f.asset] - f.offset) * spec.delta_qty;
                q[f.asset] += spec.delta_qty;
            }
            Side::Ask => {
                cash += (s[f.asset] + f.offset) * spec.delta_qty;
                q[f.asset] -= spec.delta_qty;
            }
        }
        if let Some(log) = local_events.as_deref_mut() {
            log.push(FillEvent {
                path,
                t: f.step as f64 * config.dt_sim,
                asset: f.asset,
                side: f.side,
                price: s[f.asset],
                offset: f.offset,
                q_after: q[f.asset],
                cash_after: cash,
            });
        }
    }
    let s_final = price_at(config.n_steps());
    let mtm: f64 = (0..d).map(|i| q[i] * s_final[i]).sum();
    let wealth = cash + mtm - config.problem.terminal_penalty(&q);
    PathOutcome {
        cash,
        inventory: q,
        price: s_final,
        penalty_integral,
        wealth,
        cara_utility: -(-config.problem.gamma * wealth).exp(),
        penalized_value: wealth - penalty_integral,
    }
}

fn build_report(config: &MarketSimConfig, outcomes: Vec<PathOutcome>, events: Option<Vec<FillEvent>>) -> SimulationReport {
    let cara_vals: Vec<f64> = outcomes.iter().map(|o| o.cara_utility).collect();
    let pen_vals: Vec<f64> = outcomes.iter().map(|o| o.penalized_value).collect();
    let cara = estimate(&cara_vals);
    let penalized = estimate(&pen_vals);
    SimulationReport {
        outcomes,
        cara,
        certainty_equivalent: -(-cara.mean).ln() / config.problem.gamma,
        penalized,
        events,
    }
}

/// Simulates `n_paths` independent paths of the market under `policy`.
pub fn simulate_paths(config: &MarketSimConfig, policy: &QuotePolicy) -> Result<SimulationReport> {
    config.validate()?;
    let prep = Prepared::new(config, policy)?;
    let mut outcomes = Vec::with_capacity(config.n_paths);
    let mut events = config.record_events.then(Vec::new);
    for path in 0..config.n_paths {
        let (fills, penalty, _) = fill_phase(&prep, path)?;
        let mut prices = PricePath::new(config, path)?;
        let outcome = account_path(
            config,
            path,
            &fills,
            penalty,
            &mut |step| {
                prices.advance_to(step);
                prices.current.clone()
            },
            events.as_mut(),
        );
        outcomes.push(outcome);
    }
    Ok(build_report(config, outcomes, events))
}

/// Paired difference of two estimates under common random numbers.
#[derive(Clone, Copy, Debug)]
pub struct PairedEstimate {
    pub mean_difference: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug)]
pub struct StrategyComparison {
    pub first: SimulationReport,
    pub second: SimulationReport,
    /// CARA-utility objective difference, first minus second.
    pub cara: PairedEstimate,
    /// Running-penalty objective difference, first minus second.
    pub penalized: PairedEstimate,
}

/// Evaluates two policies on common random numbers: the same fill
/// uniforms and one shared price-path realization per path index.
pub fn compare_strategies(
    config: &MarketSimConfig,
    first: &QuotePolicy,
    second: &QuotePolicy,
) -> Result<StrategyComparison> {
    config.validate()?;
    let prep_a = Prepared::new(config, first)?;
    let prep_b = Prepared::new(config, second)?;
    let mut outcomes_a = Vec::with_capacity(config.n_paths);
    let mut outcomes_b = Vec::with_capacity(config.n_paths);
    let mut events_a = config.record_events.then(Vec::new);
    let mut events_b = config.record_events.then(Vec::new);

    for path in 0..config.n_paths {
        let (fills_a, pen_a, _) = fill_phase(&prep_a, path)?;
        let (fills_b, pen_b, _) = fill_phase(&prep_b, path)?;

        // one shared price realization, evaluated at the union of the two
        // policies' fill steps
        let mut steps: Vec<usize> = fills_a
            .iter()
            .chain(fills_b.iter())
            .map(|f| f.step)
            .chain(std::iter::once(config.n_steps()))
            .collect();
        steps.sort_unstable();
        steps.dedup();
        let mut prices = PricePath::new(config, path)?;
        let mut evaluated: Vec<(usize, Vec<f64>)> = Vec::with_capacity(steps.len());
        for &s in &steps {
            prices.advance_to(s);
            evaluated.push((s, prices.current.clone()));
        }
        let lookup = |step: usize| -> Vec<f64> {
            let idx = evaluated.binary_search_by_key(&step, |e| e.0).unwrap();
            evaluated[idx].1.clone()
        };

        outcomes_a.push(account_path(
            config,
            path,
            &fills_a,
            pen_a,
            &mut { |step| lookup(step) },
            events_a.as_mut(),
        ));
        outcomes_b.push(account_path(
            config,
            path,
            &fills_b,
            pen_b,
            &mut { |step| lookup(step) },
            events_b.as_mut(),
        ));
    }

    let diff_cara: Vec<f64> = outcomes_a
        .iter()
        .zip(&outcomes_b)
        .map(|(a, b)| a.cara_utility - b.cara_utility)
        .collect();
    let diff_pen: Vec<f64> = outcomes_a
        .iter()
        .zip(&outcomes_b)
        .map(|(a, b)| a.penalized_value - b.penalized_value)
        .collect();
    let ec = estimate(&diff_cara);
    let ep = estimate(&diff_pen);
    Ok(StrategyComparison {
        first: build_report(config, outcomes_a, events_a),
        second: build_report(config, outcomes_b, events_b),
        cara: PairedEstimate { mean_difference: ec.mean, std_error: ec.std_error },
        penalized: PairedEstimate { mean_difference: ep.mean, std_error: ep.std_error },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::IntensityModel;
    use crate::multi::AssetSpec;

    fn one_asset_config(
        sigma: f64,
        q_bound_steps: i64,
        horizon: f64,
        dt: f64,
        n_paths: usize,
    ) -> MarketSimConfig {
        MarketSimConfig {
            problem: MultiAssetProblem {
                assets: vec![AssetSpec {
                    bid_intensity: IntensityModel::exponential(1.0, 1.0).unwrap(),
                    ask_intensity: IntensityModel::exponential(1.0, 1.0).unwrap(),
                    delta_qty: 1.0,
                    inventory_bound: q_bound_steps as f64,
                }],
                covariance: vec![vec![sigma * sigma]],
                gamma: 0.5,
                xi: 0.0,
                horizon,
                penalty_matrix: None,
            },
            dt_sim: dt,
            n_paths,
            base_seed: 2024,
            initial_cash: 0.0,
            initial_inventory: vec![0.0],
            initial_price: vec![0.0],
            delta_floor: -0.5,
            record_events: true,
        }
    }

    #[test]
    fn silent_policy_changes_nothing() {
        let mut config = one_asset_config(0.2, 4, 50.0, 0.05, 16);
        config.initial_cash = 3.5;
        config.initial_inventory = vec![1.0];
        config.initial_price = vec![10.0];
        let policy = QuotePolicy::ConstantOffsets { offsets: vec![(None, None)] };
        let report = simulate_paths(&config, &policy).unwrap();
        for o in &report.outcomes {
            assert_eq!(o.cash, 3.5);
            assert_eq!(o.inventory, vec![1.0]);
        }
        assert!(report.events.as_ref().unwrap().is_empty());
    }

    #[test]
    fn flat_book_no_trades_gives_zero_penalized_value() {
        let config = one_asset_config(0.0, 4, 50.0, 0.05, 8);
        let policy = QuotePolicy::ConstantOffsets { offsets: vec![(None, None)] };
        let report = simulate_paths(&config, &policy).unwrap();
        assert_eq!(report.penalized.mean, 0.0);
    }

    #[test]
    fn deterministic_cash_drift_matches_the_compensator() {
        // σ = 0, S₀ = 0, symmetric offsets δ: E[X_T]/T = 2 Δ δ Λ(δ)
        let config = one_asset_config(0.0, 128, 100.0, 0.05, 400);
        let delta = 0.5;
        let policy = QuotePolicy::ConstantOffsets { offsets: vec![(Some(delta), Some(delta))] };
        let report = simulate_paths(&config, &policy).unwrap();
        let cash: Vec<f64> = report.outcomes.iter().map(|o| o.cash).collect();
        let est = estimate(&cash);
        let expected = 2.0 * 1.0 * delta * (-delta.max(0.0)).exp() * 100.0;
        assert!(
            (est.mean - expected).abs() < 3.0 * est.std_error,
            "mean {} vs {} (se {})",
            est.mean,
            expected,
            est.std_error
        );

        // empirical per-side fill rate against Λ(δ)
        let events = report.events.as_ref().unwrap();
        let bid_fills = events.iter().filter(|e| e.side == Side::Bid).count() as f64;
        let lam = (-delta).exp();
        let total_time = 400.0 * 100.0;
        let se = (lam * total_time).sqrt();
        assert!(
            (bid_fills - lam * total_time).abs() < 3.0 * se,
            "bid fills {bid_fills} vs {}",
            lam * total_time
        );
    }

    #[test]
    fn cash_identity_reconstructs_from_the_event_log() {
        let mut config = one_asset_config(0.3, 8, 60.0, 0.05, 32);
        config.initial_price = vec![5.0];
        config.initial_cash = 1.0;
        let policy = QuotePolicy::ConstantOffsets { offsets: vec![(Some(0.3), Some(0.25))] };
        let report = simulate_paths(&config, &policy).unwrap();
        let events = report.events.as_ref().unwrap();
        for (path, outcome) in report.outcomes.iter().enumerate() {
            let mut cash = 1.0;
            for e in events.iter().filter(|e| e.path == path) {
                match e.side {
                    Side::Bid => cash -= (e.price - e.offset) * 1.0,
                    Side::Ask => cash += (e.price + e.offset) * 1.0,
                }
                assert_eq!(cash, e.cash_after, "path {path}");
            }
            assert_eq!(cash, outcome.cash, "path {path}");
        }
    }

    #[test]
    fn inventory_stays_inside_the_bounds() {
        // aggressive two-sided quoting at a tight bound
        let config = one_asset_config(0.1, 2, 200.0, 0.05, 24);
        let policy = QuotePolicy::ConstantOffsets { offsets: vec![(Some(-0.4), Some(-0.4))] };
        let report = simulate_paths(&config, &policy).unwrap();
        for e in report.events.as_ref().unwrap() {
            assert!(e.q_after.abs() <= 2.0 + 1e-12);
        }
        for o in &report.outcomes {
            assert!(o.inventory[0].abs() <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn reports_are_bit_reproducible() {
        let config = one_asset_config(0.25, 8, 80.0, 0.05, 40);
        let policy = QuotePolicy::ConstantOffsets { offsets: vec![(Some(0.4), Some(0.4))] };
        let a = simulate_paths(&config, &policy).unwrap();
        let b = simulate_paths(&config, &policy).unwrap();
        assert_eq!(a.penalized.mean.to_bits(), b.penalized.mean.to_bits());
        assert_eq!(a.cara.mean.to_bits(), b.cara.mean.to_bits());
        assert_eq!(
            a.outcomes.iter().map(|o| o.wealth.to_bits()).collect::<Vec<_>>(),
            b.outcomes.iter().map(|o| o.wealth.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn identical_policies_compare_to_exactly_zero() {
        let config = one_asset_config(0.3, 6, 80.0, 0.05, 32);
        let policy = QuotePolicy::ConstantOffsets { offsets: vec![(Some(0.35), Some(0.35))] };
        let cmp = compare_strategies(&config, &policy, &policy).unwrap();
        assert_eq!(cmp.penalized.mean_difference, 0.0);
        assert_eq!(cmp.cara.mean_difference, 0.0);
        for (a, b) in cmp.first.outcomes.iter().zip(&cmp.second.outcomes) {
            assert_eq!(a.wealth.to_bits(), b.wealth.to_bits());
        }
    }

    #[test]
    fn thinning_validity_is_enforced_at_the_floor() {
        let mut config = one_asset_config(0.2, 4, 10.0, 0.5, 4);
        config.delta_floor = -3.0; // Λ(-3) dt = e³/2 >> 0.1
        let policy = QuotePolicy::ConstantOffsets { offsets: vec![(Some(0.5), Some(0.5))] };
        assert!(matches!(simulate_paths(&config, &policy), Err(CoreError::Config { .. })));
    }

    #[test]
    fn quotes_below_the_floor_are_rejected() {
        let config = one_asset_config(0.2, 4, 10.0, 0.05, 4);
        let policy = QuotePolicy::ConstantOffsets { offsets: vec![(Some(-2.0), Some(0.5))] };
        assert!(matches!(simulate_paths(&config, &policy), Err(CoreError::Config { .. })));
    }

    #[test]
    fn off_grid_initial_inventory_is_rejected() {
        let mut config = one_asset_config(0.2, 4, 10.0, 0.05, 4);
        config.initial_inventory = vec![0.25];
        let policy = QuotePolicy::ConstantOffsets { offsets: vec![(None, None)] };
        assert!(matches!(simulate_paths(&config, &policy), Err(CoreError::Config { .. })));
    }

    #[test]
    fn scaled_policy_widens_the_quotes() {
        let config = one_asset_config(0.2, 4, 10.0, 0.05, 4);
        let base = QuotePolicy::ConstantOffsets { offsets: vec![(Some(0.5), Some(0.4))] };
        let wide = QuotePolicy::Scaled { inner: Box::new(base.clone()), factor: 1.2 };
        let q = wide.quotes(&config.problem, 0.0, &[0.0]).unwrap();
        assert!((q[0].0.unwrap() - 0.6).abs() < 1e-15);
        assert!((q[0].1.unwrap() - 0.48).abs() < 1e-15);
        // bound suppression applies after scaling too
        let q = wide.quotes(&config.problem, 0.0, &[4.0]).unwrap();
        assert!(q[0].0.is_none() && q[0].1.is_some());
    }

    #[test]
    fn correlated_price_paths_have_the_configured_covariance() {
        let (s1, s2, rho) = (0.4, 0.9, 0.7);
        let config = MarketSimConfig {
            problem: MultiAssetProblem {
                assets: vec![
                    AssetSpec {
                        bid_intensity: IntensityModel::exponential(1.0, 1.0).unwrap(),
                        ask_intensity: IntensityModel::exponential(1.0, 1.0).unwrap(),
                        delta_qty: 1.0,
                        inventory_bound: 2.0,
                    },
                    AssetSpec {
                        bid_intensity: IntensityModel::exponential(1.0, 1.0).unwrap(),
                        ask_intensity: IntensityModel::exponential(1.0, 1.0).unwrap(),
                        delta_qty: 1.0,
                        inventory_bound: 2.0,
                    },
                ],
                covariance: vec![
                    vec![s1 * s1, rho * s1 * s2],
                    vec![rho * s1 * s2, s2 * s2],
                ],
                gamma: 0.5,
                xi: 0.0,
                horizon: 1.0,
                penalty_matrix: None,
            },
            dt_sim: 0.05,
            n_paths: 4000,
            base_seed: 7,
            initial_cash: 0.0,
            initial_inventory: vec![0.0, 0.0],
            initial_price: vec![0.0, 0.0],
            delta_floor: -0.5,
            record_events: false,
        };
        let policy = QuotePolicy::ConstantOffsets { offsets: vec![(None, None), (None, None)] };
        let report = simulate_paths(&config, &policy).unwrap();
        let n = report.outcomes.len() as f64;
        let mut c11 = 0.0;
        let mut c12 = 0.0;
        let mut c22 = 0.0;
        for o in &report.outcomes {
            c11 += o.price[0] * o.price[0];
            c12 += o.price[0] * o.price[1];
            c22 += o.price[1] * o.price[1];
        }
        c11 /= n;
        c12 /= n;
        c22 /= n;
        assert!((c11 - s1 * s1).abs() < 4.0 * s1 * s1 / n.sqrt() * 2.0, "c11 {c11}");
        assert!((c22 - s2 * s2).abs() < 4.0 * s2 * s2 / n.sqrt() * 2.0, "c22 {c22}");
        let target = rho * s1 * s2;
        assert!((c12 - target).abs() < 6.0 * s1 * s2 / n.sqrt(), "c12 {c12} vs {target}");
    }
}
