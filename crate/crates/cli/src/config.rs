//! Run configuration: a versioned JSON document describing the problem,
//! the numerics, and the requested mode.

use serde::{Deserialize, Serialize};

use mm_core::intensity::IntensityModel;
use mm_core::multi::{AssetSpec, MultiAssetProblem};
use mm_core::single::{Penalty, SingleAssetProblem};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SolveSingle,
    SolveMulti,
    Approx,
    Simulate,
    Calibrate,
}

/// ξ selection: the risk-aversion value, zero, or an explicit number.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XiChoice {
    Gamma,
    Zero,
    Value(f64),
}

impl XiChoice {
    pub fn resolve(&self, gamma: f64) -> f64 {
        match self {
            XiChoice::Gamma => gamma,
            XiChoice::Zero => 0.0,
            XiChoice::Value(v) => *v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetConfig {
    pub label: String,
    /// Reference-price volatility, currency·s^(-1/2).
    pub sigma: f64,
    /// Exponential intensity rate A, 1/s.
    pub intensity_a: f64,
    /// Exponential intensity decay k, 1/currency.
    pub intensity_k: f64,
    /// Trade size Δ, asset units.
    pub trade_size: f64,
    /// Inventory bound as a multiple of the trade size.
    pub inventory_bound_steps: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PenaltyConfig {
    #[serde(default)]
    pub kind: PenaltyKind,
    #[serde(default)]
    pub coefficient: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    #[default]
    Zero,
    Linear,
    Quadratic,
}

impl PenaltyConfig {
    pub fn to_penalty(self) -> Penalty {
        match self.kind {
            PenaltyKind::Zero => Penalty::Zero,
            PenaltyKind::Linear => Penalty::Linear(self.coefficient),
            PenaltyKind::Quadratic => Penalty::Quadratic(self.coefficient),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Solver time step, seconds.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Simulator thinning step, seconds.
    #[serde(default = "default_dt_sim")]
    pub dt_sim: f64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    /// Most aggressive offset a simulated policy may quote. Defaults to
    /// five decay lengths through the reference price.
    #[serde(default)]
    pub delta_floor: Option<f64>,
}

fn default_dt() -> f64 {
    1.0
}
fn default_dt_sim() -> f64 {
    0.05
}
fn default_paths() -> usize {
    10_000
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            dt: default_dt(),
            dt_sim: default_dt_sim(),
            n_paths: default_paths(),
            seed: 0,
            delta_floor: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    #[default]
    Solved,
    ClosedForm,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default)]
    pub policy: PolicyKind,
    /// Per-asset constant (bid, ask) offsets for the constant policy.
    #[serde(default)]
    pub constant_offsets: Vec<(Option<f64>, Option<f64>)>,
    #[serde(default)]
    pub record_events: bool,
    #[serde(default)]
    pub initial_cash: f64,
    #[serde(default)]
    pub initial_inventory: Vec<f64>,
    #[serde(default)]
    pub initial_price: Vec<f64>,
    /// Compare the policy against itself widened by this factor.
    #[serde(default)]
    pub compare_widened_by: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    /// CSV file with header `delta,duration,fills`.
    pub observations: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub mode: Mode,
    /// Risk aversion γ, 1/currency.
    pub gamma: f64,
    pub xi: XiChoice,
    /// Horizon T, seconds.
    pub horizon: f64,
    pub assets: Vec<AssetConfig>,
    /// Correlation matrix (d×d); optional for one asset.
    #[serde(default)]
    pub correlation: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub terminal_penalty: PenaltyConfig,
    /// Quadratic terminal penalty matrix for multi-asset runs.
    #[serde(default)]
    pub terminal_penalty_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub simulation: Option<SimulationSection>,
    #[serde(default)]
    pub calibration: Option<CalibrationSection>,
    /// Notional used to print offsets in basis points.
    #[serde(default = "default_notional")]
    pub bps_notional: f64,
}

fn default_notional() -> f64 {
    1.0
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("schema: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |what: String| Err(CliError::Config(what));
        if self.version != CONFIG_VERSION {
            return fail(format!("version: expected {CONFIG_VERSION}, got {}", self.version));
        }
        if !(self.gamma > 0.0) {
            return fail(format!("gamma: must be > 0, got {}", self.gamma));
        }
        if !(self.horizon > 0.0) {
            return fail(format!("horizon: must be > 0, got {}", self.horizon));
        }
        if let XiChoice::Value(v) = self.xi {
            if !(v >= 0.0) {
                return fail(format!("xi: must be >= 0, got {v}"));
            }
        }
        if self.assets.is_empty() {
            return fail("assets: at least one asset required".into());
        }
        for (i, a) in self.assets.iter().enumerate() {
            if !(a.sigma >= 0.0) {
                return fail(format!("assets[{i}].sigma: must be >= 0"));
            }
            if !(a.intensity_a > 0.0) || !(a.intensity_k > 0.0) {
                return fail(format!("assets[{i}]: intensity parameters must be > 0"));
            }
            if !(a.trade_size > 0.0) {
                return fail(format!("assets[{i}].trade_size: must be > 0"));
            }
            if a.inventory_bound_steps == 0 {
                return fail(format!("assets[{i}].inventory_bound_steps: must be >= 1"));
            }
        }
        let d = self.assets.len();
        match (&self.correlation, d) {
            (None, 1) => {}
            (None, _) => return fail("correlation: required for more than one asset".into()),
            (Some(c), _) => {
                if c.len() != d || c.iter().any(|r| r.len() != d) {
                    return fail(format!("correlation: must be {d}x{d}"));
                }
                for i in 0..d {
                    if (c[i][i] - 1.0).abs() > 1e-12 {
                        return fail(format!("correlation[{i}][{i}]: diagonal must be 1"));
                    }
                    for j in 0..d {
                        if (c[i][j] - c[j][i]).abs() > 1e-12 || c[i][j].abs() > 1.0 {
                            return fail(format!("correlation[{i}][{j}]: invalid entry"));
                        }
                    }
                }
            }
        }
        if !(self.numerics.dt > 0.0) || !(self.numerics.dt_sim > 0.0) {
            return fail("numerics: dt and dt_sim must be > 0".into());
        }
        if self.numerics.n_paths == 0 {
            return fail("numerics.n_paths: must be >= 1".into());
        }
        if self.mode == Mode::Calibrate && self.calibration.is_none() {
            return fail("calibration: section required in calibrate mode".into());
        }
        Ok(())
    }

    pub fn xi_value(&self) -> f64 {
        self.xi.resolve(self.gamma)
    }

    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let d = self.assets.len();
        let mut cov = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                let rho = if i == j {
                    1.0
                } else {
                    self.correlation.as_ref().map_or(0.0, |c| c[i][j])
                };
                cov[i][j] = rho * self.assets[i].sigma * self.assets[j].sigma;
            }
        }
        cov
    }

    pub fn single_problem(&self) -> Result<SingleAssetProblem, CliError> {
        if self.assets.len() != 1 {
            return Err(CliError::Config(format!(
                "assets: single-asset mode needs exactly one asset, got {}",
                self.assets.len()
            )));
        }
        let a = &self.assets[0];
        Ok(SingleAssetProblem {
            sigma: a.sigma,
            gamma: self.gamma,
            xi: self.xi_value(),
            delta_qty: a.trade_size,
            inventory_bound: a.inventory_bound_steps as f64 * a.trade_size,
            horizon: self.horizon,
            bid_intensity: IntensityModel::exponential(a.intensity_a, a.intensity_k)
                .map_err(|e| CliError::Config(e.to_string()))?,
            ask_intensity: IntensityModel::exponential(a.intensity_a, a.intensity_k)
                .map_err(|e| CliError::Config(e.to_string()))?,
            penalty: self.terminal_penalty.to_penalty(),
        })
    }

    pub fn multi_problem(&self) -> Result<MultiAssetProblem, CliError> {
        let assets = self
            .assets
            .iter()
            .map(|a| {
                Ok(AssetSpec {
                    bid_intensity: IntensityModel::exponential(a.intensity_a, a.intensity_k)
                        .map_err(|e| CliError::Config(e.to_string()))?,
                    ask_intensity: IntensityModel::exponential(a.intensity_a, a.intensity_k)
                        .map_err(|e| CliError::Config(e.to_string()))?,
                    delta_qty: a.trade_size,
                    inventory_bound: a.inventory_bound_steps as f64 * a.trade_size,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(MultiAssetProblem {
            assets,
            covariance: self.covariance(),
            gamma: self.gamma,
            xi: self.xi_value(),
            horizon: self.horizon,
            penalty_matrix: self.terminal_penalty_matrix.clone(),
        })
    }
}
