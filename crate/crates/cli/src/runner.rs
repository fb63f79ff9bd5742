//! Mode dispatch: solves, approximations, simulations and calibrations,
//! with CSV/SVG artifacts written to the output directory.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use mm_core::closed_form::{approx_quotes_multi, approx_quotes_single, gamma_matrix};
use mm_core::hamiltonian::HamiltonianContext;
use mm_core::multi::{quotes_from_theta_multi, solve_theta_multi, MultiThetaSurface};
use mm_core::simulate::{
    compare_strategies, simulate_paths, MarketSimConfig, QuotePolicy, SimulationReport,
};
use mm_core::single::{quotes_from_theta, solve_theta, SingleAssetProblem, ThetaSurface};

use crate::config::{Mode, PolicyKind, RunConfig};
use crate::svg::{heatmap, line_chart, Series};
use crate::CliError;

pub fn execute(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out_dir)?;
    match config.mode {
        Mode::SolveSingle => solve_single(config, out_dir),
        Mode::SolveMulti => solve_multi(config, out_dir),
        Mode::Approx => approx(config, out_dir),
        Mode::Simulate => simulate(config, out_dir),
        Mode::Calibrate => calibrate(config, out_dir),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn opt_field(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.16e}"))
}

fn solve_single(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let problem = config.single_problem()?;
    let surface = solve_theta(&problem, config.numerics.dt)?;
    let mut theta_csv = Vec::new();
    surface.write_csv(&mut theta_csv)?;
    write_file(&out_dir.join("theta.csv"), std::str::from_utf8(&theta_csv).unwrap())?;

    let bid_ctx = problem.bid_context()?;
    let ask_ctx = problem.ask_context()?;

    // quotes against inventory at t = 0, with the closed-form approximation
    let mut csv = String::from("q,bid_offset,ask_offset,approx_bid,approx_ask\n");
    let mut bid_pts = Vec::new();
    let mut ask_pts = Vec::new();
    let mut approx_bid_pts = Vec::new();
    let mut approx_ask_pts = Vec::new();
    for &q in &surface.inventory_grid {
        let (b, a) = quotes_from_theta(&surface, &bid_ctx, &ask_ctx, 0.0, q)?;
        let (ab, aa) = approx_quotes_single(&bid_ctx, problem.sigma, problem.gamma, q)?;
        csv.push_str(&format!(
            "{q:.16e},{},{},{ab:.16e},{aa:.16e}\n",
            opt_field(b),
            opt_field(a)
        ));
        if let Some(b) = b {
            bid_pts.push((q, b));
        }
        if let Some(a) = a {
            ask_pts.push((q, a));
        }
        approx_bid_pts.push((q, ab));
        approx_ask_pts.push((q, aa));
    }
    write_file(&out_dir.join("quotes_inventory.csv"), &csv)?;
    let chart = line_chart(
        &format!("optimal offsets at t=0 ({})", config.assets[0].label),
        "inventory (asset units)",
        "offset (currency)",
        &[
            Series { label: "bid (solver)".into(), points: bid_pts.clone(), markers: true },
            Series { label: "ask (solver)".into(), points: ask_pts.clone(), markers: true },
            Series { label: "bid (closed form)".into(), points: approx_bid_pts, markers: false },
            Series { label: "ask (closed form)".into(), points: approx_ask_pts, markers: false },
        ],
    );
    write_file(&out_dir.join("quotes_inventory.svg"), &chart)?;

    // bid offsets against time per inventory level
    let samples = 361usize;
    let mut csv = String::from("t,q,bid_offset,ask_offset\n");
    let mut series = Vec::new();
    let interior = &surface.inventory_grid[..surface.inventory_grid.len() - 1];
    for &q in interior {
        let mut pts = Vec::new();
        for s in 0..samples {
            let t = problem.horizon * s as f64 / (samples - 1) as f64;
            let (b, a) = quotes_from_theta(&surface, &bid_ctx, &ask_ctx, t, q)?;
            csv.push_str(&format!("{t:.16e},{q:.16e},{},{}\n", opt_field(b), opt_field(a)));
            if let Some(b) = b {
                pts.push((t, b));
            }
        }
        series.push(Series {
            label: format!("q = {:+.0} trades", q / problem.delta_qty),
            points: pts,
            markers: false,
        });
    }
    write_file(&out_dir.join("quotes_time.csv"), &csv)?;
    let chart = line_chart(
        &format!("bid offset over time ({})", config.assets[0].label),
        "time (s)",
        "bid offset (currency)",
        &series,
    );
    write_file(&out_dir.join("quotes_time.svg"), &chart)?;

    print_bps_table(config, &problem, &surface, &bid_ctx, &ask_ctx)?;
    Ok(())
}

fn print_bps_table(
    config: &RunConfig,
    problem: &SingleAssetProblem,
    surface: &ThetaSurface,
    bid_ctx: &HamiltonianContext,
    ask_ctx: &HamiltonianContext,
) -> Result<(), CliError> {
    let notional = config.bps_notional;
    println!(
        "offsets at t=0 in bps of a {notional} notional ({}):",
        config.assets[0].label
    );
    println!("{:>10} {:>12} {:>12}", "q/trades", "bid (bp)", "ask (bp)");
    for &q in &surface.inventory_grid {
        let (b, a) = quotes_from_theta(surface, bid_ctx, ask_ctx, 0.0, q)?;
        let as_bp = |v: Option<f64>| {
            v.map_or("-".to_string(), |x| format!("{:.4}", x / notional * 1e4))
        };
        println!(
            "{:>10} {:>12} {:>12}",
            format!("{:+.0}", q / problem.delta_qty),
            as_bp(b),
            as_bp(a)
        );
    }
    Ok(())
}

fn solve_multi(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let problem = config.multi_problem()?;
    let surface = solve_theta_multi(&problem, config.numerics.dt)?;
    let mut theta_csv = Vec::new();
    surface.write_csv(&mut theta_csv)?;
    write_file(&out_dir.join("theta.csv"), std::str::from_utf8(&theta_csv).unwrap())?;

    let contexts = problem.contexts()?;
    write_file(
        &out_dir.join("quotes.csv"),
        &multi_quote_table(&surface, &contexts)?,
    )?;

    if problem.dim() == 2 {
        for asset in 0..2 {
            let values = bid_surface(&surface, &contexts, asset)?;
            let chart = heatmap(
                &format!("bid offset of {} at t=0", config.assets[asset].label),
                &format!("{} inventory", config.assets[0].label),
                &format!("{} inventory", config.assets[1].label),
                &surface.axes[0],
                &surface.axes[1],
                &values,
            );
            write_file(
                &out_dir.join(format!("bid_surface_{}.svg", config.assets[asset].label)),
                &chart,
            )?;
        }
    }
    Ok(())
}

/// `q1,...,qd,asset,bid_offset,ask_offset` at t = 0 in lexicographic node
/// order.
fn multi_quote_table(
    surface: &MultiThetaSurface,
    contexts: &[(HamiltonianContext, HamiltonianContext)],
) -> Result<String, CliError> {
    let d = surface.axes.len();
    let mut csv = String::from("");
    for i in 1..=d {
        csv.push_str(&format!("q{i},"));
    }
    csv.push_str("asset,bid_offset,ask_offset\n");
    let mut idx = vec![0usize; d];
    loop {
        let q: Vec<f64> = idx.iter().enumerate().map(|(a, &i)| surface.axes[a][i]).collect();
        let quotes = quotes_from_theta_multi(surface, contexts, 0.0, &q)?;
        for (asset, (b, a)) in quotes.iter().enumerate() {
            for v in &q {
                csv.push_str(&format!("{v:.16e},"));
            }
            csv.push_str(&format!("{asset},{},{}\n", opt_field(*b), opt_field(*a)));
        }
        // lexicographic increment
        let mut axis = d;
        for a in (0..d).rev() {
            idx[a] += 1;
            if idx[a] < surface.axes[a].len() {
                axis = a;
                break;
            }
            idx[a] = 0;
        }
        if axis == d {
            break;
        }
    }
    Ok(csv)
}

/// Bid offsets of one asset over a 2-asset inventory grid at t = 0, with
/// the suppressed boundary shown at the adjacent interior value.
fn bid_surface(
    surface: &MultiThetaSurface,
    contexts: &[(HamiltonianContext, HamiltonianContext)],
    asset: usize,
) -> Result<Vec<Vec<f64>>, CliError> {
    let (n1, n2) = (surface.axes[0].len(), surface.axes[1].len());
    let mut values = vec![vec![0.0; n2]; n1];
    for i in 0..n1 {
        for j in 0..n2 {
            let q = [surface.axes[0][i], surface.axes[1][j]];
            let quotes = quotes_from_theta_multi(surface, contexts, 0.0, &q)?;
            values[i][j] = match quotes[asset].0 {
                Some(b) => b,
                None => {
                    let inner = if asset == 0 {
                        [surface.axes[0][i - 1], q[1]]
                    } else {
                        [q[0], surface.axes[1][j - 1]]
                    };
                    quotes_from_theta_multi(surface, contexts, 0.0, &inner)?[asset].0.unwrap()
                }
            };
        }
    }
    Ok(values)
}

fn approx(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let problem = config.multi_problem()?;
    let contexts: Vec<HamiltonianContext> =
        problem.contexts()?.into_iter().map(|(b, _)| b).collect();
    let gm = gamma_matrix(&problem.covariance, &contexts)?;

    let d = problem.dim();
    let axes: Vec<Vec<f64>> = problem
        .assets
        .iter()
        .map(|a| {
            let m = (a.inventory_bound / a.delta_qty).round() as i64;
            (-m..=m).map(|j| j as f64 * a.delta_qty).collect()
        })
        .collect();

    let mut csv = String::new();
    for i in 1..=d {
        csv.push_str(&format!("q{i},"));
    }
    csv.push_str("asset,bid_offset,ask_offset\n");
    let mut idx = vec![0usize; d];
    let mut d1_series: Vec<(f64, f64, f64)> = Vec::new();
    loop {
        let q: Vec<f64> = idx.iter().enumerate().map(|(a, &i)| axes[a][i]).collect();
        for asset in 0..d {
            let (b, a) = approx_quotes_multi(&gm, &contexts, problem.gamma, &q, asset)?;
            for v in &q {
                csv.push_str(&format!("{v:.16e},"));
            }
            csv.push_str(&format!("{asset},{b:.16e},{a:.16e}\n"));
            if d == 1 {
                d1_series.push((q[0], b, a));
            }
        }
        let mut axis = d;
        for a in (0..d).rev() {
            idx[a] += 1;
            if idx[a] < axes[a].len() {
                axis = a;
                break;
            }
            idx[a] = 0;
        }
        if axis == d {
            break;
        }
    }
    write_file(&out_dir.join("approx_quotes.csv"), &csv)?;

    if d == 1 {
        let chart = line_chart(
            &format!("closed-form offsets ({})", config.assets[0].label),
            "inventory (asset units)",
            "offset (currency)",
            &[
                Series {
                    label: "bid".into(),
                    points: d1_series.iter().map(|&(q, b, _)| (q, b)).collect(),
                    markers: false,
                },
                Series {
                    label: "ask".into(),
                    points: d1_series.iter().map(|&(q, _, a)| (q, a)).collect(),
                    markers: false,
                },
            ],
        );
        write_file(&out_dir.join("approx_quotes.svg"), &chart)?;
    }
    Ok(())
}

fn build_policy(config: &RunConfig) -> Result<QuotePolicy, CliError> {
    let section = config.simulation.clone().unwrap_or_default();
    let problem = config.multi_problem()?;
    Ok(match section.policy {
        PolicyKind::Solved => {
            if problem.dim() == 1 {
                let sp = config.single_problem()?;
                let surface = solve_theta(&sp, config.numerics.dt)?;
                QuotePolicy::SolvedSingle {
                    surface,
                    bid: sp.bid_context()?,
                    ask: sp.ask_context()?,
                }
            } else {
                let surface = solve_theta_multi(&problem, config.numerics.dt)?;
                QuotePolicy::SolvedMulti { surface, contexts: problem.contexts()? }
            }
        }
        PolicyKind::ClosedForm => {
            let contexts: Vec<HamiltonianContext> =
                problem.contexts()?.into_iter().map(|(b, _)| b).collect();
            let gm = gamma_matrix(&problem.covariance, &contexts)?;
            QuotePolicy::ClosedForm { gamma_matrix: gm, contexts, gamma: problem.gamma }
        }
        PolicyKind::Constant => {
            if section.constant_offsets.len() != problem.dim() {
                return Err(CliError::Config(
                    "simulation.constant_offsets: one (bid, ask) pair per asset required".into(),
                ));
            }
            QuotePolicy::ConstantOffsets { offsets: section.constant_offsets.clone() }
        }
    })
}

fn sim_config(config: &RunConfig) -> Result<MarketSimConfig, CliError> {
    let section = config.simulation.clone().unwrap_or_default();
    let problem = config.multi_problem()?;
    let d = problem.dim();
    let floor = config.numerics.delta_floor.unwrap_or_else(|| {
        // default envelope: five decay lengths through the reference price
        config.assets.iter().map(|a| -5.0 / a.intensity_k).fold(f64::INFINITY, f64::min)
    });
    let zeros = vec![0.0; d];
    let initial_inventory = if section.initial_inventory.is_empty() {
        zeros.clone()
    } else {
        section.initial_inventory.clone()
    };
    let initial_price = if section.initial_price.is_empty() {
        zeros
    } else {
        section.initial_price.clone()
    };
    Ok(MarketSimConfig {
        problem,
        dt_sim: config.numerics.dt_sim,
        n_paths: config.numerics.n_paths,
        base_seed: config.numerics.seed,
        initial_cash: section.initial_cash,
        initial_inventory,
        initial_price,
        delta_floor: floor,
        record_events: section.record_events,
    })
}

fn report_json(report: &SimulationReport) -> serde_json::Value {
    serde_json::json!({
        "n_paths": report.outcomes.len(),
        "cara_utility": { "mean": report.cara.mean, "std_error": report.cara.std_error },
        "certainty_equivalent": report.certainty_equivalent,
        "penalized_value": { "mean": report.penalized.mean, "std_error": report.penalized.std_error },
    })
}

fn simulate(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let policy = build_policy(config)?;
    let sim = sim_config(config)?;
    let section = config.simulation.clone().unwrap_or_default();

    let json = if let Some(factor) = section.compare_widened_by {
        let widened = QuotePolicy::Scaled { inner: Box::new(policy.clone()), factor };
        let cmp = compare_strategies(&sim, &policy, &widened)?;
        if sim.record_events {
            let mut buf = Vec::new();
            cmp.first.write_event_log(&mut buf)?;
            write_file(&out_dir.join("events.csv"), std::str::from_utf8(&buf).unwrap())?;
        }
        println!(
            "penalized objective: policy {:.6e} / widened {:.6e} / paired difference {:.6e} (se {:.3e})",
            cmp.first.penalized.mean,
            cmp.second.penalized.mean,
            cmp.penalized.mean_difference,
            cmp.penalized.std_error
        );
        serde_json::json!({
            "policy": report_json(&cmp.first),
            "widened": report_json(&cmp.second),
            "widen_factor": factor,
            "paired_difference": {
                "cara_utility": { "mean": cmp.cara.mean_difference, "std_error": cmp.cara.std_error },
                "penalized_value": { "mean": cmp.penalized.mean_difference, "std_error": cmp.penalized.std_error },
            },
        })
    } else {
        let report = simulate_paths(&sim, &policy)?;
        if sim.record_events {
            let mut buf = Vec::new();
            report.write_event_log(&mut buf)?;
            write_file(&out_dir.join("events.csv"), std::str::from_utf8(&buf).unwrap())?;
        }
        println!(
            "cara utility {:.6e} (se {:.3e}), certainty equivalent {:.6e}, penalized value {:.6e} (se {:.3e})",
            report.cara.mean,
            report.cara.std_error,
            report.certainty_equivalent,
            report.penalized.mean,
            report.penalized.std_error
        );
        report_json(&report)
    };
    write_file(&out_dir.join("report.json"), &format!("{:#}\n", json))?;
    Ok(())
}

fn calibrate(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let section = config.calibration.as_ref().expect("validated");
    let file = fs::File::open(&section.observations)?;
    let observations = mm_core::calibrate::read_exposures_csv(BufReader::new(file))?;
    let fit = mm_core::calibrate::fit_exponential_intensity(&observations)?;
    println!(
        "fitted exponential intensity: A = {:.6e} /s, k = {:.6e} /currency (log-likelihood {:.6})",
        fit.a, fit.k, fit.log_likelihood
    );
    let json = serde_json::json!({
        "a": fit.a,
        "k": fit.k,
        "log_likelihood": fit.log_likelihood,
        "observations": observations.len(),
    });
    write_file(&out_dir.join("fit.json"), &format!("{:#}\n", json))?;
    Ok(())
}
