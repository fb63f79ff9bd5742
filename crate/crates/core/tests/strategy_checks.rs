//! Cross-route checks between the solver, the closed-form policy, and the
//! Monte Carlo engine on the credit-index-scale parameters.

use mm_core::closed_form::gamma_matrix;
use mm_core::hamiltonian::HamiltonianContext;
use mm_core::intensity::IntensityModel;
use mm_core::multi::{AssetSpec, MultiAssetProblem};
use mm_core::simulate::{compare_strategies, MarketSimConfig, QuotePolicy};
use mm_core::single::{solve_theta, Penalty, SingleAssetProblem};

const GAMMA: f64 = 6e-5;
const SIGMA: f64 = 5.83e-6;
const A: f64 = 9.10e-4;
const K: f64 = 1.79e4;
const DQ: f64 = 5e7;

fn problem(horizon: f64) -> SingleAssetProblem {
    SingleAssetProblem {
        sigma: SIGMA,
        gamma: GAMMA,
        xi: 0.0,
        delta_qty: DQ,
        inventory_bound: 4.0 * DQ,
        horizon,
        bid_intensity: IntensityModel::exponential(A, K).unwrap(),
        ask_intensity: IntensityModel::exponential(A, K).unwrap(),
        penalty: Penalty::Zero,
    }
}

fn sim_problem(horizon: f64) -> MultiAssetProblem {
    MultiAssetProblem {
        assets: vec![AssetSpec {
            bid_intensity: IntensityModel::exponential(A, K).unwrap(),
            ask_intensity: IntensityModel::exponential(A, K).unwrap(),
            delta_qty: DQ,
            inventory_bound: 4.0 * DQ,
        }],
        covariance: vec![vec![SIGMA * SIGMA]],
        gamma: GAMMA,
        xi: 0.0,
        horizon,
        penalty_matrix: None,
    }
}

/// The closed-form policy must perform close to the solved policy: the
/// approximations are near-optimal except at large inventories, which the
/// paths rarely visit.
#[test]
fn closed_form_policy_performs_close_to_the_solved_policy() {
    let horizon = 3600.0;
    let p = problem(horizon);
    let surface = solve_theta(&p, 1.0).unwrap();
    let solved = QuotePolicy::SolvedSingle {
        surface,
        bid: p.bid_context().unwrap(),
        ask: p.ask_context().unwrap(),
    };
    let ctx = p.bid_context().unwrap();
    let gm = gamma_matrix(&[vec![SIGMA * SIGMA]], std::slice::from_ref(&ctx)).unwrap();
    let closed = QuotePolicy::ClosedForm {
        gamma_matrix: gm,
        contexts: vec![HamiltonianContext::new(
            IntensityModel::exponential(A, K).unwrap(),
            0.0,
            DQ,
        )
        .unwrap()],
        gamma: GAMMA,
    };
    let config = MarketSimConfig {
        problem: sim_problem(horizon),
        dt_sim: 0.1,
        n_paths: 1500,
        base_seed: 77,
        initial_cash: 0.0,
        initial_inventory: vec![0.0],
        initial_price: vec![0.05],
        delta_floor: -3.5e-4,
        record_events: false,
    };
    let cmp = compare_strategies(&config, &solved, &closed).unwrap();
    let scale = cmp.first.penalized.mean.abs().max(cmp.second.penalized.mean.abs());
    let rel = cmp.penalized.mean_difference.abs() / scale;
    println!(
        "solved {:.1} vs closed-form {:.1}: difference {:.1} (se {:.1}), {:.1}% of scale",
        cmp.first.penalized.mean,
        cmp.second.penalized.mean,
        cmp.penalized.mean_difference,
        cmp.penalized.std_error,
        100.0 * rel
    );
    // the solved policy may only be better, and not by much
    assert!(
        cmp.penalized.mean_difference >= -2.0 * cmp.penalized.std_error,
        "closed form must not beat the optimum: diff {} se {}",
        cmp.penalized.mean_difference,
        cmp.penalized.std_error
    );
    assert!(
        rel < 0.25,
        "difference {:.1} is not small next to the objective scale {:.1}",
        cmp.penalized.mean_difference,
        scale
    );
}
