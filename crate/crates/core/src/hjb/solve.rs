use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::banded::BandedLu;
use super::field::{PolicyField, ValueField};
use super::grid::SolverGrid;
use crate::battery::{admissible_box, ControlAction, ControlBox};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::policy::{brute_force_min, LocalProblem, Regime, Slopes};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Also search an `N x N` lattice of the control box at every node.
    pub dense_controls: Option<usize>,
    /// Forward differences in `p` everywhere except the last row, instead of
    /// upwinding on the sign of the drift.
    pub paper_verbatim_stencil: bool,
}

#[derive(Debug, Clone)]
pub struct Solution<T> {
    pub value: ValueField<T>,
    pub policy: PolicyField<T>,
    /// `max |f_s| tau / delta`.
    pub cfl: T,
}

/// Largest state-of-charge drift magnitude times `tau / delta`.
pub fn cfl_number<T: Scalar>(config: &ModelConfig<T>, grid: &SolverGrid<T>) -> T {
    let b = &config.battery;
    let f = (b.charge_eff * b.max_charge_power).max(b.max_discharge_power / b.discharge_eff);
    f * grid.time_step / grid.s_step
}

/// Implicit operator in `p`: `I / tau + xi_p p D_p - sigma^2 / 2 D_pp`.
pub fn p_operator<T: Scalar>(
    config: &ModelConfig<T>,
    grid: &SolverGrid<T>,
    paper_verbatim: bool,
) -> BandedLu<T> {
    let n_p = grid.n_p;
    let h = grid.p_step;
    let xi = config.pv_ou.mean_reversion;
    let q = config.pv_ou.volatility * config.pv_ou.volatility / (T::lit(2.0) * h * h);
    let two = T::lit(2.0);
    let mut m = BandedLu::zeros(n_p, 2, 2);
    for n in 0..n_p {
        m.add(n, n, T::one() / grid.time_step);
        let b = xi * grid.p(n) / h;
        let last = n == n_p - 1;
        let forward = if paper_verbatim {
            !last
        } else {
            n == 0 || (!last && grid.p(n) < T::zero())
        };
        if b != T::zero() {
            if forward {
                m.add(n, n + 1, b);
                m.add(n, n, -b);
            } else {
                m.add(n, n, b);
                m.add(n, n - 1, -b);
            }
        }
        if q != T::zero() {
            // Boundary rows use one-sided second differences.
            let (c0, c1, c2) = if n == 0 {
                (n, n + 1, n + 2)
            } else if last {
                (n, n - 1, n - 2)
            } else {
                (n - 1, n, n + 1)
            };
            m.add(n, c0, -q);
            m.add(n, c1, two * q);
            m.add(n, c2, -q);
        }
    }
    m
}

/// Market data frozen at one time slice.
struct SliceData<T> {
    t: T,
    pv_shape: T,
    price: T,
    demand: T,
}

fn slice_data<T: Scalar>(config: &ModelConfig<T>, t: T) -> SliceData<T> {
    SliceData {
        t,
        pv_shape: config.pv_seasonal.eval(t),
        price: config.price(t, config.fixed_log_price),
        demand: config.demand(t, config.fixed_log_demand),
    }
}

#[derive(Debug, Clone, Copy)]
struct NodeChoice<T> {
    action: ControlAction<T>,
    regime: Regime,
    capped: bool,
    value: T,
}

/// Regime label for an arbitrary pure action.
pub fn classify<T: Scalar>(problem: &LocalProblem<T>, action: &ControlAction<T>) -> Regime {
    let tol = T::lit(1e-12);
    let c = action.discharge_power;
    let a = action.charge_fraction;
    if c > T::zero() {
        if (c - problem.control_box.max_discharge).abs() <= tol {
            Regime::DischargeFull
        } else {
            Regime::MatchDemandByDischarge
        }
    } else if a > T::zero() {
        if (a - problem.charge_cap()).abs() <= tol {
            Regime::ChargeFull
        } else {
            Regime::MatchDemandByCharge
        }
    } else {
        Regime::Idle
    }
}

#[allow(clippy::too_many_arguments)]
fn minimise_node<T: Scalar>(
    config: &ModelConfig<T>,
    grid: &SolverGrid<T>,
    data: &SliceData<T>,
    boxes: &[ControlBox<T>],
    column: &[T],
    n: usize,
    k: usize,
    dense: Option<usize>,
) -> NodeChoice<T> {
    let n_s = grid.n_s;
    let u = |k: usize| column[n * n_s + k];
    let charge = if k + 1 < n_s {
        (u(k + 1) - u(k)) / grid.s_step
    } else {
        T::zero()
    };
    let discharge = if k > 0 {
        (u(k) - u(k - 1)) / grid.s_step
    } else {
        T::zero()
    };
    let slopes = Slopes { charge, discharge };
    let production = data.pv_shape * grid.p(n).exp();
    let problem = LocalProblem::new(config, data.t, production, data.demand, data.price, boxes[k]);
    let (best, value) = problem.best_candidate(slopes);
    let mut choice = NodeChoice {
        action: best.action,
        regime: best.regime,
        capped: best.capped,
        value,
    };
    if let Some(nd) = dense {
        let (action, v) = brute_force_min(&problem, slopes, nd);
        if v < choice.value {
            choice = NodeChoice {
                action,
                regime: classify(&problem, &action),
                capped: false,
                value: v,
            };
        }
    }
    choice
}

/// Backward induction for the two-state problem from a zero terminal slice.
pub fn solve<T: Scalar>(
    config: &ModelConfig<T>,
    grid: &SolverGrid<T>,
    options: &SolveOptions,
) -> Result<Solution<T>> {
    config.validate()?;
    if !config.is_two_state() {
        return Err(Error::InvalidConfig(
            "the solver needs deterministic price and demand (zero OU parameters)".into(),
        ));
    }
    let b = &config.battery;
    if (grid.s_min - b.soc_min).abs() > T::lit(1e-12) || (grid.s_max - b.soc_max).abs() > T::lit(1e-12) {
        return Err(Error::InvalidConfig(
            "solver grid state-of-charge range differs from the battery".into(),
        ));
    }
    if (grid.horizon - config.horizon).abs() > grid.time_step * T::lit(1e-6) {
        return Err(Error::InvalidConfig("solver grid horizon differs from the config".into()));
    }
    if let Some(nd) = options.dense_controls {
        if nd < 2 {
            return Err(Error::InvalidConfig("dense control lattice needs N >= 2".into()));
        }
    }
    let cfl = cfl_number(config, grid);
    if cfl > T::one() {
        warn!("CFL number {cfl} exceeds 1: the explicit step in s can skip cells");
    }
    let lu = p_operator(config, grid, options.paper_verbatim_stencil).factor()?;

    let (n_t, n_p, n_s) = (grid.n_t, grid.n_p, grid.n_s);
    let slice_len = grid.slice_len();
    let half_cell = grid.s_step * T::lit(0.5);
    let boxes: Vec<ControlBox<T>> = (0..n_s)
        .map(|k| admissible_box(grid.s(k), b, half_cell))
        .collect::<Result<_>>()?;
    let inv_tau = T::one() / grid.time_step;

    let mut value = ValueField::zeros(*grid);
    let mut policy = PolicyField {
        grid: *grid,
        actions: vec![ControlAction::idle(); grid.len()],
        regimes: vec![Regime::Idle; grid.len()],
        capped: vec![false; grid.len()],
    };

    for i in (0..n_t).rev() {
        let data = slice_data(config, grid.time(i));
        let (head, tail) = value.values.split_at_mut(i * slice_len);
        let current = &tail[..slice_len];
        let choices: Vec<NodeChoice<T>> = (0..slice_len)
            .into_par_iter()
            .map(|idx| {
                minimise_node(
                    config,
                    grid,
                    &data,
                    &boxes,
                    current,
                    idx / n_s,
                    idx % n_s,
                    options.dense_controls,
                )
            })
            .collect();
        let base = i * slice_len;
        for (idx, ch) in choices.iter().enumerate() {
            policy.actions[base + idx] = ch.action;
            policy.regimes[base + idx] = ch.regime;
            policy.capped[base + idx] = ch.capped;
        }
        if i == 0 {
            break;
        }
        let columns: Vec<Vec<T>> = (0..n_s)
            .into_par_iter()
            .map(|k| {
                let mut rhs: Vec<T> = (0..n_p)
                    .map(|n| current[n * n_s + k] * inv_tau + choices[n * n_s + k].value)
                    .collect();
                lu.solve_in_place(&mut rhs);
                rhs
            })
            .collect();
        let prev = &mut head[(i - 1) * slice_len..];
        for (k, col) in columns.iter().enumerate() {
            for (n, v) in col.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::UnstableGrid { slice: i - 1 });
                }
                prev[n * n_s + k] = *v;
            }
        }
        if i % 200 == 0 {
            debug!("solved slice {} of {}", i - 1, n_t);
        }
    }
    Ok(Solution { value, policy, cfl })
}
