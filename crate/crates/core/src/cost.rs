//! Running cost with the self-consumption incentive, and Monte Carlo
//! evaluation of the total cost of a feedback strategy.

use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::battery::{admissible_box, check_action, fit_to_step, purify, step_soc_unchecked, ControlAction};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::scalar::{mean_and_standard_error, CompensatedSum, Scalar};
use crate::stochastic::{factor_params, path_rng, OuStepper, TimeGrid, PV};

/// Power sold to the grid, `(1 - a) P + c`.
#[inline]
pub fn sold_power<T: Scalar>(a: T, c: T, p: T) -> T {
    (T::one() - a) * p + c
}

/// Discounted cost rates in EUR/h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CostRate<T> {
    /// Purchases minus sales.
    pub gross: T,
    /// Incentive earned on virtually self-consumed energy.
    pub incentive_rate: T,
    pub net: T,
}

/// Cost rate at levels `X` (EUR/MWh), `D` and `P` (MW).
pub fn running_cost_levels<T: Scalar>(
    t: T,
    price: T,
    demand: T,
    production: T,
    action: &ControlAction<T>,
    config: &ModelConfig<T>,
) -> CostRate<T> {
    let e = sold_power(action.charge_fraction, action.discharge_power, production);
    let disc = config.discount(t);
    let gross = disc * price * (demand - e);
    let incentive_rate = disc * config.incentive * demand.min(e);
    CostRate {
        gross,
        incentive_rate,
        net: gross - incentive_rate,
    }
}

/// Cost rate at log-levels `(x, d, p)`.
pub fn running_cost<T: Scalar>(
    t: T,
    x: T,
    d: T,
    p: T,
    action: &ControlAction<T>,
    config: &ModelConfig<T>,
) -> CostRate<T> {
    running_cost_levels(
        t,
        config.price(t, x),
        config.demand(t, d),
        config.pv(t, p),
        action,
        config,
    )
}

/// Feedback strategy `(t, p, s) -> (a, c)` with `p` the pv log-level.
pub trait PolicyFunction<T>: Sync {
    fn action(&self, t: T, p: T, s: T) -> ControlAction<T>;
}

impl<T, F> PolicyFunction<T> for F
where
    F: Fn(T, T, T) -> ControlAction<T> + Sync,
{
    fn action(&self, t: T, p: T, s: T) -> ControlAction<T> {
        self(t, p, s)
    }
}

pub const DEFAULT_BOUNDARY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings<T> {
    /// Replace simultaneous charge/discharge by the purified action.
    pub purify: bool,
    /// Shrink actions that would leave the operating range within one step.
    pub fit_to_step: bool,
    /// Width of the boundary bands of the admissible sets.
    pub boundary_tolerance: T,
    /// Largest state-of-charge clamp accepted per step.
    pub clamp_tolerance: T,
}

impl<T: Scalar> Default for McSettings<T> {
    fn default() -> Self {
        Self {
            purify: true,
            fit_to_step: true,
            boundary_tolerance: T::lit(DEFAULT_BOUNDARY_TOLERANCE),
            clamp_tolerance: T::lit(DEFAULT_BOUNDARY_TOLERANCE),
        }
    }
}

/// Starting point of a Monte Carlo evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McStart<T> {
    pub t0: T,
    pub x0: T,
    pub d0: T,
    pub p0: T,
    pub s0: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct McEstimate<T> {
    /// EUR.
    pub mean: T,
    pub standard_error: T,
    pub n_paths: usize,
}

fn check_grid<T: Scalar>(start: &McStart<T>, config: &ModelConfig<T>, grid: &TimeGrid<T>) -> Result<()> {
    let tol = grid.step * T::lit(1e-6);
    if (grid.start - start.t0).abs() > tol || (grid.end() - config.horizon).abs() > tol {
        return Err(Error::InvalidConfig(format!(
            "grid [{}, {}] must span [t0, T] = [{}, {}]",
            grid.start,
            grid.end(),
            start.t0,
            config.horizon
        )));
    }
    let b = &config.battery;
    if !(start.s0 >= b.soc_min && start.s0 <= b.soc_max) {
        return Err(Error::SocOutOfRange {
            soc: start.s0.as_f64(),
            min: b.soc_min.as_f64(),
            max: b.soc_max.as_f64(),
            tolerance: 0.0,
        });
    }
    Ok(())
}

/// Deterministic factors at the grid times, shared by all paths.
struct GridTables<T> {
    log_price: Vec<T>,
    log_demand: Vec<T>,
    /// Levels along the path when the factor is frozen at its start value.
    frozen_price: Option<Vec<T>>,
    frozen_demand: Option<Vec<T>>,
    pv_shape: Vec<T>,
    discount: Vec<T>,
}

impl<T: Scalar> GridTables<T> {
    fn new(config: &ModelConfig<T>, grid: &TimeGrid<T>, start: &McStart<T>) -> Self {
        let times: Vec<T> = (0..grid.count).map(|j| grid.time(j)).collect();
        let log_price: Vec<T> = times.iter().map(|&t| config.price_seasonal.log_eval(t)).collect();
        let log_demand: Vec<T> = times.iter().map(|&t| config.demand_seasonal.log_eval(t)).collect();
        let frozen = |frozen: bool, logs: &[T], u0: T| {
            frozen.then(|| logs.iter().map(|&l| (l + u0).exp()).collect())
        };
        Self {
            frozen_price: frozen(config.price_ou.is_frozen(), &log_price, start.x0),
            frozen_demand: frozen(config.demand_ou.is_frozen(), &log_demand, start.d0),
            log_price,
            log_demand,
            pv_shape: times.iter().map(|&t| config.pv_seasonal.eval(t)).collect(),
            discount: times.iter().map(|&t| config.discount(t)).collect(),
        }
    }
}

/// Paths advanced together one time step at a time, so that the policy's
/// lookups for a step stay in cache across the block.
const PATH_BLOCK: usize = 64;

struct PathState<T> {
    rng: ChaCha8Rng,
    u: [T; 3],
    s: T,
    cost: CompensatedSum<T>,
}

#[allow(clippy::too_many_arguments)]
fn block_costs<T: Scalar, P: PolicyFunction<T> + ?Sized>(
    start: &McStart<T>,
    policy: &P,
    config: &ModelConfig<T>,
    grid: &TimeGrid<T>,
    tables: &GridTables<T>,
    seed: u64,
    paths: std::ops::Range<usize>,
    settings: &McSettings<T>,
) -> Result<Vec<T>> {
    let spec = &config.battery;
    let dt = grid.step;
    let stepper = OuStepper::new(&factor_params(config), &config.noise_correlation, dt);
    let active = stepper.active();
    let tol = settings.clamp_tolerance.max(settings.boundary_tolerance);
    let mut states: Vec<PathState<T>> = paths
        .map(|path| PathState {
            rng: path_rng(seed, path),
            u: [start.x0, start.d0, start.p0],
            s: start.s0,
            cost: CompensatedSum::new(),
        })
        .collect();
    for j in 0..grid.count - 1 {
        let t = grid.time(j);
        let shape = tables.pv_shape[j];
        for st in states.iter_mut() {
            let (u, s) = (st.u, st.s);
            let production = if shape > T::zero() { shape * u[PV].exp() } else { T::zero() };
            let mut action = policy.action(t, u[PV], s);
            let violation = |reason: String| Error::PolicyViolation {
                t: t.as_f64(),
                soc: s.as_f64(),
                reason,
            };
            check_action(&action, s, production, spec, settings.boundary_tolerance)
                .map_err(|e| violation(e.to_string()))?;
            if settings.purify {
                action = purify(&action, production, spec);
            }
            if settings.fit_to_step {
                action = fit_to_step(&action, s, production, dt, spec);
            }
            let price = match &tables.frozen_price {
                Some(levels) => levels[j],
                None => (tables.log_price[j] + u[0]).exp(),
            };
            let demand = match &tables.frozen_demand {
                Some(levels) => levels[j],
                None => (tables.log_demand[j] + u[1]).exp(),
            };
            let e = sold_power(action.charge_fraction, action.discharge_power, production);
            let rate = tables.discount[j] * (price * (demand - e) - config.incentive * demand.min(e));
            st.cost.add(rate * dt);
            st.s = step_soc_unchecked(s, &action, production, dt, spec, tol)
                .map_err(|e| violation(e.to_string()))?
                .soc;
            let mut z = [T::zero(); 3];
            for (zi, on) in z.iter_mut().zip(active) {
                if on {
                    *zi = T::standard_normal(&mut st.rng);
                }
            }
            st.u = stepper.step(u, z);
        }
    }
    Ok(states.iter().map(|st| st.cost.total()).collect())
}

/// Per-path total costs under common random numbers: path `i` uses the same
/// noise for every policy evaluated with the same seed.
#[allow(clippy::too_many_arguments)]
pub fn mc_path_costs<T: Scalar, P: PolicyFunction<T> + ?Sized>(
    start: &McStart<T>,
    policy: &P,
    config: &ModelConfig<T>,
    grid: &TimeGrid<T>,
    n_paths: usize,
    seed: u64,
    settings: &McSettings<T>,
) -> Result<Vec<T>> {
    if n_paths == 0 {
        return Err(Error::InvalidConfig("need at least one path".into()));
    }
    check_grid(start, config, grid)?;
    admissible_box(start.s0, &config.battery, T::zero())?;
    let tables = GridTables::new(config, grid, start);
    let blocks: Vec<Vec<T>> = (0..n_paths.div_ceil(PATH_BLOCK))
        .into_par_iter()
        .map(|b| {
            let paths = b * PATH_BLOCK..((b + 1) * PATH_BLOCK).min(n_paths);
            block_costs(start, policy, config, grid, &tables, seed, paths, settings)
        })
        .collect::<Result<_>>()?;
    Ok(blocks.concat())
}

/// Sample mean and standard error of the total discounted cost.
#[allow(clippy::too_many_arguments)]
pub fn mc_cost<T: Scalar, P: PolicyFunction<T> + ?Sized>(
    start: &McStart<T>,
    policy: &P,
    config: &ModelConfig<T>,
    grid: &TimeGrid<T>,
    n_paths: usize,
    seed: u64,
    settings: &McSettings<T>,
) -> Result<McEstimate<T>> {
    let costs = mc_path_costs(start, policy, config, grid, n_paths, seed, settings)?;
    let (mean, standard_error) = mean_and_standard_error(&costs);
    Ok(McEstimate {
        mean,
        standard_error,
        n_paths,
    })
}

/// Reference strategies that ignore the value function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Never touches the battery.
    Idle,
    /// Discharges at full power whenever allowed.
    AlwaysDischarge,
    /// Battery absent: the same as idle, reported separately.
    NoBattery,
    /// Discharges when demand exceeds production, charges surplus otherwise.
    GreedySell,
}

impl Baseline {
    pub const ALL: [Baseline; 4] = [
        Baseline::Idle,
        Baseline::AlwaysDischarge,
        Baseline::NoBattery,
        Baseline::GreedySell,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Baseline::Idle => "always-idle",
            Baseline::AlwaysDischarge => "always-discharge",
            Baseline::NoBattery => "no-battery",
            Baseline::GreedySell => "greedy-sell",
        }
    }
}

/// A [`Baseline`] bound to a configuration.
pub struct BaselinePolicy<'a, T> {
    pub kind: Baseline,
    pub config: &'a ModelConfig<T>,
    pub tolerance: T,
}

impl<'a, T: Scalar> BaselinePolicy<'a, T> {
    pub fn new(kind: Baseline, config: &'a ModelConfig<T>) -> Self {
        Self {
            kind,
            config,
            tolerance: T::lit(DEFAULT_BOUNDARY_TOLERANCE),
        }
    }
}

impl<T: Scalar> PolicyFunction<T> for BaselinePolicy<'_, T> {
    fn action(&self, t: T, p: T, s: T) -> ControlAction<T> {
        let spec = &self.config.battery;
        let Ok(bx) = admissible_box(s, spec, self.tolerance) else {
            return ControlAction::idle();
        };
        match self.kind {
            Baseline::Idle | Baseline::NoBattery => ControlAction::idle(),
            Baseline::AlwaysDischarge => ControlAction::new(T::zero(), bx.max_discharge),
            Baseline::GreedySell => {
                let production = self.config.pv(t, p);
                let demand = self.config.demand(t, self.config.fixed_log_demand);
                if demand > production {
                    ControlAction::new(T::zero(), bx.max_discharge.min(demand - production))
                } else if production > T::zero() && bx.can_charge() {
                    let cap = crate::battery::max_charge_fraction(production, spec);
                    ControlAction::new(((production - demand) / production).min(cap), T::zero())
                } else {
                    ControlAction::idle()
                }
            }
        }
    }
}
