use super::field::ValueField;
use crate::battery::{admissible_box, ControlAction};
use crate::cost::{PolicyFunction, DEFAULT_BOUNDARY_TOLERANCE};
use crate::error::Result;
use crate::model::ModelConfig;
use crate::policy::{LocalProblem, MarginalGauges, PolicyDecision, Slopes};
use crate::scalar::Scalar;
use crate::stochastic::TimeGrid;

/// Feedback policy read off a solved value field.
///
/// At `(t, p, s)` the slopes in `s` come from the slice following `t`
/// (linear in `p`, upwinded in `s`) and the five-point candidate set is
/// minimised with the market data at `t` itself. `p` outside the lattice is
/// clamped to its edge for the slopes only.
pub struct ExtractedPolicy<'a, T> {
    pub config: &'a ModelConfig<T>,
    pub field: &'a ValueField<T>,
    pub tolerance: T,
    /// Market data at `market_start + j * market_step`.
    market: Vec<Market<T>>,
    market_start: T,
    market_step: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractedDecision<T> {
    pub decision: PolicyDecision<T>,
    pub slopes: Slopes<T>,
    pub gauges: MarginalGauges<T>,
    pub production: T,
    pub demand: T,
    pub price: T,
}

impl<'a, T: Scalar> ExtractedPolicy<'a, T> {
    pub fn new(config: &'a ModelConfig<T>, field: &'a ValueField<T>) -> Self {
        let g = &field.grid;
        let market = (0..g.n_t)
            .map(|i| market_at(config, g.time(i)))
            .collect();
        Self {
            config,
            field,
            tolerance: T::lit(DEFAULT_BOUNDARY_TOLERANCE),
            market,
            market_start: T::zero(),
            market_step: g.time_step,
        }
    }

    /// Caches market data on the simulation grid instead of the lattice
    /// times; queries off both grids are evaluated directly.
    pub fn with_market_grid(mut self, grid: &TimeGrid<T>) -> Self {
        self.market = (0..grid.count)
            .map(|j| market_at(self.config, grid.time(j)))
            .collect();
        self.market_start = grid.start;
        self.market_step = grid.step;
        self
    }

    fn market(&self, t: T) -> Market<T> {
        let r = (t - self.market_start) / self.market_step;
        if r > -T::lit(0.5) {
            let j = floor_index(r + T::lit(0.5));
            if (r - T::from_usize_lossy(j)).abs() < T::lit(1e-9) {
                if let Some(m) = self.market.get(j) {
                    return *m;
                }
            }
        }
        market_at(self.config, t)
    }

    /// Upwinded slopes in `s` at an arbitrary point.
    pub fn slopes(&self, t: T, p: T, s: T) -> Slopes<T> {
        let g = &self.field.grid;
        let eps = T::lit(1e-9);
        let j = floor_index((t / g.time_step) + eps);
        let i = (j + 1).min(g.n_t - 1);
        let rp = ((p - g.p_min) / g.p_step)
            .max(T::zero())
            .min(T::from_usize_lossy(g.n_p - 1));
        let n = floor_index(rp).min(g.n_p - 2);
        let wp = rp - T::from_usize_lossy(n);
        let cell = |c: usize| {
            let d = |n: usize| (self.field.at(i, n, c + 1) - self.field.at(i, n, c)) / g.s_step;
            d(n) * (T::one() - wp) + d(n + 1) * wp
        };
        let last_cell = g.n_s - 2;
        let rs = ((s - g.s_min) / g.s_step)
            .max(T::zero())
            .min(T::from_usize_lossy(g.n_s - 1));
        let k = floor_index(rs);
        let w = rs - T::from_usize_lossy(k);
        let (up, down) = if w <= eps {
            (k.min(last_cell), k.saturating_sub(1).min(last_cell))
        } else if w >= T::one() - eps {
            ((k + 1).min(last_cell), k.min(last_cell))
        } else {
            (k.min(last_cell), k.min(last_cell))
        };
        Slopes {
            charge: cell(up),
            discharge: cell(down),
        }
    }

    fn problem(&self, t: T, p: T, s: T) -> Result<(LocalProblem<T>, T, T, T)> {
        let c = self.config;
        let control_box = admissible_box(s, &c.battery, self.tolerance)?;
        let m = self.market(t);
        let production = if m.pv_shape > T::zero() {
            m.pv_shape * p.exp()
        } else {
            T::zero()
        };
        let problem = LocalProblem {
            production,
            demand: m.demand,
            price: m.price,
            incentive: c.incentive,
            discount: m.discount,
            battery: c.battery,
            control_box,
        };
        Ok((problem, production, m.demand, m.price))
    }

    pub fn decide(&self, t: T, p: T, s: T) -> Result<ExtractedDecision<T>> {
        let (problem, production, demand, price) = self.problem(t, p, s)?;
        let slopes = self.slopes(t, p, s);
        let (best, _) = problem.best_candidate(slopes);
        Ok(ExtractedDecision {
            decision: PolicyDecision {
                action: best.action,
                case: problem.case_label(),
                regime: best.regime,
                capped: best.capped,
            },
            slopes,
            gauges: problem.gauges(slopes),
            production,
            demand,
            price,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Market<T> {
    price: T,
    demand: T,
    pv_shape: T,
    discount: T,
}

fn market_at<T: Scalar>(config: &ModelConfig<T>, t: T) -> Market<T> {
    Market {
        price: config.price(t, config.fixed_log_price),
        demand: config.demand(t, config.fixed_log_demand),
        pv_shape: config.pv_seasonal.eval(t),
        discount: config.discount(t),
    }
}

/// `floor` for non-negative finite values; truncation avoids a libm call.
#[inline]
fn floor_index<T: Scalar>(x: T) -> usize {
    x.to_usize().unwrap_or(0)
}

impl<T: Scalar> PolicyFunction<T> for ExtractedPolicy<'_, T> {
    fn action(&self, t: T, p: T, s: T) -> ControlAction<T> {
        match self.problem(t, p, s) {
            Ok((problem, ..)) => problem.best_candidate(self.slopes(t, p, s)).0.action,
            Err(_) => ControlAction::idle(),
        }
    }
}
