//! Exact simulation of the log-level Ornstein-Uhlenbeck factors and
//! calibration of seasonal curves and OU parameters from time series.

mod calibrate;
mod series;

pub use calibrate::{
    fit_harmonic, fit_ou, fit_ou_segments, fit_pv_seasonal, HarmonicFit, OuFit, PvFit,
    PV_NIGHT_THRESHOLD_MW,
};
pub use series::SeriesSample;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, OuParams};
use crate::scalar::Scalar;

/// Component order of every state vector: price, demand, pv.
pub const PRICE: usize = 0;
pub const DEMAND: usize = 1;
pub const PV: usize = 2;

/// Uniform time grid `start + j * step`, `j < count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TimeGrid<T> {
    pub start: T,
    pub step: T,
    pub count: usize,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(start: T, step: T, count: usize) -> Result<Self> {
        if !(step > T::zero()) || !step.is_finite() {
            return Err(Error::InvalidConfig("time step must be > 0".into()));
        }
        if count < 2 {
            return Err(Error::InvalidConfig("time grid needs at least 2 nodes".into()));
        }
        Ok(Self { start, step, count })
    }

    /// Grid from `start` to `end` whose step is the largest value not above
    /// `max_step` that divides the interval evenly.
    pub fn spanning(start: T, end: T, max_step: T) -> Result<Self> {
        if !(end > start) {
            return Err(Error::InvalidConfig("grid end must exceed start".into()));
        }
        let span = end - start;
        let intervals = (span / max_step - T::lit(1e-9)).ceil().max(T::one());
        let n = intervals.to_usize().unwrap_or(1);
        Self::new(start, span / T::from_usize_lossy(n), n + 1)
    }

    #[inline]
    pub fn time(&self, j: usize) -> T {
        self.start + self.step * T::from_usize_lossy(j)
    }

    pub fn end(&self) -> T {
        self.time(self.count - 1)
    }
}

/// Simulated log-levels, laid out `[path][time][component]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePathSet<T> {
    pub grid: TimeGrid<T>,
    pub n_paths: usize,
    pub seed: u64,
    pub data: Vec<T>,
}

impl<T: Scalar> SamplePathSet<T> {
    #[inline]
    pub fn state(&self, path: usize, j: usize) -> [T; 3] {
        let o = (path * self.grid.count + j) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn path(&self, path: usize) -> &[T] {
        let len = self.grid.count * 3;
        &self.data[path * len..(path + 1) * len]
    }
}

/// One exact OU transition of all three factors over `dt`.
///
/// Component `i` becomes `u_i e^{-xi_i dt} + s_i (L z)_i` where `s_i` is the
/// exact conditional standard deviation and `L` the correlation factor.
pub fn ou_step_exact<T: Scalar>(
    u: [T; 3],
    params: &[OuParams<T>; 3],
    corr: &[[T; 3]; 3],
    dt: T,
    z: [T; 3],
) -> [T; 3] {
    let mut out = u;
    for i in 0..3 {
        let p = &params[i];
        if p.is_frozen() {
            continue;
        }
        let noise = (0..=i).fold(T::zero(), |acc, j| acc + corr[i][j] * z[j]);
        out[i] = u[i] * p.decay(dt) + p.conditional_std(dt) * noise;
    }
    out
}

/// [`ou_step_exact`] with the decay and conditional deviations precomputed
/// for a fixed `dt`.
#[derive(Debug, Clone, Copy)]
pub struct OuStepper<T> {
    active: [bool; 3],
    decay: [T; 3],
    std: [T; 3],
    corr: [[T; 3]; 3],
}

impl<T: Scalar> OuStepper<T> {
    pub fn new(params: &[OuParams<T>; 3], corr: &[[T; 3]; 3], dt: T) -> Self {
        Self {
            active: params.map(|p| !p.is_frozen()),
            decay: params.map(|p| p.decay(dt)),
            std: params.map(|p| p.conditional_std(dt)),
            corr: *corr,
        }
    }

    /// Components that consume a normal draw.
    pub fn active(&self) -> [bool; 3] {
        self.active
    }

    #[inline]
    pub fn step(&self, u: [T; 3], z: [T; 3]) -> [T; 3] {
        let mut out = u;
        for i in 0..3 {
            if !self.active[i] {
                continue;
            }
            let noise = (0..=i).fold(T::zero(), |acc, j| acc + self.corr[i][j] * z[j]);
            out[i] = u[i] * self.decay[i] + self.std[i] * noise;
        }
        out
    }
}

/// Factor parameters in component order.
pub fn factor_params<T: Scalar>(config: &ModelConfig<T>) -> [OuParams<T>; 3] {
    [config.price_ou, config.demand_ou, config.pv_ou]
}

/// Initial log-levels `(x, d, p)` taken from the configuration.
pub fn initial_state<T: Scalar>(config: &ModelConfig<T>) -> [T; 3] {
    [
        config.fixed_log_price,
        config.fixed_log_demand,
        config.initial_log_pv,
    ]
}

/// Per-path random stream: ChaCha with the path index as stream id, so that
/// paths are independent of how work is scheduled.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Fills `out` (length `grid.count * 3`) with path number `path`.
pub fn simulate_path_into<T: Scalar>(
    config: &ModelConfig<T>,
    grid: &TimeGrid<T>,
    start: [T; 3],
    seed: u64,
    path: usize,
    out: &mut [T],
) {
    debug_assert_eq!(out.len(), grid.count * 3);
    let stepper = OuStepper::new(&factor_params(config), &config.noise_correlation, grid.step);
    let mut rng = path_rng(seed, path);
    let mut u = start;
    out[..3].copy_from_slice(&u);
    for j in 1..grid.count {
        let z = [
            T::standard_normal(&mut rng),
            T::standard_normal(&mut rng),
            T::standard_normal(&mut rng),
        ];
        u = stepper.step(u, z);
        out[j * 3..j * 3 + 3].copy_from_slice(&u);
    }
}

/// Simulates `n_paths` trajectories from the configured initial log-levels.
pub fn simulate_paths<T: Scalar>(
    config: &ModelConfig<T>,
    grid: &TimeGrid<T>,
    n_paths: usize,
    seed: u64,
) -> Result<SamplePathSet<T>> {
    simulate_paths_from(config, grid, initial_state(config), n_paths, seed)
}

pub fn simulate_paths_from<T: Scalar>(
    config: &ModelConfig<T>,
    grid: &TimeGrid<T>,
    start: [T; 3],
    n_paths: usize,
    seed: u64,
) -> Result<SamplePathSet<T>> {
    if n_paths == 0 {
        return Err(Error::InvalidConfig("need at least one path".into()));
    }
    let len = grid.count * 3;
    let mut data = vec![T::zero(); n_paths * len];
    data.par_chunks_mut(len)
        .enumerate()
        .for_each(|(path, out)| simulate_path_into(config, grid, start, seed, path, out));
    Ok(SamplePathSet {
        grid: *grid,
        n_paths,
        seed,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{defaults, expected_pv};
    use crate::scalar::mean_and_standard_error;
    use approx::assert_relative_eq;

    fn pv_params() -> [OuParams<f64>; 3] {
        [OuParams::frozen(), OuParams::frozen(), defaults::pv_ou()]
    }

    #[test]
    fn frozen_factors_are_unchanged() {
        let params = [OuParams::<f64>::frozen(); 3];
        let u = [0.3, -0.2, 1.1];
        let out = ou_step_exact(u, &params, &crate::model::identity3(), 0.5, [1.0, -2.0, 0.7]);
        assert_eq!(out, u);
    }

    #[test]
    fn exact_mean_decay_one_day() {
        let out = ou_step_exact(
            [0.0, 0.0, 1.0],
            &pv_params(),
            &crate::model::identity3(),
            24.0,
            [0.0; 3],
        );
        assert_relative_eq!(out[PV], (-2f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(out[PV], 0.1353352832366127, max_relative = 1e-12);
    }

    #[test]
    fn conditional_variance_matches_closed_form() {
        let params = pv_params();
        let dt = 24.0;
        let n = 100_000;
        let mut rng = path_rng(11, 0);
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let z = [0.0, 0.0, f64::standard_normal(&mut rng)];
                ou_step_exact([0.0; 3], &params, &crate::model::identity3(), dt, z)[PV]
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let ou = params[PV];
        let exact = ou.volatility.powi(2) * (1.0 - (-2.0 * ou.mean_reversion * dt).exp())
            / (2.0 * ou.mean_reversion);
        // Var of the sample variance of a Gaussian: 2 s^4 / (n - 1).
        let se = exact * (2.0 / (n - 1) as f64).sqrt();
        assert!((var - exact).abs() < 3.0 * se, "{var} vs {exact} (se {se})");
    }

    #[test]
    fn correlated_noise_has_requested_correlation() {
        let rho: f64 = 0.6;
        let corr = [[1.0, 0.0, 0.0], [rho, (1.0 - rho * rho).sqrt(), 0.0], [0.0, 0.0, 1.0]];
        let params = [OuParams::new(0.0, 1.0), OuParams::new(0.0, 1.0), OuParams::frozen()];
        let mut rng = path_rng(5, 0);
        let n = 50_000;
        let mut sxy = 0.0;
        for _ in 0..n {
            let z = [f64::standard_normal(&mut rng), f64::standard_normal(&mut rng), 0.0];
            let o = ou_step_exact([0.0; 3], &params, &corr, 1.0, z);
            sxy += o[0] * o[1];
        }
        let est = sxy / n as f64;
        assert!((est - rho).abs() < 4.0 * ((1.0 + rho * rho) / n as f64).sqrt());
    }

    #[test]
    fn constant_path_when_frozen() {
        let mut cfg = defaults::config(150f64.ln(), 110.0);
        cfg.pv_ou = OuParams::frozen();
        cfg.initial_log_pv = 0.25;
        let grid = TimeGrid::new(0.0, 0.5, 10).unwrap();
        let set = simulate_paths(&cfg, &grid, 1, 3).unwrap();
        for j in 0..grid.count {
            assert_eq!(set.state(0, j), [0.0, 0.0, 0.25]);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = defaults::config(150f64.ln(), 110.0);
        let grid = TimeGrid::new(0.0, 0.024, 100).unwrap();
        let a = simulate_paths(&cfg, &grid, 64, 99).unwrap();
        let b = simulate_paths(&cfg, &grid, 64, 99).unwrap();
        assert_eq!(a, b);
        let c = simulate_paths(&cfg, &grid, 64, 100).unwrap();
        assert_ne!(a.data, c.data);
        // Path k does not depend on how many paths were requested.
        let d = simulate_paths(&cfg, &grid, 8, 99).unwrap();
        assert_eq!(d.path(5), a.path(5));
    }

    #[test]
    fn simulated_pv_mean_matches_expected_pv() {
        let cfg = defaults::config(150f64.ln(), 110.0);
        let grid = TimeGrid::new(0.0, 1.0, 13).unwrap();
        let set = simulate_paths(&cfg, &grid, 100_000, 2024).unwrap();
        for j in [1, 6, 12] {
            let u = grid.time(j);
            let samples: Vec<f64> = (0..set.n_paths)
                .map(|k| cfg.pv(u, set.state(k, j)[PV]))
                .collect();
            let (mean, se) = mean_and_standard_error(&samples);
            let exact = expected_pv(&cfg.pv_seasonal, &cfg.pv_ou, 0.0, 0.0, u).unwrap();
            assert!((mean - exact).abs() <= 3.0 * se, "u={u}: {mean} vs {exact} (se {se})");
        }
    }

    #[test]
    fn spanning_grid_hits_endpoint() {
        let g = TimeGrid::spanning(0.0, 24.0, 0.024).unwrap();
        assert_eq!(g.count, 1001);
        assert_relative_eq!(g.end(), 24.0, epsilon = 1e-12);
        let g = TimeGrid::spanning(3.0, 24.0, 0.05).unwrap();
        assert!(g.step <= 0.05);
        assert_relative_eq!(g.end(), 24.0, epsilon = 1e-12);
    }

    #[test]
    fn bad_grids_rejected() {
        assert!(TimeGrid::new(0.0, 0.0, 10).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
    }
}
