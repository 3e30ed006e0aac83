use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{defaults, BatterySpec};
use crate::scalar::Scalar;

/// Lattice in `(t, p, s)`. Nodes are `t_i = i tau`, `p_n = p_min + n xi`,
/// `s_k = s_min + k delta`, all indices starting at zero and both ends
/// included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SolverGrid<T> {
    /// Hours.
    pub time_step: T,
    pub p_min: T,
    pub p_max: T,
    pub p_step: T,
    /// MWh.
    pub s_step: T,
    pub s_min: T,
    pub s_max: T,
    pub horizon: T,
    pub n_t: usize,
    pub n_p: usize,
    pub n_s: usize,
}

fn intervals<T: Scalar>(span: T, step: T, what: &str) -> Result<usize> {
    if !(step > T::zero()) || !step.is_finite() {
        return Err(Error::InvalidConfig(format!("{what} step must be positive")));
    }
    let ratio = (span / step).as_f64();
    let rounded = ratio.round();
    let tol = (T::epsilon().as_f64() * 1024.0).max(1e-9);
    if !(rounded >= 1.0) || (ratio - rounded).abs() > tol * rounded.max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "{what} range is not an integer multiple of the step (ratio {ratio})"
        )));
    }
    Ok(rounded as usize)
}

impl<T: Scalar> SolverGrid<T> {
    pub fn new(
        time_step: T,
        p_min: T,
        p_max: T,
        p_step: T,
        s_step: T,
        battery: &BatterySpec<T>,
        horizon: T,
    ) -> Result<Self> {
        let n_t = intervals(horizon, time_step, "time")? + 1;
        if !(p_max > p_min) {
            return Err(Error::InvalidConfig("p range must be non-empty".into()));
        }
        let n_p = intervals(p_max - p_min, p_step, "p")? + 1;
        let n_s = intervals(battery.soc_max - battery.soc_min, s_step, "state of charge")? + 1;
        if n_p < 5 {
            return Err(Error::InvalidConfig(format!("need at least 5 p nodes, got {n_p}")));
        }
        if n_s < 3 {
            return Err(Error::InvalidConfig(format!(
                "need at least 3 state-of-charge nodes, got {n_s}"
            )));
        }
        Ok(Self {
            time_step,
            p_min,
            p_max,
            p_step,
            s_step,
            s_min: battery.soc_min,
            s_max: battery.soc_max,
            horizon,
            n_t,
            n_p,
            n_s,
        })
    }

    /// `tau = 0.024 h`, `p` in `[-0.6, 0.6]` by `0.04`, `delta = 0.005 MWh`.
    pub fn standard(battery: &BatterySpec<T>, horizon: T) -> Result<Self> {
        Self::new(
            T::lit(defaults::TIME_STEP_H),
            T::lit(-0.6),
            T::lit(0.6),
            T::lit(defaults::LOG_PV_STEP),
            T::lit(defaults::SOC_STEP_MWH),
            battery,
            horizon,
        )
    }

    /// Same domain with every step divided by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let f = T::from_usize_lossy(factor);
        let battery = BatterySpec {
            charge_eff: T::one(),
            discharge_eff: T::one(),
            max_charge_power: T::one(),
            max_discharge_power: T::one(),
            soc_min: self.s_min,
            soc_max: self.s_max,
        };
        Self::new(
            self.time_step / f,
            self.p_min,
            self.p_max,
            self.p_step / f,
            self.s_step / f,
            &battery,
            self.horizon,
        )
    }

    #[inline]
    pub fn time(&self, i: usize) -> T {
        self.time_step * T::from_usize_lossy(i)
    }

    #[inline]
    pub fn p(&self, n: usize) -> T {
        self.p_min + self.p_step * T::from_usize_lossy(n)
    }

    #[inline]
    pub fn s(&self, k: usize) -> T {
        self.s_min + self.s_step * T::from_usize_lossy(k)
    }

    /// Nodes per time slice.
    pub fn slice_len(&self) -> usize {
        self.n_p * self.n_s
    }

    pub fn len(&self) -> usize {
        self.n_t * self.slice_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, n: usize, k: usize) -> usize {
        (i * self.n_p + n) * self.n_s + k
    }

    /// Slice index whose time is closest to `t`.
    pub fn nearest_slice(&self, t: T) -> Option<usize> {
        let r = (t / self.time_step).round();
        let i = r.to_usize()?;
        (i < self.n_t).then_some(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_grid_counts() {
        let b = defaults::battery::<f64>().parallel(2);
        let g = SolverGrid::standard(&b, 24.0).unwrap();
        assert_eq!((g.n_t, g.n_p, g.n_s), (1001, 31, 13));
        assert!((g.p(30) - 0.6).abs() < 1e-12);
        assert!((g.s(12) - 0.06).abs() < 1e-15);
        let single = SolverGrid::standard(&defaults::battery::<f64>(), 24.0).unwrap();
        assert_eq!(single.n_s, 7);
    }

    #[test]
    fn rejects_non_integral_steps() {
        let b = defaults::battery::<f64>();
        assert!(SolverGrid::new(0.024, -0.6, 0.6, 0.07, 0.005, &b, 24.0).is_err());
        assert!(SolverGrid::new(0.024, -0.6, 0.6, 0.04, 0.007, &b, 24.0).is_err());
        assert!(SolverGrid::new(0.025, -0.6, 0.6, 0.04, 0.005, &b, 24.01).is_err());
    }

    #[test]
    fn rejects_tiny_grids() {
        let b = defaults::battery::<f64>();
        assert!(SolverGrid::new(0.024, -0.06, 0.06, 0.04, 0.005, &b, 24.0).is_err());
        assert!(SolverGrid::new(0.024, -0.6, 0.6, 0.04, 0.03, &b, 24.0).is_err());
    }

    #[test]
    fn refinement_halves_steps() {
        let b = defaults::battery::<f64>();
        let g = SolverGrid::standard(&b, 24.0).unwrap().refined(2).unwrap();
        assert_eq!((g.n_t, g.n_p, g.n_s), (2001, 61, 13));
    }
}
