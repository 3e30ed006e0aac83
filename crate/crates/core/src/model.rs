//! Market, process, battery and incentive parameters together with the
//! deterministic seasonal curves and the expected photovoltaic production.
//!
//! All times are in hours. Day-based quantities are converted on input with
//! [`per_day_to_per_hour`] and [`per_sqrt_day_to_per_sqrt_hour`].

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Hours in the daily period of every seasonal curve.
pub const HOURS_PER_DAY: f64 = 24.0;

/// Mean-reversion speeds and other rates quoted per day.
pub fn per_day_to_per_hour<T: Scalar>(rate_per_day: T) -> T {
    rate_per_day / T::lit(HOURS_PER_DAY)
}

/// Volatilities quoted per square-root day.
pub fn per_sqrt_day_to_per_sqrt_hour<T: Scalar>(vol: T) -> T {
    vol / T::lit(HOURS_PER_DAY).sqrt()
}

/// One sine/cosine pair of a harmonic regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Harmonic<T> {
    /// Cycles per hour.
    pub frequency: T,
    pub sine_amp: T,
    pub cosine_amp: T,
}

impl<T: Scalar> Harmonic<T> {
    pub fn new(frequency: T, sine_amp: T, cosine_amp: T) -> Self {
        Self {
            frequency,
            sine_amp,
            cosine_amp,
        }
    }

    #[inline]
    fn value(&self, t: T) -> T {
        let w = T::TAU() * self.frequency * t;
        self.sine_amp * w.sin() + self.cosine_amp * w.cos()
    }
}

/// Strictly positive seasonal curve `exp(intercept + sum of harmonics)`,
/// shared by the electricity price and the power demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SeasonalSpec<T> {
    pub intercept: T,
    pub harmonics: Vec<Harmonic<T>>,
}

impl<T: Scalar> SeasonalSpec<T> {
    pub fn new(intercept: T, harmonics: Vec<Harmonic<T>>) -> Result<Self> {
        let spec = Self {
            intercept,
            harmonics,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Flat curve at `level > 0`.
    pub fn constant(level: T) -> Self {
        Self {
            intercept: level.ln(),
            harmonics: Vec::new(),
        }
    }

    /// Chooses the intercept so that the minimum of the curve over one day
    /// equals `minimum`.
    pub fn with_minimum(harmonics: Vec<Harmonic<T>>, minimum: T) -> Result<Self> {
        let shape = Self::new(T::zero(), harmonics)?;
        let (_, log_min) = shape.extremum_log(false);
        Self::new(minimum.ln() - log_min, shape.harmonics)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.intercept.is_finite() {
            return Err(Error::InvalidConfig("seasonal intercept must be finite".into()));
        }
        for (i, h) in self.harmonics.iter().enumerate() {
            if !(h.frequency > T::zero()) || !h.frequency.is_finite() {
                return Err(Error::InvalidFrequencies(format!(
                    "frequency #{i} must be strictly positive, got {}",
                    h.frequency
                )));
            }
            if !h.sine_amp.is_finite() || !h.cosine_amp.is_finite() {
                return Err(Error::InvalidConfig(format!("harmonic #{i} has non-finite amplitude")));
            }
            if self.harmonics[..i].iter().any(|o| o.frequency == h.frequency) {
                return Err(Error::InvalidFrequencies(format!(
                    "duplicate frequency {}",
                    h.frequency
                )));
            }
        }
        Ok(())
    }

    /// Log of the curve.
    #[inline]
    pub fn log_eval(&self, t: T) -> T {
        self.harmonics
            .iter()
            .fold(self.intercept, |acc, h| acc + h.value(t))
    }

    #[inline]
    pub fn eval(&self, t: T) -> T {
        self.log_eval(t).exp()
    }

    /// Location and log-value of the daily minimum (`max = false`) or maximum
    /// over `[0, 24)`: a one-minute scan refined by golden-section search.
    pub fn extremum_log(&self, max: bool) -> (T, T) {
        let sign = if max { -T::one() } else { T::one() };
        let obj = |t: T| sign * self.log_eval(t);
        let step = T::lit(1.0 / 60.0);
        let n = (HOURS_PER_DAY * 60.0) as usize;
        let mut best_t = T::zero();
        let mut best = obj(best_t);
        for i in 1..n {
            let t = step * T::from_usize_lossy(i);
            let v = obj(t);
            if v < best {
                best = v;
                best_t = t;
            }
        }
        let (mut lo, mut hi) = (best_t - step, best_t + step);
        let g = T::lit(0.5 * (5f64.sqrt() - 1.0));
        for _ in 0..80 {
            let m1 = hi - g * (hi - lo);
            let m2 = lo + g * (hi - lo);
            if obj(m1) <= obj(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let t = T::lit(0.5) * (lo + hi);
        let t = (t + T::lit(HOURS_PER_DAY)) % T::lit(HOURS_PER_DAY);
        (t, self.log_eval(t))
    }
}

/// `exp(intercept + sum_i a_i sin(2 pi psi_i t) + b_i cos(2 pi psi_i t))`.
#[inline]
pub fn seasonal_eval<T: Scalar>(spec: &SeasonalSpec<T>, t: T) -> T {
    spec.eval(t)
}

/// Clamped daily sine `A max{sin(2 pi psi (t + phase)), 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PvSeasonalSpec<T> {
    /// MW.
    pub amplitude: T,
    /// Cycles per hour.
    pub frequency: T,
    /// Hours.
    pub phase: T,
}

impl<T: Scalar> PvSeasonalSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= T::zero()) || !self.amplitude.is_finite() {
            return Err(Error::InvalidConfig("pv amplitude must be >= 0".into()));
        }
        if !(self.frequency > T::zero()) || !self.frequency.is_finite() {
            return Err(Error::InvalidFrequencies("pv frequency must be > 0".into()));
        }
        if !self.phase.is_finite() {
            return Err(Error::InvalidConfig("pv phase must be finite".into()));
        }
        Ok(())
    }

    /// The unclamped sine `sin(2 pi psi (t + phase))`.
    #[inline]
    pub fn sine(&self, t: T) -> T {
        (T::TAU() * self.frequency * (t + self.phase)).sin()
    }

    #[inline]
    pub fn eval(&self, t: T) -> T {
        self.amplitude * self.sine(t).max(T::zero())
    }
}

#[inline]
pub fn pv_seasonal_eval<T: Scalar>(spec: &PvSeasonalSpec<T>, t: T) -> T {
    spec.eval(t)
}

/// Mean-reversion speed (1/h) and volatility (1/sqrt(h)) of one OU factor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OuParams<T> {
    pub mean_reversion: T,
    pub volatility: T,
}

impl<T: Scalar> OuParams<T> {
    pub fn new(mean_reversion: T, volatility: T) -> Self {
        Self {
            mean_reversion,
            volatility,
        }
    }

    pub fn frozen() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn is_frozen(&self) -> bool {
        self.mean_reversion == T::zero() && self.volatility == T::zero()
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.mean_reversion >= T::zero()) || !self.mean_reversion.is_finite() {
            return Err(Error::InvalidConfig(format!("{name}: mean reversion must be >= 0")));
        }
        if !(self.volatility >= T::zero()) || !self.volatility.is_finite() {
            return Err(Error::InvalidConfig(format!("{name}: volatility must be >= 0")));
        }
        Ok(())
    }

    /// Conditional mean factor `exp(-xi dt)`.
    #[inline]
    pub fn decay(&self, dt: T) -> T {
        (-self.mean_reversion * dt).exp()
    }

    /// Exact conditional standard deviation after `dt` hours.
    #[inline]
    pub fn conditional_std(&self, dt: T) -> T {
        let xi = self.mean_reversion;
        let var_per_sigma2 = if xi * dt < T::lit(1e-10) {
            dt
        } else {
            -(-T::lit(2.0) * xi * dt).exp_m1() / (T::lit(2.0) * xi)
        };
        self.volatility * var_per_sigma2.sqrt()
    }
}

/// Technical battery specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BatterySpec<T> {
    pub charge_eff: T,
    pub discharge_eff: T,
    /// MW, cap on `a * P`.
    pub max_charge_power: T,
    /// MW.
    pub max_discharge_power: T,
    /// MWh.
    pub soc_min: T,
    /// MWh.
    pub soc_max: T,
}

impl<T: Scalar> BatterySpec<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: T| v > T::zero() && v <= T::one();
        if !unit(self.charge_eff) || !unit(self.discharge_eff) {
            return Err(Error::InvalidConfig("efficiencies must lie in (0, 1]".into()));
        }
        if !(self.max_charge_power > T::zero()) || !(self.max_discharge_power > T::zero()) {
            return Err(Error::InvalidConfig("power limits must be > 0".into()));
        }
        if !(self.soc_min < self.soc_max) || !self.soc_min.is_finite() || !self.soc_max.is_finite() {
            return Err(Error::InvalidConfig("soc_min must be < soc_max".into()));
        }
        Ok(())
    }

    /// `count` identical batteries connected in parallel: power limits and
    /// capacity add up, efficiencies are unchanged.
    pub fn parallel(&self, count: usize) -> Self {
        let n = T::from_usize_lossy(count);
        Self {
            max_charge_power: self.max_charge_power * n,
            max_discharge_power: self.max_discharge_power * n,
            soc_min: self.soc_min * n,
            soc_max: self.soc_max * n,
            ..*self
        }
    }

    pub fn capacity(&self) -> T {
        self.soc_max - self.soc_min
    }
}

/// Everything needed to define the control problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelConfig<T> {
    pub price_seasonal: SeasonalSpec<T>,
    pub demand_seasonal: SeasonalSpec<T>,
    pub pv_seasonal: PvSeasonalSpec<T>,
    pub price_ou: OuParams<T>,
    pub demand_ou: OuParams<T>,
    pub pv_ou: OuParams<T>,
    /// Lower-triangular factor `L` of the noise correlation, rows ordered
    /// (price, demand, pv). Rows have unit Euclidean norm.
    pub noise_correlation: [[T; 3]; 3],
    pub battery: BatterySpec<T>,
    /// EUR/MWh paid on virtually self-consumed energy.
    pub incentive: T,
    /// Per hour.
    pub discount_rate: T,
    pub fixed_log_price: T,
    pub fixed_log_demand: T,
    /// Initial pv log-level used when simulating paths.
    pub initial_log_pv: T,
    /// Hours.
    pub horizon: T,
}

pub fn identity3<T: Scalar>() -> [[T; 3]; 3] {
    let (o, z) = (T::one(), T::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

impl<T: Scalar> ModelConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.price_seasonal.validate()?;
        self.demand_seasonal.validate()?;
        self.pv_seasonal.validate()?;
        self.price_ou.validate("price_ou")?;
        self.demand_ou.validate("demand_ou")?;
        self.pv_ou.validate("pv_ou")?;
        self.battery.validate()?;
        if !(self.incentive >= T::zero()) {
            return Err(Error::InvalidConfig("incentive must be >= 0".into()));
        }
        if !(self.discount_rate >= T::zero()) {
            return Err(Error::InvalidConfig("discount rate must be >= 0".into()));
        }
        if !(self.horizon > T::zero()) || !self.horizon.is_finite() {
            return Err(Error::InvalidConfig("horizon must be > 0".into()));
        }
        for v in [self.fixed_log_price, self.fixed_log_demand, self.initial_log_pv] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig("initial log-levels must be finite".into()));
            }
        }
        let l = &self.noise_correlation;
        for (i, row) in l.iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig("noise correlation must be finite".into()));
            }
            if row[i + 1..].iter().any(|&v| v != T::zero()) {
                return Err(Error::InvalidConfig(
                    "noise correlation factor must be lower triangular".into(),
                ));
            }
            let norm2: T = row.iter().map(|&v| v * v).sum();
            if (norm2 - T::one()).abs() > T::lit(1e-6) {
                return Err(Error::InvalidConfig(format!(
                    "noise correlation row {i} must have unit norm"
                )));
            }
        }
        Ok(())
    }

    /// Price and demand are deterministic: only the pv factor and the state
    /// of charge are state variables.
    pub fn is_two_state(&self) -> bool {
        self.price_ou.is_frozen() && self.demand_ou.is_frozen()
    }

    /// Zeroes the price and demand OU parameters.
    pub fn into_two_state(mut self) -> Self {
        self.price_ou = OuParams::frozen();
        self.demand_ou = OuParams::frozen();
        self
    }

    #[inline]
    pub fn price(&self, t: T, log_level: T) -> T {
        (self.price_seasonal.log_eval(t) + log_level).exp()
    }

    #[inline]
    pub fn demand(&self, t: T, log_level: T) -> T {
        (self.demand_seasonal.log_eval(t) + log_level).exp()
    }

    #[inline]
    pub fn pv(&self, t: T, log_level: T) -> T {
        self.pv_seasonal.eval(t) * log_level.exp()
    }

    #[inline]
    pub fn discount(&self, t: T) -> T {
        (-self.discount_rate * t).exp()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Expected photovoltaic power at time `u` given `U_p(t0) = p0`:
/// `f_p(u) exp(p0 e^{-xi (u-t0)}) exp(sigma^2/(4 xi) (1 - e^{-2 xi (u-t0)}))`.
pub fn expected_pv<T: Scalar>(
    spec: &PvSeasonalSpec<T>,
    ou: &OuParams<T>,
    t0: T,
    p0: T,
    u: T,
) -> Result<T> {
    if !(ou.mean_reversion > T::zero()) {
        return Err(Error::DegenerateParameters(
            "expected pv needs a strictly positive mean reversion".into(),
        ));
    }
    if u < t0 {
        return Err(Error::InvalidConfig("expected pv needs u >= t0".into()));
    }
    let xi = ou.mean_reversion;
    let sigma2 = ou.volatility * ou.volatility;
    let elapsed = u - t0;
    let decay = (-xi * elapsed).exp();
    let variance_term = sigma2 / (T::lit(4.0) * xi) * (-(-T::lit(2.0) * xi * elapsed).exp_m1());
    Ok(spec.eval(u) * (p0 * decay).exp() * variance_term.exp())
}

/// Parameter values estimated from market and production data.
pub mod defaults {
    use super::*;

    /// Electricity price harmonics (frequency 1/h, sine, cosine).
    pub const PRICE_HARMONICS: [(f64, f64, f64); 3] = [
        (0.04167, -0.30068, -0.09365),
        (0.08333, -0.21155, 0.09567),
        (0.125, 0.07929, 0.07220),
    ];

    pub const DEMAND_HARMONICS: [(f64, f64, f64); 3] = [
        (0.04167, -0.21109, -0.10399),
        (0.08333, -0.12501, 0.0),
        (0.125, 0.02541, 0.0),
    ];

    /// Minimum of the daily demand profile, MW.
    pub const DEMAND_MINIMUM_MW: f64 = 0.1418;
    /// Maximum of the daily demand profile, MW.
    pub const DEMAND_MAXIMUM_MW: f64 = 0.2587;

    pub const PV_AMPLITUDE_MW: f64 = 0.5;
    pub const PV_PHASE_H: f64 = 18.0;
    pub const PV_MEAN_REVERSION_PER_DAY: f64 = 2.0;
    pub const PV_VOLATILITY_PER_SQRT_DAY: f64 = 0.3;

    pub const CHARGE_EFF: f64 = 0.99;
    pub const DISCHARGE_EFF: f64 = 0.97;
    pub const MAX_CHARGE_MW: f64 = 0.01;
    pub const MAX_DISCHARGE_MW: f64 = 0.028;
    pub const SOC_MAX_MWH: f64 = 0.03;
    pub const SOC_MIN_MWH: f64 = 0.0;

    pub const BATTERIES_IN_PARALLEL: usize = 2;

    /// 0.001 day expressed in hours.
    pub const TIME_STEP_H: f64 = 0.024;
    pub const LOG_PV_STEP: f64 = 0.04;
    pub const SOC_STEP_MWH: f64 = 0.005;

    fn harmonics<T: Scalar>(table: &[(f64, f64, f64)]) -> Vec<Harmonic<T>> {
        table
            .iter()
            .map(|&(f, a, b)| Harmonic::new(T::lit(f), T::lit(a), T::lit(b)))
            .collect()
    }

    pub fn price_harmonics<T: Scalar>() -> Vec<Harmonic<T>> {
        harmonics(&PRICE_HARMONICS)
    }

    pub fn demand_harmonics<T: Scalar>() -> Vec<Harmonic<T>> {
        harmonics(&DEMAND_HARMONICS)
    }

    pub fn price_seasonal<T: Scalar>(intercept: T) -> SeasonalSpec<T> {
        SeasonalSpec {
            intercept,
            harmonics: price_harmonics(),
        }
    }

    /// Demand curve with its intercept chosen to match the target minimum.
    pub fn demand_seasonal<T: Scalar>() -> SeasonalSpec<T> {
        SeasonalSpec::with_minimum(demand_harmonics(), T::lit(DEMAND_MINIMUM_MW))
            .expect("default harmonics are valid")
    }

    pub fn pv_seasonal<T: Scalar>() -> PvSeasonalSpec<T> {
        PvSeasonalSpec {
            amplitude: T::lit(PV_AMPLITUDE_MW),
            frequency: T::lit(1.0 / HOURS_PER_DAY),
            phase: T::lit(PV_PHASE_H),
        }
    }

    pub fn pv_ou<T: Scalar>() -> OuParams<T> {
        OuParams::new(
            per_day_to_per_hour(T::lit(PV_MEAN_REVERSION_PER_DAY)),
            per_sqrt_day_to_per_sqrt_hour(T::lit(PV_VOLATILITY_PER_SQRT_DAY)),
        )
    }

    pub fn battery<T: Scalar>() -> BatterySpec<T> {
        BatterySpec {
            charge_eff: T::lit(CHARGE_EFF),
            discharge_eff: T::lit(DISCHARGE_EFF),
            max_charge_power: T::lit(MAX_CHARGE_MW),
            max_discharge_power: T::lit(MAX_DISCHARGE_MW),
            soc_min: T::lit(SOC_MIN_MWH),
            soc_max: T::lit(SOC_MAX_MWH),
        }
    }

    /// Two-state daily experiment with two batteries in parallel. The price
    /// level and the incentive have no defaults and must be supplied.
    pub fn config<T: Scalar>(price_intercept: T, incentive: T) -> ModelConfig<T> {
        ModelConfig {
            price_seasonal: price_seasonal(price_intercept),
            demand_seasonal: demand_seasonal(),
            pv_seasonal: pv_seasonal(),
            price_ou: OuParams::frozen(),
            demand_ou: OuParams::frozen(),
            pv_ou: pv_ou(),
            noise_correlation: identity3(),
            battery: battery().parallel(BATTERIES_IN_PARALLEL),
            incentive,
            discount_rate: T::zero(),
            fixed_log_price: T::zero(),
            fixed_log_demand: T::zero(),
            initial_log_pv: T::zero(),
            horizon: T::lit(HOURS_PER_DAY),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(sine: f64, cosine: f64) -> SeasonalSpec<f64> {
        SeasonalSpec::new(0.0, vec![Harmonic::new(1.0 / 24.0, sine, cosine)]).unwrap()
    }

    #[test]
    fn flat_curve_is_one() {
        let spec = SeasonalSpec::<f64>::new(0.0, vec![Harmonic::new(1.0 / 24.0, 0.0, 0.0)]).unwrap();
        for t in [0.0, 3.3, 17.0, -5.0] {
            assert_eq!(seasonal_eval(&spec, t), 1.0);
        }
    }

    #[test]
    fn single_harmonic_at_quarter_period() {
        assert_relative_eq!(seasonal_eval(&single(1.0, 0.0), 6.0), 1f64.exp(), max_relative = 1e-14);
    }

    #[test]
    fn duplicate_and_nonpositive_frequencies_rejected() {
        let h = Harmonic::new(0.125, 0.1, 0.0);
        assert!(matches!(
            SeasonalSpec::new(0.0, vec![h, h]),
            Err(Error::InvalidFrequencies(_))
        ));
        assert!(matches!(
            SeasonalSpec::new(0.0, vec![Harmonic::new(0.0, 0.1, 0.0)]),
            Err(Error::InvalidFrequencies(_))
        ));
    }

    #[test]
    fn demand_profile_extrema() {
        let spec = defaults::demand_seasonal::<f64>();
        let (tmin, lmin) = spec.extremum_log(false);
        let (tmax, lmax) = spec.extremum_log(true);
        assert_relative_eq!(lmin.exp(), 0.1418, epsilon = 1e-12);
        assert!((tmin - (3.0 + 50.0 / 60.0)).abs() < 10.0 / 60.0, "argmin {tmin}");
        assert!((tmax - (19.0 + 1.0 / 60.0)).abs() < 10.0 / 60.0, "argmax {tmax}");
        assert!((0.25..=0.27).contains(&lmax.exp()));
    }

    #[test]
    fn pv_clamp_and_peak() {
        let spec = PvSeasonalSpec {
            amplitude: 0.5,
            frequency: 1.0 / 24.0,
            phase: 18.0,
        };
        assert_eq!(pv_seasonal_eval(&spec, 0.0), 0.0);
        assert_relative_eq!(pv_seasonal_eval(&spec, 12.0), 0.5, epsilon = 1e-15);
        assert!(pv_seasonal_eval(&spec, 6.0f64).abs() < 1e-15);
        assert!(pv_seasonal_eval(&spec, 19.0 + 1.0 / 60.0) == 0.0);
    }

    #[test]
    fn expected_pv_edge_cases() {
        let spec = defaults::pv_seasonal::<f64>();
        let ou = defaults::pv_ou::<f64>();
        assert_relative_eq!(
            expected_pv(&spec, &ou, 9.0, 0.3, 9.0).unwrap(),
            spec.eval(9.0) * 0.3f64.exp(),
            max_relative = 1e-14
        );
        let det = OuParams::new(ou.mean_reversion, 0.0);
        let u = 13.0;
        assert_relative_eq!(
            expected_pv(&spec, &det, 9.0, 0.3, u).unwrap(),
            spec.eval(u) * (0.3 * (-det.mean_reversion * 4.0).exp()).exp(),
            max_relative = 1e-14
        );
        assert!(matches!(
            expected_pv(&spec, &OuParams::new(0.0, 0.1), 0.0, 0.0, 1.0),
            Err(Error::DegenerateParameters(_))
        ));
    }

    #[test]
    fn expected_pv_stationary_limit() {
        let spec = defaults::pv_seasonal::<f64>();
        let ou = defaults::pv_ou::<f64>();
        let t0 = 0.0;
        // 20 / xi = 240 h; land on noon so the seasonal factor is non-zero.
        let u = 252.0;
        assert!(u - t0 >= 20.0 / ou.mean_reversion);
        let limit = spec.eval(u) * (ou.volatility.powi(2) / (4.0 * ou.mean_reversion)).exp();
        let v = expected_pv(&spec, &ou, t0, 0.7, u).unwrap();
        assert!((v - limit).abs() < 1e-9, "{v} vs {limit}");
    }

    #[test]
    fn unit_conversion() {
        let ou = defaults::pv_ou::<f64>();
        assert_relative_eq!(ou.mean_reversion, 2.0 / 24.0);
        assert_relative_eq!(ou.volatility, 0.3 / 24f64.sqrt());
    }

    #[test]
    fn default_config_validates_and_hashes_stably() {
        let cfg = defaults::config(150f64.ln(), 110.0);
        cfg.validate().unwrap();
        assert!(cfg.is_two_state());
        assert_eq!(cfg.config_hash(), cfg.clone().config_hash());
        let mut other = cfg.clone();
        other.incentive = 100.0;
        assert_ne!(cfg.config_hash(), other.config_hash());
        assert_relative_eq!(cfg.battery.max_discharge_power, 0.056);
        assert_relative_eq!(cfg.battery.soc_max, 0.06);
    }

    #[test]
    fn non_triangular_correlation_rejected() {
        let mut cfg = defaults::config(150f64.ln(), 110.0);
        cfg.noise_correlation[0][1] = 0.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let spec = defaults::demand_seasonal::<f32>();
        let (_, lmin) = spec.extremum_log(false);
        assert!((lmin.exp() - 0.1418).abs() < 1e-5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn seasonal_strictly_positive(
                t in -1e3f64..1e3,
                a in -2.0f64..2.0, b in -2.0f64..2.0, c in -3.0f64..3.0,
            ) {
                let spec = SeasonalSpec::new(c, vec![
                    Harmonic::new(1.0 / 24.0, a, b),
                    Harmonic::new(1.0 / 8.0, b, a),
                ]).unwrap();
                let v = seasonal_eval(&spec, t);
                prop_assert!(v > 0.0 && v.is_finite());
                prop_assert!((seasonal_eval(&spec, t + 24.0) - v).abs() <= 1e-9 * v);
            }

            #[test]
            fn pv_within_amplitude(t in -1e3f64..1e3, amp in 0.0f64..2.0, phase in -24.0f64..24.0) {
                let spec = PvSeasonalSpec { amplitude: amp, frequency: 1.0 / 24.0, phase };
                let v = pv_seasonal_eval(&spec, t);
                prop_assert!(v >= 0.0 && v <= amp);
            }
        }
    }
}
