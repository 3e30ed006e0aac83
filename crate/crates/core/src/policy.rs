//! Pointwise minimisation of the Hamiltonian
//! `(eta_c a P - c / eta_d) V_s + e^{-rt} [X (D - E) - Z min(D, E)]`
//! with `E = (1 - a) P + c`.
//!
//! The objective is convex and piecewise linear in `(a, c)` with one kink on
//! `D = E`, and simultaneous charge/discharge is never strictly better, so
//! the minimum lies on at most five points: full discharge, idle, full
//! charge, and the two actions that make `E` equal `D`. [`analytic_policy`]
//! walks the threshold ladder on `-V_s`; [`brute_force_policy`] is the
//! lattice oracle.

use serde::{Deserialize, Serialize};

use crate::battery::{admissible_box, max_charge_fraction, soc_drift, ControlAction, ControlBox};
use crate::model::{BatterySpec, ModelConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Regime {
    DischargeFull,
    MatchDemandByDischarge,
    Idle,
    MatchDemandByCharge,
    ChargeFull,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::DischargeFull,
        Regime::MatchDemandByDischarge,
        Regime::Idle,
        Regime::MatchDemandByCharge,
        Regime::ChargeFull,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::DischargeFull => "dischargeFull",
            Regime::MatchDemandByDischarge => "matchDemandByDischarge",
            Regime::Idle => "idle",
            Regime::MatchDemandByCharge => "matchDemandByCharge",
            Regime::ChargeFull => "chargeFull",
        }
    }

    /// Position along increasing `-V_s`.
    pub fn rank(&self) -> u8 {
        match self {
            Regime::DischargeFull => 0,
            Regime::MatchDemandByDischarge => 1,
            Regime::Idle => 2,
            Regime::MatchDemandByCharge => 3,
            Regime::ChargeFull => 4,
        }
    }

    /// Tie-break preference: less battery activity first.
    fn activity(&self) -> u8 {
        match self {
            Regime::Idle => 0,
            Regime::MatchDemandByDischarge | Regime::MatchDemandByCharge => 1,
            Regime::DischargeFull | Regime::ChargeFull => 2,
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Regime::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown regime `{s}`"))
    }
}

/// Position of the demand relative to production and discharge capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DemandCase {
    /// `D = 0`.
    A,
    /// `0 < D <= P`.
    B,
    /// `P < D <= P + Gamma`.
    C,
    /// `D > P + Gamma`.
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseLabel {
    pub case: DemandCase,
    pub producing: bool,
}

impl std::fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = if self.producing { "P>0" } else { "P=0" };
        write!(f, "{:?}/{p}", self.case)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PolicyDecision<T> {
    pub action: ControlAction<T>,
    pub case: CaseLabel,
    pub regime: Regime,
    /// The charge fraction was cut back to the charging-power cap.
    pub capped: bool,
}

/// Threshold quantities whose signs partition the regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MarginalGauges<T> {
    /// `eta_c V_s + e^{-rt} X`.
    pub charge: T,
    /// `eta_c V_s + e^{-rt} (X + Z)`.
    pub charge_incent: T,
    /// `V_s / eta_d + e^{-rt} X`.
    pub discharge: T,
    /// `V_s / eta_d + e^{-rt} (X + Z)`.
    pub discharge_incent: T,
}

/// Value-function slopes in `s`: forward for charging, backward for
/// discharging. Both equal the exact derivative for a smooth value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slopes<T> {
    pub charge: T,
    pub discharge: T,
}

impl<T: Scalar> Slopes<T> {
    pub fn uniform(vs: T) -> Self {
        Self {
            charge: vs,
            discharge: vs,
        }
    }
}

/// Market data and battery limits at one node `(t, P, D, X)`.
#[derive(Debug, Clone, Copy)]
pub struct LocalProblem<T> {
    /// MW.
    pub production: T,
    /// MW.
    pub demand: T,
    /// EUR/MWh.
    pub price: T,
    pub incentive: T,
    /// `e^{-rt}`.
    pub discount: T,
    pub battery: BatterySpec<T>,
    pub control_box: ControlBox<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<T> {
    pub regime: Regime,
    pub action: ControlAction<T>,
    pub capped: bool,
}

impl<T: Scalar> LocalProblem<T> {
    pub fn new(
        config: &ModelConfig<T>,
        t: T,
        production: T,
        demand: T,
        price: T,
        control_box: ControlBox<T>,
    ) -> Self {
        Self {
            production,
            demand,
            price,
            incentive: config.incentive,
            discount: config.discount(t),
            battery: config.battery,
            control_box,
        }
    }

    pub fn sold_power(&self, action: &ControlAction<T>) -> T {
        crate::cost::sold_power(action.charge_fraction, action.discharge_power, self.production)
    }

    /// Discounted net running cost rate, EUR/h.
    #[inline]
    pub fn running_cost(&self, action: &ControlAction<T>) -> T {
        let e = self.sold_power(action);
        self.discount * (self.price * (self.demand - e) - self.incentive * self.demand.min(e))
    }

    /// Hamiltonian with upwinded slopes: `f+ V_s^+ - f- V_s^-` plus running cost.
    #[inline]
    pub fn objective(&self, action: &ControlAction<T>, slopes: Slopes<T>) -> T {
        let f = soc_drift(action, self.production, &self.battery);
        let transport = if f >= T::zero() {
            f * slopes.charge
        } else {
            f * slopes.discharge
        };
        transport + self.running_cost(action)
    }

    pub fn case_label(&self) -> CaseLabel {
        let (p, d) = (self.production, self.demand);
        let gamma = self.battery.max_discharge_power;
        let case = if d <= T::zero() {
            DemandCase::A
        } else if d <= p {
            DemandCase::B
        } else if d <= p + gamma {
            DemandCase::C
        } else {
            DemandCase::D
        };
        CaseLabel {
            case,
            producing: p > T::zero(),
        }
    }

    /// Largest charge fraction allowed by the box and the power cap.
    pub fn charge_cap(&self) -> T {
        if self.production > T::zero() && self.control_box.can_charge() {
            max_charge_fraction(self.production, &self.battery).min(self.control_box.max_fraction)
        } else {
            T::zero()
        }
    }

    pub fn candidate(&self, regime: Regime) -> Option<Candidate<T>> {
        self.candidate_with_cap(regime, self.charge_cap())
    }

    #[inline]
    fn candidate_with_cap(&self, regime: Regime, cap: T) -> Option<Candidate<T>> {
        let (p, d) = (self.production, self.demand);
        let gamma = self.control_box.max_discharge;
        let zero = T::zero();
        match regime {
            Regime::Idle => Some(Candidate {
                regime,
                action: ControlAction::idle(),
                capped: false,
            }),
            Regime::DischargeFull => self.control_box.can_discharge().then(|| Candidate {
                regime,
                action: ControlAction::new(zero, gamma),
                capped: false,
            }),
            Regime::MatchDemandByDischarge => (self.control_box.can_discharge()
                && d > p
                && d - p < gamma)
                .then(|| Candidate {
                    regime,
                    action: ControlAction::new(zero, d - p),
                    capped: false,
                }),
            Regime::ChargeFull => (cap > zero).then(|| Candidate {
                regime,
                action: ControlAction::new(cap, zero),
                capped: cap < T::one(),
            }),
            Regime::MatchDemandByCharge => {
                (cap > zero && d > zero && d < p).then(|| {
                    let a = T::one() - d / p;
                    Candidate {
                        regime,
                        action: ControlAction::new(a.min(cap), zero),
                        capped: a > cap,
                    }
                })
            }
        }
    }

    /// Admissible members of the five-point set, in tie-break order.
    pub fn candidates(&self) -> impl Iterator<Item = Candidate<T>> + '_ {
        let cap = self.charge_cap();
        [
            Regime::Idle,
            Regime::MatchDemandByDischarge,
            Regime::MatchDemandByCharge,
            Regime::DischargeFull,
            Regime::ChargeFull,
        ]
        .into_iter()
        .filter_map(move |r| self.candidate_with_cap(r, cap))
    }

    /// Minimum of the upwinded Hamiltonian over the candidate set.
    pub fn best_candidate(&self, slopes: Slopes<T>) -> (Candidate<T>, T) {
        let mut best: Option<(Candidate<T>, T)> = None;
        for cand in self.candidates() {
            let v = self.objective(&cand.action, slopes);
            match best {
                Some((b, bv)) if !(v < bv) && !(v == bv && cand.regime.activity() < b.regime.activity()) => {}
                _ => best = Some((cand, v)),
            }
        }
        best.expect("idle is always a candidate")
    }

    pub fn gauges(&self, slopes: Slopes<T>) -> MarginalGauges<T> {
        let ec = self.battery.charge_eff;
        let ed = self.battery.discharge_eff;
        let x = self.discount * self.price;
        let xz = self.discount * (self.price + self.incentive);
        MarginalGauges {
            charge: ec * slopes.charge + x,
            charge_incent: ec * slopes.charge + xz,
            discharge: slopes.discharge / ed + x,
            discharge_incent: slopes.discharge / ed + xz,
        }
    }

    /// Regime selected by the threshold ladder on `-V_s`, before the box
    /// and the charging cap are applied.
    pub fn ladder(&self, vs: T) -> Regime {
        let m = -vs;
        let ec = self.battery.charge_eff;
        let ed = self.battery.discharge_eff;
        let x = self.discount * self.price;
        let xz = self.discount * (self.price + self.incentive);
        let label = self.case_label();
        let regime = match label.case {
            DemandCase::A => {
                if m < ed * x {
                    Regime::DischargeFull
                } else if m <= x / ec {
                    Regime::Idle
                } else {
                    Regime::ChargeFull
                }
            }
            DemandCase::B => {
                if m < ed * x {
                    Regime::DischargeFull
                } else if m <= x / ec {
                    Regime::Idle
                } else if m <= xz / ec {
                    Regime::MatchDemandByCharge
                } else {
                    Regime::ChargeFull
                }
            }
            DemandCase::C => {
                if m < ed * x {
                    Regime::DischargeFull
                } else if m < ed * xz {
                    Regime::MatchDemandByDischarge
                } else if m <= xz / ec {
                    Regime::Idle
                } else {
                    Regime::ChargeFull
                }
            }
            DemandCase::D => {
                if m < ed * xz {
                    Regime::DischargeFull
                } else if m <= xz / ec {
                    Regime::Idle
                } else {
                    Regime::ChargeFull
                }
            }
        };
        // At D = P + Gamma matching demand is the same action as full discharge.
        if regime == Regime::MatchDemandByDischarge
            && self.demand - self.production >= self.battery.max_discharge_power
        {
            return Regime::DischargeFull;
        }
        regime
    }

    /// Ladder regime turned into an admissible action.
    pub fn decide(&self, vs: T) -> PolicyDecision<T> {
        let regime = self.ladder(vs);
        let cand = self.candidate(regime).unwrap_or(Candidate {
                regime: Regime::Idle,
                action: ControlAction::idle(),
                capped: false,
            });
        PolicyDecision {
            action: cand.action,
            case: self.case_label(),
            regime: cand.regime,
            capped: cand.capped,
        }
    }
}

/// Closed-form optimal action at state of charge `s` for production `p`,
/// demand `d`, price `x` and value slope `vs`.
pub fn analytic_policy<T: Scalar>(
    t: T,
    p: T,
    d: T,
    x: T,
    vs: T,
    s: T,
    config: &ModelConfig<T>,
) -> crate::error::Result<PolicyDecision<T>> {
    let bx = admissible_box(s, &config.battery, T::zero())?;
    Ok(LocalProblem::new(config, t, p, d, x, bx).decide(vs))
}

/// Lattice minimiser of the Hamiltonian over the admissible box with
/// `grid_n` points per axis. Ties go to the smallest `a + c / Gamma`.
pub fn brute_force_policy<T: Scalar>(
    t: T,
    p: T,
    d: T,
    x: T,
    vs: T,
    s: T,
    config: &ModelConfig<T>,
    grid_n: usize,
) -> crate::error::Result<(ControlAction<T>, T)> {
    let bx = admissible_box(s, &config.battery, T::zero())?;
    let problem = LocalProblem::new(config, t, p, d, x, bx);
    Ok(brute_force_min(&problem, Slopes::uniform(vs), grid_n))
}

pub fn brute_force_min<T: Scalar>(
    problem: &LocalProblem<T>,
    slopes: Slopes<T>,
    grid_n: usize,
) -> (ControlAction<T>, T) {
    assert!(grid_n >= 2, "lattice needs at least two points per axis");
    let a_hi = problem.charge_cap();
    let c_hi = problem.control_box.max_discharge;
    let gamma = problem.battery.max_discharge_power;
    let denom = T::from_usize_lossy(grid_n - 1);
    let mut best = (ControlAction::idle(), T::infinity(), T::infinity());
    for i in 0..grid_n {
        let a = a_hi * T::from_usize_lossy(i) / denom;
        for j in 0..grid_n {
            let c = c_hi * T::from_usize_lossy(j) / denom;
            let act = ControlAction::new(a, c);
            let v = problem.objective(&act, slopes);
            let activity = a + c / gamma;
            if v < best.1 || (v == best.1 && activity < best.2) {
                best = (act, v, activity);
            }
        }
    }
    (best.0, best.1)
}

/// Bound on how far a lattice minimum can sit above the true minimum:
/// grid spacing times the objective's Lipschitz constant on each axis.
pub fn lattice_slack<T: Scalar>(problem: &LocalProblem<T>, slopes: Slopes<T>, grid_n: usize) -> T {
    let denom = T::from_usize_lossy(grid_n - 1);
    let ha = problem.charge_cap() / denom;
    let hc = problem.control_box.max_discharge / denom;
    let xz = problem.discount * (problem.price + problem.incentive);
    let vs = slopes.charge.abs().max(slopes.discharge.abs());
    let la = problem.production * (problem.battery.charge_eff * vs + xz);
    let lc = vs / problem.battery.discharge_eff + xz;
    ha * la + hc * lc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::defaults;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg(z: f64) -> ModelConfig<f64> {
        let mut c = defaults::config(100f64.ln(), z);
        c.battery = defaults::battery();
        c
    }

    fn mid(c: &ModelConfig<f64>) -> f64 {
        0.5 * (c.battery.soc_min + c.battery.soc_max)
    }

    #[test]
    fn zero_slope_case_d_discharges() {
        let c = cfg(110.0);
        let d = analytic_policy(0.0, 0.1, 0.3, 150.0, 0.0, mid(&c), &c).unwrap();
        assert_eq!(d.case.case, DemandCase::D);
        assert_eq!(d.regime, Regime::DischargeFull);
        assert_eq!(d.action, ControlAction::new(0.0, 0.028));
    }

    #[test]
    fn case_b_matches_demand_by_charging() {
        let mut c = cfg(110.0);
        // Lift the power cap so the uncapped fraction shows.
        c.battery.max_charge_power = 1.0;
        let d = analytic_policy(0.0, 0.4, 0.2, 100.0, -105.0, mid(&c), &c).unwrap();
        assert_eq!(d.case.case, DemandCase::B);
        assert_eq!(d.regime, Regime::MatchDemandByCharge);
        assert_relative_eq!(d.action.charge_fraction, 0.5, epsilon = 1e-15);
        assert!(!d.capped);
        let (bf, _) = brute_force_policy(0.0, 0.4, 0.2, 100.0, -105.0, mid(&c), &c, 2001).unwrap();
        assert_relative_eq!(bf.charge_fraction, 0.5, epsilon = 1e-12);
        assert_eq!(bf.discharge_power, 0.0);

        // With the default cap 0.01 MW the fraction is cut to 0.025.
        let c = cfg(110.0);
        let d = analytic_policy(0.0, 0.4, 0.2, 100.0, -105.0, mid(&c), &c).unwrap();
        assert_eq!(d.regime, Regime::MatchDemandByCharge);
        assert!(d.capped);
        assert_relative_eq!(d.action.charge_fraction, 0.025, epsilon = 1e-15);
    }

    #[test]
    fn case_c_matches_demand_by_discharging() {
        let c = cfg(110.0);
        let d = analytic_policy(0.0, 0.1, 0.12, 100.0, -120.0, mid(&c), &c).unwrap();
        assert_eq!(d.case.case, DemandCase::C);
        assert_eq!(d.regime, Regime::MatchDemandByDischarge);
        assert_eq!(d.action.charge_fraction, 0.0);
        assert_relative_eq!(d.action.discharge_power, 0.02, epsilon = 1e-15);
        // 0.02 is not a lattice point: the lattice hits E = D only up to its
        // spacing, so compare objective values within the lattice slack.
        let (bf, bv) = brute_force_policy(0.0, 0.1, 0.12, 100.0, -120.0, mid(&c), &c, 2001).unwrap();
        assert!((bf.discharge_power - 0.02).abs() <= 0.028 / 2000.0);
        let bx = admissible_box(mid(&c), &c.battery, 0.0).unwrap();
        let prob = LocalProblem::new(&c, 0.0, 0.1, 0.12, 100.0, bx);
        let slopes = Slopes::uniform(-120.0);
        let av = prob.objective(&d.action, slopes);
        assert!(av <= bv + 1e-12);
        assert!(bv <= av + lattice_slack(&prob, slopes, 2001));
    }

    #[test]
    fn objective_at_idle_with_balanced_sale() {
        let c = cfg(37.0);
        let bx = admissible_box(mid(&c), &c.battery, 0.0).unwrap();
        let prob = LocalProblem::new(&c, 0.0, 0.2, 0.2, 80.0, bx);
        let v = prob.objective(&ControlAction::idle(), Slopes::uniform(-50.0));
        assert_relative_eq!(v, -37.0 * 0.2, epsilon = 1e-12);
        assert_relative_eq!(v, prob.running_cost(&ControlAction::idle()), epsilon = 1e-15);
    }

    #[test]
    fn night_uses_zero_charge() {
        let c = cfg(110.0);
        let (bf, _) = brute_force_policy(0.0, 0.0, 0.2, 100.0, -500.0, mid(&c), &c, 51).unwrap();
        assert_eq!(bf.charge_fraction, 0.0);
        let d = analytic_policy(0.0, 0.0, 0.2, 100.0, -500.0, mid(&c), &c).unwrap();
        assert_eq!(d.action, ControlAction::idle());
        assert!(!d.case.producing);
    }

    #[test]
    fn box_projection() {
        let c = cfg(110.0);
        // Would discharge, but the battery is empty.
        let d = analytic_policy(0.0, 0.1, 0.3, 150.0, 0.0, c.battery.soc_min, &c).unwrap();
        assert_eq!(d.regime, Regime::Idle);
        // Would charge, but the battery is full.
        let d = analytic_policy(0.0, 0.5, 0.1, 100.0, -1e4, c.battery.soc_max, &c).unwrap();
        assert_eq!(d.regime, Regime::Idle);
    }

    #[test]
    fn ties_prefer_idle() {
        let c = cfg(110.0);
        // -Vs exactly on the discharge threshold of case a.
        let d = analytic_policy(0.0, 0.3, 0.0, 100.0, -97.0, mid(&c), &c).unwrap();
        assert_eq!(d.regime, Regime::Idle);
    }

    #[test]
    fn gauges_order() {
        let c = cfg(110.0);
        let bx = admissible_box(mid(&c), &c.battery, 0.0).unwrap();
        let g = LocalProblem::new(&c, 3.0, 0.1, 0.2, 120.0, bx).gauges(Slopes::uniform(-80.0));
        assert!(g.charge_incent >= g.charge);
        assert!(g.discharge_incent >= g.discharge);
    }

    fn random_problem() -> impl Strategy<Value = (f64, f64, f64, f64, f64, f64, f64)> {
        (
            0.0f64..24.0,
            prop_oneof![Just(0.0), 0.0f64..0.6],
            prop_oneof![Just(0.0), 0.0f64..0.4],
            1.0f64..300.0,
            0.0f64..200.0,
            -600.0f64..20.0,
            0.0f64..=0.03,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn analytic_matches_lattice((t, p, d, x, z, vs, s) in random_problem()) {
            let mut c = cfg(z);
            c.discount_rate = 0.01;
            let dec = analytic_policy(t, p, d, x, vs, s, &c).unwrap();
            let bx = admissible_box(s, &c.battery, 0.0).unwrap();
            let prob = LocalProblem::new(&c, t, p, d, x, bx);
            let slopes = Slopes::uniform(vs);
            let av = prob.objective(&dec.action, slopes);
            let (_, bv) = brute_force_min(&prob, slopes, 101);
            let slack = lattice_slack(&prob, slopes, 101);
            let eps = 1e-9 * (1.0 + av.abs());
            prop_assert!(av <= bv + eps, "analytic {av} > lattice {bv}");
            prop_assert!(bv <= av + slack + eps);
            // Same optimum as the candidate search.
            let (_, cv) = prob.best_candidate(slopes);
            prop_assert!((cv - av).abs() <= eps);
            prop_assert!(dec.action.charge_fraction * dec.action.discharge_power == 0.0);
            let member = prob.candidates().any(|cand| cand.action == dec.action);
            prop_assert!(member, "{dec:?} not a candidate");
        }

        #[test]
        fn regimes_monotone_in_slope(
            (t, p, d, x, z, _vs, _s) in random_problem(),
        ) {
            let c = cfg(z);
            let bx = admissible_box(0.015, &c.battery, 0.0).unwrap();
            let prob = LocalProblem::new(&c, t, p, d, x, bx);
            let mut last = 0u8;
            for i in 0..=400 {
                let vs = 20.0 - 2.0 * i as f64;
                let r = prob.ladder(vs).rank();
                prop_assert!(r >= last);
                last = r;
            }
        }

        #[test]
        fn night_discharge_is_all_or_nothing(d in 0.0281f64..0.5, x in 1.0f64..300.0, z in 0.0f64..200.0, vs in -600.0f64..20.0, s in 0.0f64..=0.03) {
            let c = cfg(z);
            let dec = analytic_policy(0.0, 0.0, d, x, vs, s, &c).unwrap();
            let cst = dec.action.discharge_power;
            prop_assert!(cst == 0.0 || cst == c.battery.max_discharge_power);
        }
    }
}
