//! State-of-charge dynamics, the admissible control sets and the removal of
//! simultaneous charge and discharge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BatterySpec;
use crate::scalar::Scalar;

/// Fraction `a` of pv production sent to storage and discharge power `c`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ControlAction<T> {
    pub charge_fraction: T,
    /// MW.
    pub discharge_power: T,
}

impl<T: Scalar> ControlAction<T> {
    pub fn new(charge_fraction: T, discharge_power: T) -> Self {
        Self {
            charge_fraction,
            discharge_power,
        }
    }

    pub fn idle() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn is_simultaneous(&self) -> bool {
        self.charge_fraction > T::zero() && self.discharge_power > T::zero()
    }
}

/// Upper bounds of the control box at a given state of charge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBox<T> {
    /// 0 or 1.
    pub max_fraction: T,
    /// 0 or the maximum discharge power.
    pub max_discharge: T,
}

impl<T: Scalar> ControlBox<T> {
    pub fn can_charge(&self) -> bool {
        self.max_fraction > T::zero()
    }

    pub fn can_discharge(&self) -> bool {
        self.max_discharge > T::zero()
    }
}

/// Charging is forbidden at the top of the range, discharging at the bottom;
/// `tolerance` widens both boundaries.
pub fn admissible_box<T: Scalar>(s: T, spec: &BatterySpec<T>, tolerance: T) -> Result<ControlBox<T>> {
    if !(s >= spec.soc_min - tolerance && s <= spec.soc_max + tolerance) {
        return Err(Error::SocOutOfRange {
            soc: s.as_f64(),
            min: spec.soc_min.as_f64(),
            max: spec.soc_max.as_f64(),
            tolerance: tolerance.as_f64(),
        });
    }
    let at_bottom = s <= spec.soc_min + tolerance;
    let at_top = s >= spec.soc_max - tolerance;
    Ok(ControlBox {
        max_fraction: if at_top { T::zero() } else { T::one() },
        max_discharge: if at_bottom {
            T::zero()
        } else {
            spec.max_discharge_power
        },
    })
}

/// Largest admissible charge fraction given production `p`.
#[inline]
pub fn max_charge_fraction<T: Scalar>(p: T, spec: &BatterySpec<T>) -> T {
    if p > spec.max_charge_power {
        spec.max_charge_power / p
    } else {
        T::one()
    }
}

/// Rate of change of the state of charge, MW.
#[inline]
pub fn soc_drift<T: Scalar>(action: &ControlAction<T>, p: T, spec: &BatterySpec<T>) -> T {
    spec.charge_eff * action.charge_fraction * p - action.discharge_power / spec.discharge_eff
}

pub fn check_action<T: Scalar>(
    action: &ControlAction<T>,
    s: T,
    p: T,
    spec: &BatterySpec<T>,
    tolerance: T,
) -> Result<()> {
    let bx = admissible_box(s, spec, tolerance)?;
    let eps = T::lit(1e-12);
    let a = action.charge_fraction;
    let c = action.discharge_power;
    if !(a >= T::zero() && a <= bx.max_fraction + eps) {
        return Err(Error::InadmissibleAction(format!(
            "charge fraction {a} outside [0, {}]",
            bx.max_fraction
        )));
    }
    if !(c >= T::zero() && c <= bx.max_discharge * (T::one() + eps) + eps) {
        return Err(Error::InadmissibleAction(format!(
            "discharge power {c} outside [0, {}]",
            bx.max_discharge
        )));
    }
    if a * p > spec.max_charge_power * (T::one() + T::lit(1e-9)) {
        return Err(Error::InadmissibleAction(format!(
            "charging power {} exceeds {}",
            a * p,
            spec.max_charge_power
        )));
    }
    Ok(())
}

/// Result of one state-of-charge update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocStep<T> {
    pub soc: T,
    /// Magnitude removed by clamping to the operating range.
    pub clamp: T,
}

/// `s + (eta_c a P - c / eta_d) dt`, clamped to the operating range.
/// Clamping by more than `tolerance` is an infeasible step.
pub fn step_soc<T: Scalar>(
    s: T,
    action: &ControlAction<T>,
    p: T,
    dt: T,
    spec: &BatterySpec<T>,
    tolerance: T,
) -> Result<SocStep<T>> {
    check_action(action, s, p, spec, tolerance)?;
    step_soc_unchecked(s, action, p, dt, spec, tolerance)
}

/// [`step_soc`] for an action already known to be admissible at `s`.
#[inline]
pub(crate) fn step_soc_unchecked<T: Scalar>(
    s: T,
    action: &ControlAction<T>,
    p: T,
    dt: T,
    spec: &BatterySpec<T>,
    tolerance: T,
) -> Result<SocStep<T>> {
    let raw = s + soc_drift(action, p, spec) * dt;
    let soc = raw.max(spec.soc_min).min(spec.soc_max);
    let clamp = (raw - soc).abs();
    if clamp > tolerance {
        return Err(Error::InfeasibleStep {
            clamp: clamp.as_f64(),
            tolerance: tolerance.as_f64(),
        });
    }
    Ok(SocStep { soc, clamp })
}

/// Removes simultaneous charge and discharge while keeping the drift.
///
/// Sold power `(1 - a) P + c` never decreases.
pub fn purify<T: Scalar>(action: &ControlAction<T>, p: T, spec: &BatterySpec<T>) -> ControlAction<T> {
    if !action.is_simultaneous() {
        return *action;
    }
    let a = action.charge_fraction;
    let c = action.discharge_power;
    let round_trip = spec.charge_eff * spec.discharge_eff;
    if soc_drift(action, p, spec) <= T::zero() {
        ControlAction::new(T::zero(), (c - round_trip * a * p).max(T::zero()))
    } else {
        ControlAction::new((a - c / (round_trip * p)).max(T::zero()), T::zero())
    }
}

/// Shrinks the action so that one step of length `dt` stays inside the
/// operating range. Only the component pushing towards the violated bound
/// is reduced, and the drift lands exactly on that bound.
pub fn fit_to_step<T: Scalar>(
    action: &ControlAction<T>,
    s: T,
    p: T,
    dt: T,
    spec: &BatterySpec<T>,
) -> ControlAction<T> {
    let drift = soc_drift(action, p, spec);
    let lo = ((spec.soc_min - s) / dt).min(T::zero());
    let hi = ((spec.soc_max - s) / dt).max(T::zero());
    let mut out = *action;
    if drift < lo {
        out.discharge_power =
            (spec.discharge_eff * (spec.charge_eff * action.charge_fraction * p - lo)).max(T::zero());
    } else if drift > hi {
        out.charge_fraction = ((hi + action.discharge_power / spec.discharge_eff)
            / (spec.charge_eff * p))
            .max(T::zero());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::defaults;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spec() -> BatterySpec<f64> {
        defaults::battery()
    }

    #[test]
    fn box_branches() {
        let b = spec();
        let lo = admissible_box(0.0, &b, 0.0).unwrap();
        assert_eq!((lo.max_fraction, lo.max_discharge), (1.0, 0.0));
        let mid = admissible_box(0.015, &b, 0.0).unwrap();
        assert_eq!((mid.max_fraction, mid.max_discharge), (1.0, 0.028));
        let hi = admissible_box(0.03, &b, 0.0).unwrap();
        assert_eq!((hi.max_fraction, hi.max_discharge), (0.0, 0.028));
        assert!(matches!(
            admissible_box(0.04, &b, 0.0025),
            Err(Error::SocOutOfRange { .. })
        ));
        // Within tolerance of the bottom counts as the bottom.
        assert_eq!(admissible_box(0.002, &b, 0.0025).unwrap().max_discharge, 0.0);
    }

    #[test]
    fn idle_leaves_soc() {
        let r = step_soc(0.012, &ControlAction::idle(), 0.3, 0.5, &spec(), 1e-9).unwrap();
        assert_eq!(r.soc, 0.012);
        assert_eq!(r.clamp, 0.0);
    }

    #[test]
    fn charge_one_hour() {
        let r = step_soc(0.01, &ControlAction::new(1.0, 0.0), 0.005, 1.0, &spec(), 0.0025).unwrap();
        assert_relative_eq!(r.soc, 0.01495, epsilon = 1e-15);
    }

    #[test]
    fn over_drain_is_clamped_and_reported() {
        let a = ControlAction::new(0.0, 0.028);
        // One hour at full power removes 0.028866 MWh: no clamp yet.
        let r = step_soc(0.03, &a, 0.0, 1.0, &spec(), 0.0025).unwrap();
        assert_relative_eq!(r.soc, 0.03 - 0.028 / 0.97, epsilon = 1e-15);
        assert_eq!(r.clamp, 0.0);
        // A sub-cell overshoot is clamped silently and reported.
        let r = step_soc(0.03, &a, 0.0, 1.05, &spec(), 0.0025).unwrap();
        assert_eq!(r.soc, 0.0);
        assert_relative_eq!(r.clamp, 1.05 * 0.028 / 0.97 - 0.03, epsilon = 1e-15);
        // Beyond one half cell it is an infeasible step.
        assert!(matches!(
            step_soc(0.03, &a, 0.0, 1.5, &spec(), 0.0025),
            Err(Error::InfeasibleStep { .. })
        ));
    }

    #[test]
    fn inadmissible_actions() {
        let b = spec();
        // Charging beyond the power cap.
        assert!(matches!(
            step_soc(0.01, &ControlAction::new(1.0, 0.0), 0.5, 0.1, &b, 1e-9),
            Err(Error::InadmissibleAction(_))
        ));
        // Discharging an empty battery.
        assert!(matches!(
            step_soc(0.0, &ControlAction::new(0.0, 0.01), 0.0, 0.1, &b, 1e-9),
            Err(Error::InadmissibleAction(_))
        ));
    }

    #[test]
    fn purify_examples() {
        let b = spec();
        let a = ControlAction::new(0.0, 0.01);
        assert_eq!(purify(&a, 0.3, &b), a);
        let p = purify(&ControlAction::new(0.5, 0.02), 0.01, &b);
        assert_eq!(p.charge_fraction, 0.0);
        assert_relative_eq!(p.discharge_power, 0.02 - 0.99 * 0.97 * 0.005, epsilon = 1e-15);
        assert_relative_eq!(p.discharge_power, 0.0151985, epsilon = 1e-12);
        let unit = BatterySpec {
            charge_eff: 1.0,
            discharge_eff: 1.0,
            ..b
        };
        let p = purify(&ControlAction::new(0.9, 0.001), 0.01, &unit);
        assert_relative_eq!(p.charge_fraction, 0.8, epsilon = 1e-12);
        assert_eq!(p.discharge_power, 0.0);
    }

    #[test]
    fn fit_to_step_lands_on_bounds() {
        let b = spec();
        let a = fit_to_step(&ControlAction::new(0.0, 0.028), 0.0005, 0.0, 0.1, &b);
        let s = 0.0005 + soc_drift(&a, 0.0, &b) * 0.1;
        assert_relative_eq!(s, 0.0, epsilon = 1e-15);
        let a = fit_to_step(&ControlAction::new(0.02, 0.0), 0.0299, 0.5, 0.1, &b);
        let s = 0.0299 + soc_drift(&a, 0.5, &b) * 0.1;
        assert_relative_eq!(s, 0.03, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn purify_preserves_drift_and_raises_sales(
            a in 0.0f64..=1.0, c in 0.0f64..=0.028, p in 0.0f64..0.6,
            ec in 0.5f64..=1.0, ed in 0.5f64..=1.0,
        ) {
            let b = BatterySpec { charge_eff: ec, discharge_eff: ed, ..spec() };
            let act = ControlAction::new(a, c);
            let out = purify(&act, p, &b);
            prop_assert!(out.charge_fraction * out.discharge_power == 0.0);
            let d0 = soc_drift(&act, p, &b);
            let d1 = soc_drift(&out, p, &b);
            prop_assert!((d0 - d1).abs() <= 1e-12 * (d0.abs().max(c / ed)).max(1e-300));
            let e0 = (1.0 - a) * p + c;
            let e1 = (1.0 - out.charge_fraction) * p + out.discharge_power;
            prop_assert!(e1 >= e0 - 1e-15);
            if act.is_simultaneous() && ec * ed < 1.0 && p > 0.0 {
                prop_assert!(e1 > e0);
            }
        }

        #[test]
        fn step_soc_affine_before_clamp(
            a1 in 0.0f64..=1.0, c1 in 0.0f64..=0.028, a2 in 0.0f64..=1.0, c2 in 0.0f64..=0.028,
            p in 0.0f64..0.01, lam in 0.0f64..=1.0,
        ) {
            let b = spec();
            let f = |a: f64, c: f64| soc_drift(&ControlAction::new(a, c), p, &b);
            let mixed = f(lam * a1 + (1.0 - lam) * a2, lam * c1 + (1.0 - lam) * c2);
            prop_assert!((mixed - (lam * f(a1, c1) + (1.0 - lam) * f(a2, c2))).abs() < 1e-15);
        }

        #[test]
        fn fitted_sequences_stay_in_range(
            actions in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=0.028, 0.0f64..0.6), 1..200),
            s0 in 0.0f64..=0.03,
        ) {
            let b = spec();
            let dt = 0.024;
            let mut s = s0;
            for (a, c, p) in actions {
                let bx = admissible_box(s, &b, 1e-12).unwrap();
                let a = a.min(bx.max_fraction).min(max_charge_fraction(p, &b));
                let c = c.min(bx.max_discharge);
                let act = fit_to_step(&ControlAction::new(a, c), s, p, dt, &b);
                s = step_soc(s, &act, p, dt, &b, 1e-12).unwrap().soc;
                prop_assert!(s >= b.soc_min && s <= b.soc_max);
            }
        }
    }
}
