use serde::{Deserialize, Serialize};

use super::grid::SolverGrid;
use crate::battery::ControlAction;
use crate::error::{Error, Result};
use crate::policy::Regime;
use crate::scalar::Scalar;

/// Value function on the lattice, EUR, laid out as `[t][p][s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField<T> {
    pub grid: SolverGrid<T>,
    pub values: Vec<T>,
}

/// Minimising control at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyField<T> {
    pub grid: SolverGrid<T>,
    pub actions: Vec<ControlAction<T>>,
    pub regimes: Vec<Regime>,
    pub capped: Vec<bool>,
}

impl<T: Scalar> PolicyField<T> {
    pub fn at(&self, i: usize, n: usize, k: usize) -> (ControlAction<T>, Regime) {
        let idx = self.grid.index(i, n, k);
        (self.actions[idx], self.regimes[idx])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeKind {
    /// `(V_{k+1} - V_k) / delta`, used with charging.
    Forward,
    /// `(V_k - V_{k-1}) / delta`, used with discharging.
    Backward,
    Central,
}

impl<T: Scalar> ValueField<T> {
    pub fn zeros(grid: SolverGrid<T>) -> Self {
        Self {
            values: vec![T::zero(); grid.len()],
            grid,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, n: usize, k: usize) -> T {
        self.values[self.grid.index(i, n, k)]
    }

    /// Slice `i` as `[p][s]`.
    pub fn slice(&self, i: usize) -> &[T] {
        let len = self.grid.slice_len();
        &self.values[i * len..(i + 1) * len]
    }

    /// Difference quotient in `s`. One-sided differences fall back to the
    /// available side at the ends of the range.
    pub fn value_slope_s(&self, i: usize, n: usize, k: usize, kind: SlopeKind) -> T {
        let g = &self.grid;
        let top = g.n_s - 1;
        let fwd = |k: usize| (self.at(i, n, k + 1) - self.at(i, n, k)) / g.s_step;
        match kind {
            SlopeKind::Forward if k < top => fwd(k),
            SlopeKind::Backward if k > 0 => fwd(k - 1),
            SlopeKind::Central if k > 0 && k < top => {
                (self.at(i, n, k + 1) - self.at(i, n, k - 1)) / (T::lit(2.0) * g.s_step)
            }
            _ => {
                if k == top {
                    fwd(k - 1)
                } else {
                    fwd(k)
                }
            }
        }
    }

    /// Trilinear interpolation; exact at nodes.
    pub fn value_at(&self, t: T, p: T, s: T) -> Result<T> {
        let g = &self.grid;
        let (i, wt) = locate(t, T::zero(), g.time_step, g.n_t, "t")?;
        let (n, wp) = locate(p, g.p_min, g.p_step, g.n_p, "p")?;
        let (k, ws) = locate(s, g.s_min, g.s_step, g.n_s, "s")?;
        let one = T::one();
        let mut acc = T::zero();
        for (di, fi) in [(0, one - wt), (1, wt)] {
            if fi == T::zero() {
                continue;
            }
            for (dn, fn_) in [(0, one - wp), (1, wp)] {
                if fn_ == T::zero() {
                    continue;
                }
                for (dk, fk) in [(0, one - ws), (1, ws)] {
                    if fk == T::zero() {
                        continue;
                    }
                    acc = acc + fi * fn_ * fk * self.at(i + di, n + dn, k + dk);
                }
            }
        }
        Ok(acc)
    }

    /// Shape violations per time slice.
    pub fn check_shape(&self, tolerance: T) -> ShapeReport {
        let g = &self.grid;
        let mut slices = Vec::with_capacity(g.n_t);
        for i in 0..g.n_t {
            let sl = self.slice(i);
            let v = |n: usize, k: usize| sl[n * g.n_s + k];
            let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
            let (mut mono_s, mut conv_s, mut mono_p) = (T::zero(), T::zero(), T::zero());
            for n in 0..g.n_p {
                for k in 0..g.n_s {
                    let x = v(n, k);
                    lo = lo.min(x);
                    hi = hi.max(x);
                    if k + 1 < g.n_s {
                        mono_s = mono_s.max(v(n, k + 1) - x);
                    }
                    if k >= 1 && k + 1 < g.n_s {
                        conv_s = conv_s.max(-(v(n, k + 1) - T::lit(2.0) * x + v(n, k - 1)));
                    }
                    if n + 1 < g.n_p {
                        mono_p = mono_p.max(v(n + 1, k) - x);
                    }
                }
            }
            slices.push(SliceShape {
                slice: i,
                time: g.time(i).as_f64(),
                s_monotonicity: mono_s.as_f64(),
                s_convexity: conv_s.as_f64(),
                p_monotonicity: mono_p.as_f64(),
                range: (hi - lo).as_f64(),
            });
        }
        ShapeReport {
            tolerance: tolerance.as_f64(),
            slices,
        }
    }
}

/// Cell index and weight of the upper node. Points within `1e-9` cells of
/// the hull are snapped onto it.
pub(crate) fn locate<T: Scalar>(x: T, start: T, step: T, count: usize, what: &str) -> Result<(usize, T)> {
    let r = (x - start) / step;
    let last = T::from_usize_lossy(count - 1);
    let eps = T::lit(1e-9);
    if !(r >= -eps && r <= last + eps) {
        return Err(Error::ExtrapolationRefused(format!(
            "{what} = {x} outside [{start}, {}]",
            start + step * last
        )));
    }
    let r = r.max(T::zero()).min(last);
    let mut c = r.floor().to_usize().unwrap_or(0);
    if c >= count - 1 {
        c = count - 2;
    }
    let mut w = r - T::from_usize_lossy(c);
    if w < eps {
        w = T::zero();
    } else if w > T::one() - eps {
        w = T::one();
    }
    Ok((c, w))
}

/// Largest violations in one time slice, EUR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceShape {
    pub slice: usize,
    pub time: f64,
    /// Largest increase between neighbours in `s`.
    pub s_monotonicity: f64,
    /// Largest negative second difference in `s`.
    pub s_convexity: f64,
    /// Largest increase between neighbours in `p`.
    pub p_monotonicity: f64,
    /// `max - min` of the slice.
    pub range: f64,
}

impl SliceShape {
    pub fn max_violation(&self) -> f64 {
        self.s_monotonicity.max(self.s_convexity).max(self.p_monotonicity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeReport {
    pub tolerance: f64,
    pub slices: Vec<SliceShape>,
}

impl ShapeReport {
    /// Slices whose violations exceed the absolute tolerance.
    pub fn failures(&self) -> Vec<&SliceShape> {
        self.slices
            .iter()
            .filter(|s| s.max_violation() > self.tolerance)
            .collect()
    }

    /// Slices whose violations exceed `relative * range`.
    pub fn relative_failures(&self, relative: f64) -> Vec<&SliceShape> {
        self.slices
            .iter()
            .filter(|s| s.max_violation() > relative * s.range)
            .collect()
    }

    pub fn worst(&self) -> Option<&SliceShape> {
        self.slices
            .iter()
            .max_by(|a, b| a.max_violation().total_cmp(&b.max_violation()))
    }
}
