//! Harmonic regression of log-levels and AR(1) maximum likelihood for the
//! OU residuals.
//!
//! Standard errors of the regression coefficients are sandwich estimates
//! under an AR(1) residual covariance, since OU residuals sampled on a grid
//! are exactly AR(1). For pv the correlation also spans the nights.

use crate::error::{Error, Result};
use crate::model::{Harmonic, OuParams, PvSeasonalSpec, SeasonalSpec};
use crate::scalar::Scalar;

use super::SeriesSample;

/// Pv samples whose fitted seasonal level is below this are treated as night.
pub const PV_NIGHT_THRESHOLD_MW: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicFit<T> {
    pub spec: SeasonalSpec<T>,
    /// `log(value) - fitted log-curve`, one per sample.
    pub residuals: Vec<T>,
    pub intercept_se: T,
    pub sine_se: Vec<T>,
    pub cosine_se: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuFit<T> {
    pub params: OuParams<T>,
    pub mean_reversion_se: T,
    pub volatility_se: T,
    /// Fitted lag-one coefficient `exp(-xi dt)`.
    pub lag_coefficient: T,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvFit<T> {
    pub spec: PvSeasonalSpec<T>,
    pub amplitude_se: T,
    pub phase_se: T,
    /// Log residuals over contiguous daylight runs.
    pub segments: Vec<Vec<T>>,
}

/// Least squares of `log(values)` on `{1, sin(2 pi psi_i t), cos(2 pi psi_i t)}`.
pub fn fit_harmonic<T: Scalar>(sample: &SeriesSample<T>, frequencies: &[T]) -> Result<HarmonicFit<T>> {
    sample.validate()?;
    if let Some(j) = sample.values.iter().position(|v| !(*v > T::zero())) {
        return Err(Error::InvalidConfig(format!(
            "harmonic fit needs positive values; sample {j} is {}",
            sample.values[j]
        )));
    }
    for (i, f) in frequencies.iter().enumerate() {
        if !(*f > T::zero()) || frequencies[..i].contains(f) {
            return Err(Error::InvalidFrequencies(format!(
                "frequency {f} is non-positive or duplicated"
            )));
        }
    }
    let n_cols = 1 + 2 * frequencies.len();
    if sample.len() <= n_cols {
        return Err(Error::InsufficientData {
            needed: n_cols + 1,
            got: sample.len(),
        });
    }
    let design: Vec<Vec<T>> = sample
        .timestamps
        .iter()
        .map(|&t| {
            let mut row = Vec::with_capacity(n_cols);
            row.push(T::one());
            for &f in frequencies {
                let w = T::TAU() * f * t;
                row.push(w.sin());
                row.push(w.cos());
            }
            row
        })
        .collect();
    let y: Vec<T> = sample.values.iter().map(|v| v.ln()).collect();

    let gram = gram_matrix(&design, n_cols);
    let inv = spd_inverse(&gram).ok_or_else(|| {
        Error::InvalidFrequencies("singular design matrix (duplicate or aliased frequencies)".into())
    })?;
    let xty: Vec<T> = (0..n_cols)
        .map(|c| design.iter().zip(&y).map(|(row, &v)| row[c] * v).sum())
        .collect();
    let beta = mat_vec(&inv, &xty);

    let residuals: Vec<T> = design
        .iter()
        .zip(&y)
        .map(|(row, &v)| v - dot(row, &beta))
        .collect();

    let gaps = vec![T::one(); residuals.len()];
    let cov = ar1_sandwich(&design, &inv, &[residuals.as_slice()], &gaps, n_cols);
    let se = |c: usize| cov[c][c].max(T::zero()).sqrt();

    let harmonics = frequencies
        .iter()
        .enumerate()
        .map(|(i, &f)| Harmonic::new(f, beta[1 + 2 * i], beta[2 + 2 * i]))
        .collect();
    Ok(HarmonicFit {
        spec: SeasonalSpec::new(beta[0], harmonics)?,
        residuals,
        intercept_se: se(0),
        sine_se: (0..frequencies.len()).map(|i| se(1 + 2 * i)).collect(),
        cosine_se: (0..frequencies.len()).map(|i| se(2 + 2 * i)).collect(),
    })
}

/// AR(1) maximum likelihood on mean-zero residuals with spacing `dt`.
pub fn fit_ou<T: Scalar>(residuals: &[T], dt: T) -> Result<OuFit<T>> {
    if residuals.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: residuals.len(),
        });
    }
    fit_ou_segments(&[residuals.to_vec()], dt)
}

/// As [`fit_ou`], pooling lag-one pairs from several contiguous runs.
pub fn fit_ou_segments<T: Scalar>(segments: &[Vec<T>], dt: T) -> Result<OuFit<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidConfig("sampling interval must be > 0".into()));
    }
    let pairs: usize = segments.iter().map(|s| s.len().saturating_sub(1)).sum();
    if pairs < 2 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: pairs + 1,
        });
    }
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for s in segments {
        for w in s.windows(2) {
            sxy = sxy + w[1] * w[0];
            sxx = sxx + w[0] * w[0];
        }
    }
    let a = sxy / sxx;
    if !(a > T::zero() && a < T::one()) {
        return Err(Error::NonMeanRevertingResiduals {
            coefficient: a.as_f64(),
        });
    }
    let n = T::from_usize_lossy(pairs);
    let mut sse = T::zero();
    for s in segments {
        for w in s.windows(2) {
            let e = w[1] - a * w[0];
            sse = sse + e * e;
        }
    }
    let innovation_var = sse / n;
    let xi = -a.ln() / dt;
    let sigma2 = innovation_var * T::lit(2.0) * xi / (T::one() - a * a);
    let sigma = sigma2.sqrt();

    // Delta method: Var(a) = v / sum u^2, Var(ln v) = 2 / n, independent.
    let var_a = innovation_var / sxx;
    let xi_se = var_a.sqrt() / (a * dt);
    let dlog_sigma2_da = T::one() / (a * a.ln()) + T::lit(2.0) * a / (T::one() - a * a);
    let var_log_sigma2 = dlog_sigma2_da * dlog_sigma2_da * var_a + T::lit(2.0) / n;
    let sigma_se = sigma * T::lit(0.5) * var_log_sigma2.sqrt();

    Ok(OuFit {
        params: OuParams::new(xi, sigma),
        mean_reversion_se: xi_se,
        volatility_se: sigma_se,
        lag_coefficient: a,
        pairs,
    })
}

/// Fits `A max{sin(2 pi psi (t + phase)), 0}` to pv data in log space over
/// samples with positive production; `psi` is fixed.
///
/// The phase is found by profiling the log-likelihood (the amplitude is the
/// geometric mean of `P / sin`), then OU residuals are collected where the
/// fitted curve exceeds `threshold`.
pub fn fit_pv_seasonal<T: Scalar>(
    sample: &SeriesSample<T>,
    frequency: T,
    threshold: T,
) -> Result<PvFit<T>> {
    sample.validate()?;
    if !(frequency > T::zero()) {
        return Err(Error::InvalidFrequencies("pv frequency must be > 0".into()));
    }
    let day: Vec<(T, T)> = sample
        .timestamps
        .iter()
        .zip(&sample.values)
        .filter(|(_, v)| **v > T::zero())
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if day.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: day.len(),
        });
    }
    let w = T::TAU() * frequency;
    let profile = |phase: T| -> T {
        let mut sum = T::zero();
        let mut sum2 = T::zero();
        for &(t, lv) in &day {
            let s = (w * (t + phase)).sin();
            if !(s > T::zero()) {
                return T::infinity();
            }
            let r = lv - s.ln();
            sum = sum + r;
            sum2 = sum2 + r * r;
        }
        let n = T::from_usize_lossy(day.len());
        sum2 - sum * sum / n
    };

    let period = T::one() / frequency;
    let steps = 4800usize;
    let h = period / T::from_usize_lossy(steps);
    let mut best = (T::infinity(), T::zero());
    for i in 0..steps {
        let phase = h * T::from_usize_lossy(i);
        let v = profile(phase);
        if v < best.0 {
            best = (v, phase);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::InvalidConfig(
            "pv production is positive over more than half a period".into(),
        ));
    }
    let (mut lo, mut hi) = (best.1 - h, best.1 + h);
    let g = T::lit(0.5 * (5f64.sqrt() - 1.0));
    for _ in 0..100 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if profile(m1) <= profile(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let mut phase = T::lit(0.5) * (lo + hi);
    if profile(phase) > best.0 {
        phase = best.1;
    }
    // Zero production outside daylight brackets the phase to within one
    // sample; the least-squares optimum then sits on that bracket and is
    // not a stationary point.
    let eps = sample.spacing() * T::lit(1e-6);
    let pinned = !profile(phase + eps).is_finite() || !profile(phase - eps).is_finite();
    let n = T::from_usize_lossy(day.len());
    let log_amp = day
        .iter()
        .map(|&(t, lv)| lv - (w * (t + phase)).sin().ln())
        .sum::<T>()
        / n;
    let phase = ((phase % period) + period) % period;
    let spec = PvSeasonalSpec {
        amplitude: log_amp.exp(),
        frequency,
        phase,
    };

    // Contiguous daylight runs above the threshold.
    let mut segments: Vec<Vec<T>> = Vec::new();
    let mut jac: Vec<Vec<[T; 2]>> = Vec::new();
    let mut gaps: Vec<T> = Vec::new();
    let mut last: Option<usize> = None;
    let mut open = false;
    for (j, (&t, &v)) in sample.timestamps.iter().zip(&sample.values).enumerate() {
        let f = spec.eval(t);
        if f > threshold && v > T::zero() {
            if !open {
                segments.push(Vec::new());
                jac.push(Vec::new());
                open = true;
            }
            gaps.push(T::from_usize_lossy(last.map_or(1, |l| j - l)));
            last = Some(j);
            let arg = w * (t + phase);
            segments.last_mut().unwrap().push(v.ln() - f.ln());
            jac.last_mut()
                .unwrap()
                .push([T::one(), w * arg.cos() / arg.sin()]);
        } else {
            open = false;
        }
    }
    if segments.is_empty() {
        return Err(Error::InsufficientData { needed: 3, got: 0 });
    }
    let n_cols = if pinned { 1 } else { 2 };
    let design: Vec<Vec<T>> = jac.iter().flatten().map(|r| r[..n_cols].to_vec()).collect();
    let gram = gram_matrix(&design, n_cols);
    let (amplitude_se, phase_se) = match spd_inverse(&gram) {
        Some(inv) => {
            let seg_refs: Vec<&[T]> = segments.iter().map(|s| s.as_slice()).collect();
            let cov = ar1_sandwich(&design, &inv, &seg_refs, &gaps, n_cols);
            let phase_se = if pinned {
                // Uniform over one sampling interval.
                sample.spacing() / T::lit(12f64.sqrt())
            } else {
                cov[1][1].max(T::zero()).sqrt()
            };
            (spec.amplitude * cov[0][0].max(T::zero()).sqrt(), phase_se)
        }
        None => (T::nan(), T::nan()),
    };
    Ok(PvFit {
        spec,
        amplitude_se,
        phase_se,
        segments,
    })
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn mat_vec<T: Scalar>(m: &[Vec<T>], v: &[T]) -> Vec<T> {
    m.iter().map(|row| dot(row, v)).collect()
}

fn gram_matrix<T: Scalar>(design: &[Vec<T>], n_cols: usize) -> Vec<Vec<T>> {
    let mut g = vec![vec![T::zero(); n_cols]; n_cols];
    for row in design {
        for i in 0..n_cols {
            for j in 0..=i {
                g[i][j] = g[i][j] + row[i] * row[j];
            }
        }
    }
    for i in 0..n_cols {
        for j in 0..i {
            g[j][i] = g[i][j];
        }
    }
    g
}

/// Inverse of a symmetric positive definite matrix via Cholesky; `None` when
/// a pivot collapses relative to the diagonal scale.
fn spd_inverse<T: Scalar>(a: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let n = a.len();
    let scale = (0..n).map(|i| a[i][i].abs()).fold(T::zero(), T::max);
    let mut l = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s = s - l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > scale * T::lit(1e-11)) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut inv = vec![vec![T::zero(); n]; n];
    for col in 0..n {
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let mut s = if i == col { T::one() } else { T::zero() };
            for k in 0..i {
                s = s - l[i][k] * y[k];
            }
            y[i] = s / l[i][i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s = s - l[k][i] * inv[k][col];
            }
            inv[i][col] = s / l[i][i];
        }
    }
    Some(inv)
}

/// `y = R x` with `R_ij = phi^{|i-j|}`, in O(n).
#[cfg(test)]
fn ar1_apply<T: Scalar>(x: &[T], phi: T) -> Vec<T> {
    ar1_apply_gapped(x, &vec![phi; x.len()])
}

/// `y = R x` with `R_ij` the product of `decay[l]` for `l` in `(min, max]`,
/// i.e. an exponential kernel on irregular spacing, in O(n).
fn ar1_apply_gapped<T: Scalar>(x: &[T], decay: &[T]) -> Vec<T> {
    let n = x.len();
    let mut fwd = vec![T::zero(); n];
    let mut acc = T::zero();
    for i in 0..n {
        acc = x[i] + decay[i] * acc;
        fwd[i] = acc;
    }
    let mut out = vec![T::zero(); n];
    acc = T::zero();
    for i in (0..n).rev() {
        out[i] = fwd[i] + acc;
        acc = decay[i] * (x[i] + acc);
    }
    out
}

/// `G^{-1} X' Omega X G^{-1}` with `Omega` the AR(1) covariance fitted to
/// `residual_segments`. `design` rows follow the segments in order and
/// `gaps[i]` is the number of sampling steps between rows `i - 1` and `i`,
/// so correlation carries across the breaks between segments.
fn ar1_sandwich<T: Scalar>(
    design: &[Vec<T>],
    gram_inv: &[Vec<T>],
    residual_segments: &[&[T]],
    gaps: &[T],
    n_cols: usize,
) -> Vec<Vec<T>> {
    let (mut s0, mut count) = (T::zero(), 0usize);
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for seg in residual_segments {
        for &r in seg.iter() {
            s0 = s0 + r * r;
            count += 1;
        }
        for w in seg.windows(2) {
            sxy = sxy + w[0] * w[1];
            sxx = sxx + w[0] * w[0];
        }
    }
    let gamma0 = s0 / T::from_usize_lossy(count.max(1));
    // Same lag-one estimate as the OU fit; with strong persistence the
    // segment ends would otherwise bias it visibly towards zero.
    let phi = if sxx > T::zero() { sxy / sxx } else { T::zero() };
    let phi = phi.max(T::zero()).min(T::lit(0.999_999));
    let decay: Vec<T> = gaps.iter().map(|&g| phi.powf(g)).collect();

    let mut meat = vec![vec![T::zero(); n_cols]; n_cols];
    for c in 0..n_cols {
        let col: Vec<T> = design.iter().map(|r| r[c]).collect();
        let rc = ar1_apply_gapped(&col, &decay);
        for d in 0..n_cols {
            let v: T = design.iter().zip(&rc).map(|(r, &x)| r[d] * x).sum();
            meat[d][c] = v * gamma0;
        }
    }
    let left: Vec<Vec<T>> = (0..n_cols)
        .map(|i| {
            (0..n_cols)
                .map(|j| (0..n_cols).map(|k| gram_inv[i][k] * meat[k][j]).sum())
                .collect()
        })
        .collect();
    (0..n_cols)
        .map(|i| {
            (0..n_cols)
                .map(|j| (0..n_cols).map(|k| left[i][k] * gram_inv[k][j]).sum())
                .collect()
        })
        .collect()
}
