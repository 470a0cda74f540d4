//! Scalar statistics: standard-normal CDF/quantile, a one-sample
//! Kolmogorov–Smirnov test, log-log least squares, and the estimators built
//! on the standardized gap pivot.
//!
//! Everything is dependency-free and deterministic; the normal CDF is
//! accurate to about 1e-14 absolute, far inside the 1e-12 contract used by
//! the tests.

use crate::error::{Error, Result};
use crate::trajectory::{Ensemble, Trajectory};
use serde::Serialize;

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// erf via its stable lower series, `2 z e^{-z^2}/sqrt(pi) * sum (2z^2)^n / (2n+1)!!`.
/// All terms are positive, so no cancellation; used for `z < 3`.
fn erf_series(z: f64) -> f64 {
    let zz = 2.0 * z * z;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut k = 0u32;
    while term > 1e-18 * sum {
        k += 1;
        term *= zz / (2 * k + 1) as f64;
        sum += term;
    }
    2.0 * z * (-z * z).exp() * FRAC_1_SQRT_PI * sum
}

/// erfc via the Lentz-evaluated continued fraction
/// `e^{-z^2}/sqrt(pi) / (z + (1/2)/(z + 1/(z + (3/2)/(z + ...))))`; used for
/// `z >= 3`, where it converges in a couple dozen iterations.
fn erfc_continued_fraction(z: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = z;
    let mut c = f;
    let mut d = 0.0f64;
    for k in 1..200 {
        let a = k as f64 / 2.0;
        d = z + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = z + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-z * z).exp() * FRAC_1_SQRT_PI / f
}

fn erfc_positive(z: f64) -> f64 {
    if z < 3.0 {
        1.0 - erf_series(z)
    } else {
        erfc_continued_fraction(z)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let z = x * std::f64::consts::FRAC_1_SQRT_2;
    if x >= 0.0 {
        1.0 - 0.5 * erfc_positive(z)
    } else {
        0.5 * erfc_positive(-z)
    }
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile, solved by bisection plus Newton polish to
/// better than 1e-10 in x.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "quantile needs p strictly inside (0, 1), got {p}"
        )));
    }
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    let mut x = 0.0f64;
    for _ in 0..60 {
        x = 0.5 * (lo + hi);
        if normal_cdf(x) < p {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo < 1e-6 {
            break;
        }
    }
    for _ in 0..8 {
        let err = normal_cdf(x) - p;
        let dx = err / normal_pdf(x);
        x -= dx;
        if dx.abs() < 1e-13 {
            break;
        }
    }
    Ok(x)
}

/// One-sample Kolmogorov–Smirnov result against the standard normal.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    /// Asymptotic Kolmogorov p-value at `sqrt(n) * statistic`.
    pub p_value: f64,
    pub n: usize,
}

/// Survival function of the Kolmogorov distribution,
/// `Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        // the omitted mass is below 1e-30 here
        return 1.0;
    }
    let mut sum = 0.0f64;
    let mut sign = 1.0f64;
    for k in 1..=100u32 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Tests a sample against the standard normal; needs n >= 10 finite values.
pub fn ks_test(sample: &[f64]) -> Result<KsResult> {
    let n = sample.len();
    if n < 10 {
        return Err(Error::precondition(format!(
            "KS test needs at least 10 observations, got {n}"
        )));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("KS sample contains non-finite values"));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n_f = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = normal_cdf(x);
        let upper = (i + 1) as f64 / n_f - cdf;
        let lower = cdf - i as f64 / n_f;
        d = d.max(upper).max(lower);
    }
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf(n_f.sqrt() * d),
        n,
    })
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the residual variance (n - 2 dof).
    pub slope_stderr: f64,
    pub points: usize,
}

/// Fits `ln y = intercept + slope * ln x`. Inputs must be positive, with at
/// least three distinct x values.
pub fn ols_loglog(xs: &[f64], ys: &[f64]) -> Result<OlsFit> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("x and y lengths differ"));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::precondition(format!(
            "log-log fit needs at least 3 points, got {n}"
        )));
    }
    for (&x, &y) in xs.iter().zip(ys) {
        if !(x > 0.0 && x.is_finite() && y > 0.0 && y.is_finite()) {
            return Err(Error::invalid(format!(
                "log-log fit needs positive finite inputs, got ({x}, {y})"
            )));
        }
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n_f = n as f64;
    let mx = lx.iter().sum::<f64>() / n_f;
    let my = ly.iter().sum::<f64>() / n_f;
    let mut sxx = 0.0f64;
    let mut sxy = 0.0f64;
    for i in 0..n {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if sxx <= 0.0 {
        return Err(Error::invalid("x values collapse to a single point"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ssr = 0.0f64;
    for i in 0..n {
        let resid = ly[i] - intercept - slope * lx[i];
        ssr += resid * resid;
    }
    let variance = (ssr / (n_f - 2.0)).max(0.0);
    Ok(OlsFit {
        slope,
        intercept,
        slope_stderr: (variance / sxx).sqrt(),
        points: n,
    })
}

/// A symmetric confidence interval for the synchronization target.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IntervalEstimate {
    pub t: u64,
    pub level: f64,
    pub center: f64,
    pub half_width: f64,
}

impl IntervalEstimate {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.center).abs() <= self.half_width
    }
}

/// Interval for the common limit fraction built from one trajectory at one
/// recorded time: the mean fraction converges at rate `sqrt(N t)` with
/// variance profile `U_t = Zbar (1 - Zbar)`, so
///
/// ```text
/// Zbar_t  +/-  q_{(1+level)/2} * sqrt(U_t / (N t))
/// ```
pub fn z_confidence_interval(traj: &Trajectory, t: u64, level: f64) -> Result<IntervalEstimate> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    if t < 1 {
        return Err(Error::precondition("interval scale is undefined at t = 0"));
    }
    let row = traj
        .index_of(t)
        .ok_or_else(|| Error::precondition(format!("time {t} is not recorded")))?;
    let zbar = traj.zbar_at(row);
    let u = zbar * (1.0 - zbar);
    let q = normal_quantile(0.5 * (1.0 + level))?;
    let half_width = q * (u / (traj.params().n() as f64 * t as f64)).sqrt();
    Ok(IntervalEstimate {
        t,
        level,
        center: zbar,
        half_width,
    })
}

/// Standardized gap pivot `W = sqrt(t) D_t(j) / sqrt((1 - 1/N) U_t)`, one
/// value per replica. In the strongly coupled regime its variance tends to
/// `1 / (2 alpha - 1)`, which is what the alpha estimator inverts; the
/// fluctuation statistics reuse it with their own scale factors.
pub fn gap_pivot_values(ens: &Ensemble, t: u64, urn: usize) -> Result<Vec<f64>> {
    if t < 1 {
        return Err(Error::precondition("gap pivot needs t >= 1"));
    }
    let n = ens.params().n();
    if urn >= n {
        return Err(Error::invalid(format!("urn {urn} out of range (N = {n})")));
    }
    let row = ens
        .index_of(t)
        .ok_or_else(|| Error::precondition(format!("time {t} is not recorded")))?;
    let shape = 1.0 - 1.0 / n as f64;
    let sqrt_t = (t as f64).sqrt();
    Ok(ens
        .trajectories()
        .iter()
        .map(|traj| {
            let zbar = traj.zbar_at(row);
            let u = zbar * (1.0 - zbar);
            sqrt_t * traj.d_at(row, urn) / (shape * u).sqrt()
        })
        .collect())
}

/// Moment estimate of the coupling from the gap pivot's ensemble variance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlphaEstimate {
    pub t: u64,
    pub urn: usize,
    pub replicas: usize,
    /// Sample variance of the pivot; estimates `1 / (2 alpha - 1)`.
    pub pivot_variance: f64,
    pub alpha_hat: f64,
    /// Normal-theory delta-method error, `1 / sqrt(2 (M - 1))`.
    pub stderr: f64,
}

/// Inverts the pivot variance: `alpha_hat = (1 + 1 / v) / 2`. Valid in the
/// strongly coupled regime; needs at least 500 replicas.
pub fn estimate_alpha(ens: &Ensemble, t: u64, urn: usize) -> Result<AlphaEstimate> {
    let m = ens.replicas();
    if m < 500 {
        return Err(Error::precondition(format!(
            "alpha estimation needs at least 500 replicas, got {m}"
        )));
    }
    let w = gap_pivot_values(ens, t, urn)?;
    let mean = w.iter().sum::<f64>() / m as f64;
    let variance = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m as f64 - 1.0);
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::DegenerateEnsemble(format!(
            "pivot variance {variance} at t={t}; cannot invert for alpha"
        )));
    }
    Ok(AlphaEstimate {
        t,
        urn,
        replicas: m,
        pivot_variance: variance,
        alpha_hat: 0.5 * (1.0 + 1.0 / variance),
        stderr: 1.0 / (2.0 * (m as f64 - 1.0)).sqrt(),
    })
}

/// Two-sided test of a pinned coupling value.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlphaTest {
    pub alpha0: f64,
    /// `(M - 1) * v / var0`, chi-square with M - 1 dof under the null.
    pub statistic: f64,
    pub p_value: f64,
    pub level: f64,
    pub reject: bool,
}

/// Chi-square CDF via the Wilson–Hilferty cube-root normal approximation;
/// excellent for the dof counts used here (hundreds and up).
pub fn chi_square_cdf(x: f64, dof: u64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = dof as f64;
    let c = 2.0 / (9.0 * k);
    normal_cdf(((x / k).powf(1.0 / 3.0) - (1.0 - c)) / c.sqrt())
}

/// Tests `H0: alpha = alpha0` by referring the pivot variance to its
/// chi-square null law. `alpha0` must be strictly above 1/2 (elsewhere the
/// pivot variance is not `1/(2 alpha - 1)`).
pub fn test_alpha_null(
    ens: &Ensemble,
    t: u64,
    urn: usize,
    alpha0: f64,
    level: f64,
) -> Result<AlphaTest> {
    if !(alpha0 > 0.5 && alpha0 <= 1.0) {
        return Err(Error::precondition(format!(
            "the null value must lie in (1/2, 1], got {alpha0}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let est = estimate_alpha(ens, t, urn)?;
    let dof = est.replicas as u64 - 1;
    let statistic = dof as f64 * est.pivot_variance * (2.0 * alpha0 - 1.0);
    let cdf = chi_square_cdf(statistic, dof);
    let p_value = (2.0 * cdf.min(1.0 - cdf)).clamp(0.0, 1.0);
    Ok(AlphaTest {
        alpha0,
        statistic,
        p_value,
        level,
        reject: p_value < 1.0 - level,
    })
}
