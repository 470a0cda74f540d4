//! Fluctuation analysis of the synchronization gaps.
//!
//! The gap of urn `j` is `D_t(j) = Z_t(j) - Zbar_t`. Its conditional drift
//! is a pure contraction, `-alpha D_t / (m + t + 1)`, so adding back the
//! accumulated contractions yields the compensated gap
//!
//! ```text
//! L_t(j) = D_t(j) + alpha * sum_{k=1}^{t-1} D_k(j) / (m + k + 1)
//! ```
//!
//! which is a martingale ([`CompensatorState`] maintains the running sum).
//! On top of the raw gaps this module provides: the power-law fit of the
//! ensemble second moment (`E[D_t^2]` decays like `t^{-2 alpha}`,
//! `t^{-1} ln t`, or `t^{-1}` as the coupling is weak, critical, or strong),
//! the four standardized pivots whose limiting law is standard normal, the
//! cross-time diagnostics of the weak-coupling limit, and the gap covariance
//! across urns.

use crate::error::{Error, Result};
use crate::model::{ModelParams, UrnSystemState};
use crate::stats::{gap_pivot_values, ols_loglog};
use crate::trajectory::Ensemble;
use serde::{Deserialize, Serialize};

/// Incremental state of the gap compensator.
///
/// After feeding consecutive state pairs through [`CompensatorState::advance`],
/// `compensated()` holds `L_t(j)` for the latest time. The arithmetic is the
/// same expression-for-expression as the fused loop inside
/// [`crate::trajectory::simulate`], so both routes agree bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatorState {
    running_sum: Vec<f64>,
    compensated: Vec<f64>,
}

impl CompensatorState {
    /// State at time zero: all gaps and sums vanish.
    pub fn new(n: usize) -> Self {
        CompensatorState {
            running_sum: vec![0.0; n],
            compensated: vec![0.0; n],
        }
    }

    /// `L` values at the last fed time.
    pub fn compensated(&self) -> &[f64] {
        &self.compensated
    }

    /// The accumulated `sum D_k(j) / (m + k + 1)` terms.
    pub fn running_sum(&self) -> &[f64] {
        &self.running_sum
    }

    /// Folds one transition `before -> after` (consecutive times) into the
    /// compensator.
    pub fn advance(
        &mut self,
        before: &UrnSystemState,
        after: &UrnSystemState,
        params: &ModelParams,
    ) -> Result<()> {
        if after.t() != before.t() + 1 {
            return Err(Error::precondition(format!(
                "compensator needs consecutive states, got t={} -> t={}",
                before.t(),
                after.t()
            )));
        }
        let n = params.n();
        if self.running_sum.len() != n {
            return Err(Error::InvariantViolation(format!(
                "compensator tracks {} urns, parameters say {n}",
                self.running_sum.len()
            )));
        }
        before.validate(params)?;
        after.validate(params)?;
        let alpha = params.alpha();
        let inv_next = 1.0 / ((params.m() + before.t()) as f64 + 1.0);
        let gaps_before = before.gaps(params);
        let gaps_after = after.gaps(params);
        for j in 0..n {
            self.running_sum[j] += gaps_before[j] * inv_next;
            self.compensated[j] = gaps_after[j] + alpha * self.running_sum[j];
        }
        Ok(())
    }
}

/// Decay regime of the gap second moment, decided by the coupling strength.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `0 < alpha < 1/2`: decay `t^{-2 alpha}`, expected log-log slope `-2 alpha`.
    Sub,
    /// `alpha = 1/2`: decay `t^{-1} ln t`; fitted after dividing out `ln t`.
    Critical,
    /// `1/2 < alpha <= 1`: decay `t^{-1}`, expected slope `-1`.
    Super,
}

/// Regime of a coupling value; `alpha = 0` has no power-law decay and is
/// rejected.
pub fn regime_of(alpha: f64) -> Result<Regime> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::precondition(format!(
            "scaling analysis needs alpha in (0, 1], got {alpha}"
        )));
    }
    Ok(if alpha < 0.5 {
        Regime::Sub
    } else if alpha == 0.5 {
        Regime::Critical
    } else {
        Regime::Super
    })
}

/// Power-law fit of the ensemble gap second moment.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalingFit {
    pub regime: Regime,
    pub urn: usize,
    pub t_lo: u64,
    pub t_hi: u64,
    pub points: usize,
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    /// What the theory predicts for this regime and coupling.
    pub expected_slope: f64,
}

/// Ensemble estimate of `E[D_t(urn)^2]` at each recorded time in
/// `[t_lo, t_hi]`, as `(t, mean, relative standard error)` triples.
pub fn gap_second_moment_series(
    ens: &Ensemble,
    urn: usize,
    t_lo: u64,
    t_hi: u64,
) -> Result<Vec<(u64, f64, f64)>> {
    if urn >= ens.params().n() {
        return Err(Error::invalid(format!(
            "urn {urn} out of range (N = {})",
            ens.params().n()
        )));
    }
    if t_lo > t_hi {
        return Err(Error::invalid(format!("window [{t_lo}, {t_hi}] is empty")));
    }
    let m = ens.replicas() as f64;
    let mut out = Vec::new();
    for (row, &t) in ens.record_times().iter().enumerate() {
        if t < t_lo.max(1) || t > t_hi {
            continue;
        }
        let mut sum = 0.0f64;
        let mut sum_sq = 0.0f64;
        for traj in ens.trajectories() {
            let d2 = traj.d_at(row, urn) * traj.d_at(row, urn);
            sum += d2;
            sum_sq += d2 * d2;
        }
        let mean = sum / m;
        let var = (sum_sq / m - mean * mean).max(0.0);
        let rel_se = if mean > 0.0 {
            (var / m).sqrt() / mean
        } else {
            f64::INFINITY
        };
        out.push((t, mean, rel_se));
    }
    Ok(out)
}

/// Fits the decay exponent of `E[D_t^2]` over the recorded times in
/// `[t_lo, t_hi]`. Requires at least 8 usable grid points and ensemble
/// means resolved to better than 5% relative standard error.
pub fn fit_scaling_exponent(
    ens: &Ensemble,
    urn: usize,
    t_lo: u64,
    t_hi: u64,
) -> Result<ScalingFit> {
    let alpha = ens.params().alpha();
    let regime = regime_of(alpha)?;
    // ln ln t must be defined and positive
    let floor = if regime == Regime::Critical { 2 } else { 1 };
    let series = gap_second_moment_series(ens, urn, t_lo.max(floor), t_hi)?;
    if series.len() < 8 {
        return Err(Error::precondition(format!(
            "scaling fit needs at least 8 recorded times in [{t_lo}, {t_hi}], found {}",
            series.len()
        )));
    }
    let mut xs = Vec::with_capacity(series.len());
    let mut ys = Vec::with_capacity(series.len());
    for &(t, mean, rel_se) in &series {
        if mean <= 0.0 {
            return Err(Error::DegenerateEnsemble(format!(
                "gap second moment vanished at t={t}"
            )));
        }
        if rel_se >= 0.05 {
            return Err(Error::precondition(format!(
                "ensemble too small: E[D^2] at t={t} has relative standard error {rel_se:.3}"
            )));
        }
        xs.push(t as f64);
        ys.push(match regime {
            Regime::Critical => mean / (t as f64).ln(),
            _ => mean,
        });
    }
    let fit = ols_loglog(&xs, &ys)?;
    let expected_slope = match regime {
        Regime::Sub => -2.0 * alpha,
        Regime::Critical | Regime::Super => -1.0,
    };
    Ok(ScalingFit {
        regime,
        urn,
        t_lo,
        t_hi,
        points: fit.points,
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        intercept: fit.intercept,
        expected_slope,
    })
}

/// The four standardized fluctuation statistics. Each is asymptotically
/// standard normal in its stated regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CltKind {
    /// `sqrt(N t) (Zbar_t - Z) / sqrt(U_t)` — the mean around its limit;
    /// any coupling.
    S1,
    /// `sqrt((2 alpha - 1) t) D_t(j) / sqrt((1 - 1/N) U_t)` — gaps, strong
    /// coupling only.
    S2,
    /// `sqrt(t / ln t) D_t(j) / sqrt((1 - 1/N) U_t)` — gaps at the critical
    /// coupling.
    S3,
    /// `sqrt(t) (Z_t(j) - Z) / sqrt((1/N + (1 - 1/N)/(2 alpha - 1)) U_t)` —
    /// a single urn around the limit, strong coupling.
    S4,
}

impl CltKind {
    pub fn label(self) -> &'static str {
        match self {
            CltKind::S1 => "s1",
            CltKind::S2 => "s2",
            CltKind::S3 => "s3",
            CltKind::S4 => "s4",
        }
    }

    /// Whether this statistic compares against a late-time proxy for the
    /// limit (and therefore needs a second recorded time).
    pub fn needs_proxy(self) -> bool {
        matches!(self, CltKind::S1 | CltKind::S4)
    }

    /// Whether this statistic is about one urn rather than the mean.
    pub fn needs_urn(self) -> bool {
        !matches!(self, CltKind::S1)
    }
}

/// One standardized sample: a value per replica, ready for a normality test.
#[derive(Debug, Clone, Serialize)]
pub struct CltSample {
    pub kind: CltKind,
    pub t: u64,
    /// Late time whose mean fraction stands in for the unobservable limit
    /// (S1 and S4 only).
    pub proxy_t: Option<u64>,
    pub urn: Option<usize>,
    pub values: Vec<f64>,
}

/// Default minimum for `proxy_t / t`; at 100 the proxy substitution
/// perturbs the pivot scale by about `sqrt(t / proxy_t) = 10%` of one
/// standard error.
pub const DEFAULT_PROXY_RATIO: f64 = 100.0;

/// Builds a standardized fluctuation sample with the default proxy-ratio
/// floor of 100.
pub fn clt_sample(
    ens: &Ensemble,
    kind: CltKind,
    t: u64,
    proxy_t: Option<u64>,
    urn: Option<usize>,
) -> Result<CltSample> {
    clt_sample_with_min_ratio(ens, kind, t, proxy_t, urn, DEFAULT_PROXY_RATIO)
}

/// As [`clt_sample`], with an explicit floor on `proxy_t / t`.
pub fn clt_sample_with_min_ratio(
    ens: &Ensemble,
    kind: CltKind,
    t: u64,
    proxy_t: Option<u64>,
    urn: Option<usize>,
    min_ratio: f64,
) -> Result<CltSample> {
    let params = ens.params();
    let n = params.n() as f64;
    let alpha = params.alpha();
    match kind {
        CltKind::S2 | CltKind::S4 => {
            if !(alpha > 0.5) {
                return Err(Error::precondition(format!(
                    "{} requires strong coupling alpha > 1/2, got {alpha}",
                    kind.label()
                )));
            }
        }
        CltKind::S3 => {
            if alpha != 0.5 {
                return Err(Error::precondition(format!(
                    "s3 is the critical-coupling statistic; alpha = {alpha} is not 1/2"
                )));
            }
        }
        CltKind::S1 => {}
    }
    let min_t = if kind == CltKind::S3 { 2 } else { 1 };
    if t < min_t {
        return Err(Error::precondition(format!(
            "{} needs t >= {min_t}, got {t}",
            kind.label()
        )));
    }
    let row = ens
        .index_of(t)
        .ok_or_else(|| Error::precondition(format!("time {t} is not recorded")))?;

    let proxy_row =
        if kind.needs_proxy() {
            let big_t = proxy_t.ok_or_else(|| {
                Error::precondition(format!("{} needs a proxy time for the limit", kind.label()))
            })?;
            if (big_t as f64) < min_ratio * t as f64 {
                return Err(Error::precondition(format!(
                    "proxy time {big_t} is less than {min_ratio} x t = {t}"
                )));
            }
            Some(ens.index_of(big_t).ok_or_else(|| {
                Error::precondition(format!("proxy time {big_t} is not recorded"))
            })?)
        } else {
            if proxy_t.is_some() {
                return Err(Error::invalid(format!(
                    "{} does not use a proxy time",
                    kind.label()
                )));
            }
            None
        };

    let urn_idx = if kind.needs_urn() {
        let j =
            urn.ok_or_else(|| Error::precondition(format!("{} needs an urn index", kind.label())))?;
        if j >= params.n() {
            return Err(Error::invalid(format!(
                "urn {j} out of range (N = {})",
                params.n()
            )));
        }
        Some(j)
    } else {
        if urn.is_some() {
            return Err(Error::invalid("s1 is a mean statistic; no urn applies"));
        }
        None
    };

    let t_f = t as f64;
    let values: Vec<f64> = match kind {
        CltKind::S1 => {
            let row_proxy = proxy_row.unwrap();
            ens.trajectories()
                .iter()
                .map(|traj| {
                    let zbar = traj.zbar_at(row);
                    let u = zbar * (1.0 - zbar);
                    (n * t_f).sqrt() * (zbar - traj.zbar_at(row_proxy)) / u.sqrt()
                })
                .collect()
        }
        CltKind::S2 => gap_pivot_values(ens, t, urn_idx.unwrap())?
            .into_iter()
            .map(|w| (2.0 * alpha - 1.0).sqrt() * w)
            .collect(),
        CltKind::S3 => gap_pivot_values(ens, t, urn_idx.unwrap())?
            .into_iter()
            .map(|w| w / t_f.ln().sqrt())
            .collect(),
        CltKind::S4 => {
            let row_proxy = proxy_row.unwrap();
            let j = urn_idx.unwrap();
            let shape = 1.0 / n + (1.0 - 1.0 / n) / (2.0 * alpha - 1.0);
            ens.trajectories()
                .iter()
                .map(|traj| {
                    let zbar = traj.zbar_at(row);
                    let u = zbar * (1.0 - zbar);
                    t_f.sqrt() * (traj.z_at(row, j) - traj.zbar_at(row_proxy)) / (shape * u).sqrt()
                })
                .collect()
        }
    };

    Ok(CltSample {
        kind,
        t,
        proxy_t: if kind.needs_proxy() { proxy_t } else { None },
        urn: urn_idx,
        values,
    })
}

/// Cross-time diagnostics of the weak-coupling limit.
///
/// For `alpha < 1/2` the scaled gap `t^alpha D_t(j)` converges almost surely
/// to a nondegenerate random variable. Two far-apart times then see nearly
/// the same draw: their replica-wise correlation approaches 1, while the
/// ensemble variance stays bounded away from 0.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SubLimitDiagnostics {
    pub t1: u64,
    pub t2: u64,
    pub urn: usize,
    /// Pearson correlation of `t1^alpha D_{t1}` with `t2^alpha D_{t2}`
    /// across replicas.
    pub corr: f64,
    /// Sample variance of the scaled gap at `t2`.
    pub var_hat: f64,
    /// Mean absolute scaled gap at `t2`.
    pub mean_abs: f64,
}

/// Computes the weak-coupling limit diagnostics; requires `alpha < 1/2`
/// and `t2 >= 2 t1`.
pub fn limit_diagnostics_sub(
    ens: &Ensemble,
    urn: usize,
    t1: u64,
    t2: u64,
) -> Result<SubLimitDiagnostics> {
    let alpha = ens.params().alpha();
    if !(alpha < 0.5) {
        return Err(Error::precondition(format!(
            "the almost-sure limit diagnostic applies for alpha < 1/2, got {alpha}"
        )));
    }
    if urn >= ens.params().n() {
        return Err(Error::invalid(format!(
            "urn {urn} out of range (N = {})",
            ens.params().n()
        )));
    }
    if t1 < 1 || t2 < 2 * t1 {
        return Err(Error::precondition(format!(
            "need 1 <= t1 and t2 >= 2 t1, got t1={t1}, t2={t2}"
        )));
    }
    let m = ens.replicas();
    if m < 2 {
        return Err(Error::precondition("need at least 2 replicas"));
    }
    let row1 = ens
        .index_of(t1)
        .ok_or_else(|| Error::precondition(format!("time {t1} is not recorded")))?;
    let row2 = ens
        .index_of(t2)
        .ok_or_else(|| Error::precondition(format!("time {t2} is not recorded")))?;
    let s1 = (t1 as f64).powf(alpha);
    let s2 = (t2 as f64).powf(alpha);
    let xs: Vec<f64> = ens
        .trajectories()
        .iter()
        .map(|tr| s1 * tr.d_at(row1, urn))
        .collect();
    let ys: Vec<f64> = ens
        .trajectories()
        .iter()
        .map(|tr| s2 * tr.d_at(row2, urn))
        .collect();
    let m_f = m as f64;
    let mx = xs.iter().sum::<f64>() / m_f;
    let my = ys.iter().sum::<f64>() / m_f;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    let mut abs_sum = 0.0;
    for i in 0..m {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
        abs_sum += ys[i].abs();
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::DegenerateEnsemble(
            "scaled gaps have zero variance; correlation undefined".into(),
        ));
    }
    Ok(SubLimitDiagnostics {
        t1,
        t2,
        urn,
        corr: sxy / (sxx.sqrt() * syy.sqrt()),
        var_hat: syy / (m_f - 1.0),
        mean_abs: abs_sum / m_f,
    })
}

fn sample_covariance(vectors: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let m = vectors.len() as f64;
    let mut means = vec![0.0f64; n];
    for v in vectors {
        for j in 0..n {
            means[j] += v[j];
        }
    }
    for mj in means.iter_mut() {
        *mj /= m;
    }
    let mut cov = vec![vec![0.0f64; n]; n];
    for v in vectors {
        for i in 0..n {
            let di = v[i] - means[i];
            for j in 0..n {
                cov[i][j] += di * (v[j] - means[j]);
            }
        }
    }
    for row in cov.iter_mut() {
        for c in row.iter_mut() {
            *c /= m - 1.0;
        }
    }
    cov
}

/// Sample covariance of the standardized gap vector
/// `sqrt((2 alpha - 1) t) D_t(.) / sqrt(U_t)` across replicas. In the strong
/// coupling regime the limit is `(1 - 1/N)` on the diagonal and `-1/N` off
/// it. Needs `alpha > 1/2` and at least 2000 replicas.
pub fn covariance_structure(ens: &Ensemble, t: u64) -> Result<Vec<Vec<f64>>> {
    let alpha = ens.params().alpha();
    if !(alpha > 0.5) {
        return Err(Error::precondition(format!(
            "gap covariance normalization needs alpha > 1/2, got {alpha}"
        )));
    }
    if ens.replicas() < 2000 {
        return Err(Error::precondition(format!(
            "covariance estimation needs at least 2000 replicas, got {}",
            ens.replicas()
        )));
    }
    if t < 1 {
        return Err(Error::precondition("covariance needs t >= 1"));
    }
    let row = ens
        .index_of(t)
        .ok_or_else(|| Error::precondition(format!("time {t} is not recorded")))?;
    let n = ens.params().n();
    let scale_t = ((2.0 * alpha - 1.0) * t as f64).sqrt();
    let vectors: Vec<Vec<f64>> = ens
        .trajectories()
        .iter()
        .map(|traj| {
            let zbar = traj.zbar_at(row);
            let u = (zbar * (1.0 - zbar)).sqrt();
            (0..n).map(|j| scale_t * traj.d_at(row, j) / u).collect()
        })
        .collect();
    Ok(sample_covariance(&vectors, n))
}

/// Sample covariance of the raw (unscaled) gap vector at `t`. Because gaps
/// sum to zero replica by replica, every row of this matrix sums to zero up
/// to rounding — a structural check independent of any limit theorem.
pub fn covariance_structure_raw(ens: &Ensemble, t: u64) -> Result<Vec<Vec<f64>>> {
    if ens.replicas() < 2 {
        return Err(Error::precondition("need at least 2 replicas"));
    }
    let row = ens
        .index_of(t)
        .ok_or_else(|| Error::precondition(format!("time {t} is not recorded")))?;
    let n = ens.params().n();
    let vectors: Vec<Vec<f64>> = ens
        .trajectories()
        .iter()
        .map(|traj| traj.d_row(row).to_vec())
        .collect();
    Ok(sample_covariance(&vectors, n))
}
