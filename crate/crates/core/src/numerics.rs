//! Log-space attenuation products and a solver for the scalar recursions
//! behind the gap dynamics.
//!
//! The conditional gap contraction per step is `1 - alpha / (m + h + 1)`;
//! products of these factors over step ranges control how early fluctuations
//! attenuate. Multiplying thousands of near-one factors directly loses
//! precision and risks underflow, so everything here works with sums of
//! `ln_1p` terms and exponentiates at the end.

use crate::error::{Error, Result};

/// Compensated (Kahan) accumulator for long sums of small terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Attenuation products `c(k, t) = prod_{h=k}^{t} (1 - alpha / (m + h + 1))`
/// for `k = 1..=t+1`, with the empty product `c(t+1, t) = 1`.
///
/// `c(k, t)` is how much a unit gap present just after step `k-1` is damped,
/// in conditional mean, by time `t+1`; for large `k` it behaves like
/// `(k / t)^alpha`.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    alpha: f64,
    m: u64,
    t: u64,
    /// `log_c[k - 1]` holds `ln c(k, t)` for `k = 1..=t+1`.
    log_c: Vec<f64>,
}

/// Builds the full attenuation table for one `(alpha, m, t)`.
pub fn coefficients(alpha: f64, m: u64, t: u64) -> Result<CoefficientTable> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha > 1.0 {
        return Err(Error::invalid(format!(
            "attenuation products need alpha in (0, 1], got {alpha}"
        )));
    }
    if m < 2 {
        return Err(Error::invalid(format!(
            "initial ball count m must be at least 2, got {m}"
        )));
    }
    if t < 1 {
        return Err(Error::invalid("coefficient table needs t >= 1"));
    }
    let size = usize::try_from(t + 1).map_err(|_| Error::invalid("t too large"))?;
    let mut log_c = vec![0.0f64; size];
    // suffix sums: ln c(k,t) = sum_{h=k}^{t} ln(1 - alpha/(m+h+1))
    let mut acc = Kahan::default();
    for k in (1..=t).rev() {
        acc.add((-alpha / ((m + k + 1) as f64)).ln_1p());
        log_c[(k - 1) as usize] = acc.value();
    }
    Ok(CoefficientTable { alpha, m, t, log_c })
}

impl CoefficientTable {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// `ln c(k, t)`; `k` must lie in `1..=t+1`.
    pub fn log_value(&self, k: u64) -> f64 {
        assert!(
            (1..=self.t + 1).contains(&k),
            "k={k} outside 1..={}",
            self.t + 1
        );
        self.log_c[(k - 1) as usize]
    }

    /// `c(k, t)`; `k` must lie in `1..=t+1`.
    pub fn value(&self, k: u64) -> f64 {
        self.log_value(k).exp()
    }
}

/// Largest deviation `|c(k, t) * (t / k)^alpha - 1|` over a geometric grid
/// of at least 20 points in `[k_min, t]`. Small values certify the
/// `(k / t)^alpha` asymptotics uniformly over that range.
pub fn uniform_ratio_check(table: &CoefficientTable, k_min: u64) -> Result<f64> {
    let t = table.t();
    if k_min < 1 || k_min > t {
        return Err(Error::invalid(format!("k_min={k_min} outside 1..={t}")));
    }
    let ln_t = (t as f64).ln();
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    // geometric sweep, at least 20 points, never skipping past t
    let ratio = ((t as f64) / (k_min as f64)).powf(1.0 / 19.0).max(1.0);
    let mut k_f = k_min as f64;
    let mut last_k = 0u64;
    while checked < 20 || last_k < t {
        let k = (k_f.round() as u64).clamp(k_min, t);
        if k != last_k {
            let dev = (table.log_value(k) - table.alpha() * ((k as f64).ln() - ln_t)).exp() - 1.0;
            worst = worst.max(dev.abs());
            checked += 1;
            last_k = k;
        }
        if last_k == t {
            break;
        }
        k_f = (k_f * ratio).max(k_f + 1.0);
    }
    Ok(worst)
}

/// The scaled-product ratio `[c(1, t) t^alpha] / [c(1, 2t) (2t)^alpha]`.
/// Both numerator and denominator converge to the same constant, so the
/// ratio tends to 1; its distance from 1 measures how far the asymptotic
/// regime has been reached at `t`.
pub fn dyadic_ratio(alpha: f64, m: u64, t: u64) -> Result<f64> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha > 1.0 {
        return Err(Error::invalid(format!(
            "attenuation products need alpha in (0, 1], got {alpha}"
        )));
    }
    if m < 2 || t < 1 {
        return Err(Error::invalid("dyadic ratio needs m >= 2 and t >= 1"));
    }
    let two_t = t
        .checked_mul(2)
        .ok_or_else(|| Error::invalid("t too large"))?;
    let mut acc = Kahan::default();
    let mut log_c1_t = 0.0f64;
    for h in 1..=two_t {
        acc.add((-alpha / ((m + h + 1) as f64)).ln_1p());
        if h == t {
            log_c1_t = acc.value();
        }
    }
    let log_c1_2t = acc.value();
    let log_ratio = log_c1_t + alpha * (t as f64).ln() - log_c1_2t - alpha * (two_t as f64).ln();
    Ok(log_ratio.exp())
}

/// Solves `x_{k+1} = f(k) x_k + g(k)`, `x_0 = 0`, in closed form:
///
/// ```text
/// x_t = sum_{i=0}^{t-1} g(i) * prod_{k=i+1}^{t-1} f(k)
/// ```
///
/// evaluated through prefix sums of `ln f` so that long products neither
/// underflow nor accumulate multiplicative rounding. Requires `f > 0`.
pub fn solve_linear_recursion(
    t: u64,
    f: impl Fn(u64) -> f64,
    g: impl Fn(u64) -> f64,
) -> Result<f64> {
    if t == 0 {
        return Ok(0.0);
    }
    let len = usize::try_from(t).map_err(|_| Error::invalid("t too large"))?;
    // prefix[i] = sum_{k=0}^{i} ln f(k)
    let mut prefix = Vec::with_capacity(len);
    let mut acc = Kahan::default();
    for k in 0..t {
        let fk = f(k);
        if !fk.is_finite() || fk <= 0.0 {
            return Err(Error::invalid(format!(
                "recursion factor f({k}) = {fk} must be positive and finite"
            )));
        }
        acc.add(fk.ln());
        prefix.push(acc.value());
    }
    let top = prefix[len - 1];
    let mut sum = Kahan::default();
    for i in 0..t {
        let gi = g(i);
        if !gi.is_finite() {
            return Err(Error::invalid(format!(
                "recursion input g({i}) = {gi} must be finite"
            )));
        }
        // weight = prod_{k=i+1}^{t-1} f(k) = exp(prefix[t-1] - prefix[i])
        sum.add(gi * (top - prefix[i as usize]).exp());
    }
    Ok(sum.value())
}

/// Direct iteration of the same recursion; the reference route against
/// which the closed form is checked.
pub fn iterate_linear_recursion(
    t: u64,
    f: impl Fn(u64) -> f64,
    g: impl Fn(u64) -> f64,
) -> Result<f64> {
    let mut x = 0.0f64;
    for k in 0..t {
        let fk = f(k);
        if !fk.is_finite() || fk <= 0.0 {
            return Err(Error::invalid(format!(
                "recursion factor f({k}) = {fk} must be positive and finite"
            )));
        }
        x = fk * x + g(k);
    }
    Ok(x)
}
