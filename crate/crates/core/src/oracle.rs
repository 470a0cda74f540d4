//! Exhaustive-enumeration reference values for small systems.
//!
//! For `N * t_max <= 24` the full outcome tree (2^N branches per step) is
//! walked once, depth-first, accumulating exact moments of the mean fraction
//! and of urn 1's gap at every depth. These numbers are what Monte Carlo
//! estimates are checked against: the two routes share nothing but the
//! one-step probability formula.
//!
//! Enumeration is exact by default. An optional branch-mass cutoff turns it
//! into a documented approximate mode for slightly deeper trees; the
//! per-depth mass then falls short of 1 by the pruned amount.

use crate::error::{Error, Result};
use crate::model::{reinforcement_probability, ModelParams, UrnSystemState};
use crate::numerics::Kahan;
use serde::Serialize;

/// Hard ceiling on `N * t_max` for full enumeration; 2^24 leaf paths.
pub const ENUMERATION_LIMIT: u64 = 24;

/// Exact moments at one depth of the outcome tree.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MomentRow {
    pub t: u64,
    /// Total probability mass reaching this depth; 1 up to rounding unless
    /// pruning was requested.
    pub mass: f64,
    /// E[mean fraction] — conserved at `a / m` for every coupling.
    pub mean_fraction: f64,
    /// E[(mean fraction)^2]
    pub mean_fraction_sq: f64,
    /// E[D^2] for urn 1's gap D = Z(1) - mean.
    pub gap_sq: f64,
    /// E[D^4]
    pub gap_fourth: f64,
    /// E[|D|]
    pub gap_abs: f64,
}

/// Moment table for depths `0..=t_max`.
#[derive(Debug, Clone, Serialize)]
pub struct ExactMoments {
    pub params: ModelParams,
    pub pruned_below: Option<f64>,
    pub rows: Vec<MomentRow>,
}

impl ExactMoments {
    pub fn row(&self, t: u64) -> &MomentRow {
        &self.rows[t as usize]
    }
}

#[derive(Default, Clone)]
struct RowAcc {
    mass: Kahan,
    zbar: Kahan,
    zbar_sq: Kahan,
    d_sq: Kahan,
    d_fourth: Kahan,
    d_abs: Kahan,
}

struct Walker<'a> {
    params: &'a ModelParams,
    t_max: u64,
    cutoff: Option<f64>,
    acc: Vec<RowAcc>,
    /// per-depth scratch for branch probabilities, avoids allocation
    probs: Vec<Vec<f64>>,
}

impl Walker<'_> {
    fn record(&mut self, red: &[u64], sum_red: u64, t: u64, weight: f64) {
        let params = self.params;
        let inv_total = 1.0 / ((params.m() + t) as f64);
        let z_bar = sum_red as f64 * inv_total * (1.0 / params.n() as f64);
        let d = red[0] as f64 * inv_total - z_bar;
        let row = &mut self.acc[t as usize];
        row.mass.add(weight);
        row.zbar.add(weight * z_bar);
        row.zbar_sq.add(weight * z_bar * z_bar);
        row.d_sq.add(weight * d * d);
        row.d_fourth.add(weight * d * d * d * d);
        row.d_abs.add(weight * d.abs());
    }

    fn visit(&mut self, red: &mut Vec<u64>, sum_red: u64, t: u64, weight: f64) {
        self.record(red, sum_red, t, weight);
        if t == self.t_max {
            return;
        }
        let n = self.params.n();
        let alpha = self.params.alpha();
        let inv_total = 1.0 / ((self.params.m() + t) as f64);
        let z_bar = sum_red as f64 * inv_total * (1.0 / n as f64);
        {
            let probs = &mut self.probs[t as usize];
            probs.clear();
            for &r in red.iter() {
                probs.push(reinforcement_probability(
                    alpha,
                    z_bar,
                    r as f64 * inv_total,
                ));
            }
        }
        for mask in 0u32..(1u32 << n) {
            let mut branch = 1.0f64;
            for j in 0..n {
                let p = self.probs[t as usize][j];
                branch *= if mask >> j & 1 == 1 { p } else { 1.0 - p };
            }
            let child_weight = weight * branch;
            if let Some(eps) = self.cutoff {
                if child_weight < eps {
                    continue;
                }
            }
            let mut added = 0u64;
            for j in 0..n {
                if mask >> j & 1 == 1 {
                    red[j] += 1;
                    added += 1;
                }
            }
            self.visit(red, sum_red + added, t + 1, child_weight);
            for j in 0..n {
                if mask >> j & 1 == 1 {
                    red[j] -= 1;
                }
            }
        }
    }
}

fn enumerate(params: &ModelParams, t_max: u64, cutoff: Option<f64>) -> Result<ExactMoments> {
    let work = params.n() as u64 * t_max;
    if work > ENUMERATION_LIMIT {
        return Err(Error::ResourceBound(format!(
            "exact enumeration is limited to N * t_max <= {ENUMERATION_LIMIT}; \
             got N={} and t_max={t_max} (N * t_max = {work})",
            params.n()
        )));
    }
    let depth = t_max as usize + 1;
    let mut walker = Walker {
        params,
        t_max,
        cutoff,
        acc: vec![RowAcc::default(); depth],
        probs: vec![Vec::with_capacity(params.n()); depth],
    };
    let mut red = vec![params.a(); params.n()];
    let sum_red = params.a() * params.n() as u64;
    walker.visit(&mut red, sum_red, 0, 1.0);

    let rows: Vec<MomentRow> = walker
        .acc
        .iter()
        .enumerate()
        .map(|(t, acc)| MomentRow {
            t: t as u64,
            mass: acc.mass.value(),
            mean_fraction: acc.zbar.value(),
            mean_fraction_sq: acc.zbar_sq.value(),
            gap_sq: acc.d_sq.value(),
            gap_fourth: acc.d_fourth.value(),
            gap_abs: acc.d_abs.value(),
        })
        .collect();

    if cutoff.is_none() {
        for row in &rows {
            assert!(
                (row.mass - 1.0).abs() <= 1e-10,
                "probability mass at depth {} drifted to {}",
                row.t,
                row.mass
            );
        }
    }

    Ok(ExactMoments {
        params: *params,
        pruned_below: cutoff,
        rows,
    })
}

/// Walks the full outcome tree and returns exact moments for every depth up
/// to `t_max`. Fails with a resource-bound error when `N * t_max > 24`.
pub fn enumerate_exact(params: &ModelParams, t_max: u64) -> Result<ExactMoments> {
    enumerate(params, t_max, None)
}

/// Approximate enumeration that drops subtrees whose total mass falls below
/// `cutoff`. Moments are then exact conditional sums over the retained paths
/// only; compare `rows[t].mass` against 1 to bound the omission.
pub fn enumerate_pruned(params: &ModelParams, t_max: u64, cutoff: f64) -> Result<ExactMoments> {
    if !cutoff.is_finite() || cutoff <= 0.0 {
        return Err(Error::invalid("pruning cutoff must be positive"));
    }
    enumerate(params, t_max, Some(cutoff))
}

/// Expectation of `f` over the 2^N one-step successors of `state`.
pub fn one_step_expectation(
    params: &ModelParams,
    state: &UrnSystemState,
    f: impl Fn(&UrnSystemState) -> f64,
) -> Result<f64> {
    state.validate(params)?;
    let n = params.n();
    if n as u64 > ENUMERATION_LIMIT {
        return Err(Error::ResourceBound(format!(
            "one-step enumeration is limited to N <= {ENUMERATION_LIMIT}, got {n}"
        )));
    }
    let probs = crate::model::reinforcement_probabilities(state, params);
    let mut acc = Kahan::default();
    for mask in 0u32..(1u32 << n) {
        let mut branch = 1.0f64;
        let mut red = state.red().to_vec();
        for j in 0..n {
            if mask >> j & 1 == 1 {
                branch *= probs[j];
                red[j] += 1;
            } else {
                branch *= 1.0 - probs[j];
            }
        }
        let child = UrnSystemState::from_parts(state.t() + 1, red, params)?;
        acc.add(branch * f(&child));
    }
    Ok(acc.value())
}

/// Residuals of the one-step conditional drift identity. For each urn `j`,
///
/// ```text
/// E[Z_{t+1}(j) | state] - Z_t(j)  =  -alpha * D_t(j) / (m + t + 1)
/// ```
///
/// and the returned vector holds lhs - rhs per urn; enumeration-exact
/// arithmetic keeps honest residuals below 1e-14.
pub fn conditional_drift_check(params: &ModelParams, state: &UrnSystemState) -> Result<Vec<f64>> {
    let gaps = state.gaps(params);
    let fractions = state.fractions(params);
    let denom = (params.m() + state.t() + 1) as f64;
    let mut residuals = Vec::with_capacity(params.n());
    for j in 0..params.n() {
        let expect = one_step_expectation(params, state, |child| child.fraction(params, j))?;
        let lhs = expect - fractions[j];
        let rhs = -params.alpha() * gaps[j] / denom;
        residuals.push(lhs - rhs);
    }
    Ok(residuals)
}
