//! The interacting urn system and its one-step transition.
//!
//! `N` urns each start with `a` red and `b` black balls. At every step each
//! urn `j` adds one ball, red with probability
//!
//! ```text
//! p_j = alpha * mean_fraction + (1 - alpha) * fraction_j
//! ```
//!
//! where both fractions are taken from the state *before* the step, and all
//! `N` draws are conditionally independent. `alpha = 0` gives `N` decoupled
//! classical urns; `alpha = 1` makes every urn reinforce toward the common
//! mean.
//!
//! Replay note: fractions are computed as `red * (1 / (m + t))` and the mean
//! as `sum_red * (1 / (m + t)) * (1 / N)`. These exact expressions are part
//! of the reproducibility contract — `simulate` and repeated `step` calls
//! agree bit for bit because they share them.

use crate::error::{Error, Result};
use crate::rng::UrnRng;
use serde::{Deserialize, Serialize};

/// Immutable description of one experiment's urn system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr")]
pub struct ModelParams {
    n: u32,
    a: u32,
    b: u32,
    alpha: f64,
}

#[derive(Deserialize)]
struct ParamsRepr {
    n: u32,
    a: u32,
    b: u32,
    alpha: f64,
}

impl TryFrom<ParamsRepr> for ModelParams {
    type Error = Error;

    fn try_from(r: ParamsRepr) -> Result<Self> {
        ModelParams::new(r.n, r.a, r.b, r.alpha)
    }
}

impl ModelParams {
    /// `n` urns, initial composition `a` red / `b` black, coupling `alpha`.
    pub fn new(n: u32, a: u32, b: u32, alpha: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 urns, got {n}")));
        }
        if a < 1 || b < 1 {
            return Err(Error::invalid(format!(
                "initial composition must have a >= 1 and b >= 1, got a={a}, b={b}"
            )));
        }
        if !alpha.is_finite() || !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!(
                "coupling alpha must lie in [0, 1], got {alpha}"
            )));
        }
        Ok(ModelParams { n, a, b, alpha })
    }

    /// Number of urns, as an index bound.
    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn n_raw(&self) -> u32 {
        self.n
    }

    pub fn a(&self) -> u64 {
        self.a as u64
    }

    pub fn a_raw(&self) -> u32 {
        self.a
    }

    pub fn b(&self) -> u64 {
        self.b as u64
    }

    pub fn b_raw(&self) -> u32 {
        self.b
    }

    /// Initial number of balls per urn, `m = a + b`.
    pub fn m(&self) -> u64 {
        self.a as u64 + self.b as u64
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Initial red fraction `a / m`, the conserved ensemble mean.
    pub fn initial_fraction(&self) -> f64 {
        self.a as f64 / self.m() as f64
    }
}

/// The probability that an urn with red fraction `z_j` adds a red ball when
/// the system mean is `z_bar`. Single source of truth for the transition
/// law; every simulation and enumeration path funnels through it.
#[inline]
pub fn reinforcement_probability(alpha: f64, z_bar: f64, z_j: f64) -> f64 {
    alpha * z_bar + (1.0 - alpha) * z_j
}

/// Red-ball counts of all urns after `t` steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UrnSystemState {
    t: u64,
    red: Vec<u64>,
}

impl UrnSystemState {
    /// The time-zero state: every urn holds `a` red balls.
    pub fn initial(params: &ModelParams) -> Self {
        UrnSystemState {
            t: 0,
            red: vec![params.a(); params.n()],
        }
    }

    /// Rebuilds a state from raw counts, validating against `params`.
    pub fn from_parts(t: u64, red: Vec<u64>, params: &ModelParams) -> Result<Self> {
        let state = UrnSystemState { t, red };
        state.validate(params)?;
        Ok(state)
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn red(&self) -> &[u64] {
        &self.red
    }

    /// Total balls per urn at this time, `m + t`.
    pub fn total_balls(&self, params: &ModelParams) -> u64 {
        params.m() + self.t
    }

    /// Red fraction of urn `j` (0-based).
    pub fn fraction(&self, params: &ModelParams, j: usize) -> f64 {
        let inv_total = 1.0 / (self.total_balls(params) as f64);
        self.red[j] as f64 * inv_total
    }

    /// All red fractions.
    pub fn fractions(&self, params: &ModelParams) -> Vec<f64> {
        let inv_total = 1.0 / (self.total_balls(params) as f64);
        self.red.iter().map(|&r| r as f64 * inv_total).collect()
    }

    /// System mean fraction (the arithmetic mean over urns).
    pub fn mean_fraction(&self, params: &ModelParams) -> f64 {
        let sum_red: u64 = self.red.iter().sum();
        let inv_total = 1.0 / (self.total_balls(params) as f64);
        sum_red as f64 * inv_total * (1.0 / params.n() as f64)
    }

    /// Centered fractions `fraction_j - mean`, one per urn. They sum to zero
    /// up to rounding.
    pub fn gaps(&self, params: &ModelParams) -> Vec<f64> {
        let inv_total = 1.0 / (self.total_balls(params) as f64);
        let z_bar = self.mean_fraction(params);
        self.red
            .iter()
            .map(|&r| r as f64 * inv_total - z_bar)
            .collect()
    }

    /// Checks count-range and shape consistency against `params`.
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if self.red.len() != params.n() {
            return Err(Error::InvariantViolation(format!(
                "state has {} urns, parameters say {}",
                self.red.len(),
                params.n()
            )));
        }
        let lo = params.a();
        let hi = params.a() + self.t;
        for (j, &r) in self.red.iter().enumerate() {
            if r < lo || r > hi {
                return Err(Error::InvariantViolation(format!(
                    "urn {} holds {} red balls at t={}, outside [{}, {}]",
                    j, r, self.t, lo, hi
                )));
            }
        }
        Ok(())
    }
}

/// Per-urn reinforcement probabilities from the current state.
pub fn reinforcement_probabilities(state: &UrnSystemState, params: &ModelParams) -> Vec<f64> {
    let inv_total = 1.0 / (state.total_balls(params) as f64);
    let z_bar = state.mean_fraction(params);
    state
        .red
        .iter()
        .map(|&r| reinforcement_probability(params.alpha(), z_bar, r as f64 * inv_total))
        .collect()
}

/// Advances the system by one step, drawing one Bernoulli per urn in index
/// order. All probabilities come from the pre-step state.
pub fn step(
    state: &UrnSystemState,
    params: &ModelParams,
    rng: &mut UrnRng,
) -> Result<UrnSystemState> {
    state.validate(params)?;
    let inv_total = 1.0 / (state.total_balls(params) as f64);
    let z_bar = state.mean_fraction(params);
    let alpha = params.alpha();
    let mut red = state.red.clone();
    for r in red.iter_mut() {
        let p = reinforcement_probability(alpha, z_bar, *r as f64 * inv_total);
        if rng.bernoulli(p) {
            *r += 1;
        }
    }
    Ok(UrnSystemState {
        t: state.t + 1,
        red,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u32, a: u32, b: u32, alpha: f64) -> ModelParams {
        ModelParams::new(n, a, b, alpha).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ModelParams::new(1, 1, 1, 0.5).is_err());
        assert!(ModelParams::new(2, 0, 1, 0.5).is_err());
        assert!(ModelParams::new(2, 1, 0, 0.5).is_err());
        assert!(ModelParams::new(2, 1, 1, -0.1).is_err());
        assert!(ModelParams::new(2, 1, 1, 1.5).is_err());
        assert!(ModelParams::new(2, 1, 1, f64::NAN).is_err());
        assert!(ModelParams::new(2, 1, 1, 1.0).is_ok());
        assert!(ModelParams::new(2, 1, 1, 0.0).is_ok());
    }

    #[test]
    fn symmetric_start_gives_half_everywhere() {
        // a = b: every urn starts at fraction 1/2, so p_j = 1/2 regardless
        // of alpha.
        for alpha in [0.0, 0.3, 0.5, 1.0] {
            let p = params(3, 1, 1, alpha);
            let state = UrnSystemState::initial(&p);
            for prob in reinforcement_probabilities(&state, &p) {
                assert_eq!(prob, 0.5);
            }
        }
    }

    #[test]
    fn equal_fractions_reduce_to_the_mean() {
        // When all urns agree, p_j = mean for every alpha.
        let p = params(4, 2, 3, 0.7);
        let state = UrnSystemState::from_parts(5, vec![4, 4, 4, 4], &p).unwrap();
        let expect = 4.0 / 10.0;
        for prob in reinforcement_probabilities(&state, &p) {
            assert!((prob - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn asymmetric_two_urn_example() {
        // N=2, alpha=1/2, fractions (2/3, 1/3): p = (7/12, 5/12).
        let p = params(2, 1, 1, 0.5);
        let state = UrnSystemState::from_parts(1, vec![2, 1], &p).unwrap();
        let probs = reinforcement_probabilities(&state, &p);
        assert!((probs[0] - 7.0 / 12.0).abs() < 1e-15);
        assert!((probs[1] - 5.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn step_rejects_inconsistent_state() {
        let p = params(2, 1, 1, 0.5);
        let mut rng = UrnRng::from_seed(1);
        // 5 red balls at t=1 is impossible when a=1
        let bad = UrnSystemState {
            t: 1,
            red: vec![5, 1],
        };
        assert!(matches!(
            step(&bad, &p, &mut rng),
            Err(crate::error::Error::InvariantViolation(_))
        ));
        assert!(UrnSystemState::from_parts(1, vec![5, 1], &p).is_err());
    }

    #[test]
    fn step_adds_exactly_one_ball_per_urn() {
        let p = params(3, 2, 1, 0.25);
        let mut rng = UrnRng::from_seed(42);
        let mut state = UrnSystemState::initial(&p);
        for t in 0..200 {
            let next = step(&state, &p, &mut rng).unwrap();
            assert_eq!(next.t(), t + 1);
            for j in 0..3 {
                let grew = next.red()[j] - state.red()[j];
                assert!(grew == 0 || grew == 1);
            }
            assert_eq!(next.total_balls(&p), p.m() + t + 1);
            state = next;
        }
        state.validate(&p).unwrap();
    }

    #[test]
    fn gaps_sum_to_zero() {
        let p = params(5, 1, 2, 0.6);
        let mut rng = UrnRng::from_seed(3);
        let mut state = UrnSystemState::initial(&p);
        for _ in 0..500 {
            state = step(&state, &p, &mut rng).unwrap();
        }
        let sum: f64 = state.gaps(&p).iter().sum();
        assert!(sum.abs() < 1e-12);
        let mean = state.mean_fraction(&p);
        let direct: f64 = state.fractions(&p).iter().sum::<f64>() / p.n() as f64;
        assert!((mean - direct).abs() < 1e-12);
    }

    #[test]
    fn conditional_law_matches_frequencies() {
        // Freeze one asymmetric state and repeatedly draw a single step from
        // it; per-urn success frequencies must match p_j within 4 binomial
        // standard errors.
        let p = params(2, 1, 1, 0.5);
        let state = UrnSystemState::from_parts(1, vec![2, 1], &p).unwrap();
        let probs = reinforcement_probabilities(&state, &p);
        let mut rng = UrnRng::from_seed(2024);
        let trials = 100_000;
        let mut hits = [0u64; 2];
        for _ in 0..trials {
            let next = step(&state, &p, &mut rng).unwrap();
            for j in 0..2 {
                if next.red()[j] > state.red()[j] {
                    hits[j] += 1;
                }
            }
        }
        for j in 0..2 {
            let freq = hits[j] as f64 / trials as f64;
            let se = (probs[j] * (1.0 - probs[j]) / trials as f64).sqrt();
            assert!(
                (freq - probs[j]).abs() < 4.0 * se,
                "urn {j}: freq {freq} vs p {}",
                probs[j]
            );
        }
    }

    #[test]
    fn alpha_zero_ignores_other_urns() {
        // Decoupled regime: urn 0's probability must not depend on urn 1's
        // composition.
        let p = params(2, 1, 1, 0.0);
        let s1 = UrnSystemState::from_parts(2, vec![2, 1], &p).unwrap();
        let s2 = UrnSystemState::from_parts(2, vec![2, 3], &p).unwrap();
        let p1 = reinforcement_probabilities(&s1, &p);
        let p2 = reinforcement_probabilities(&s2, &p);
        assert_eq!(p1[0], p2[0]);
    }
}
