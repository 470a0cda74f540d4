//! Statistical acceptance gates for the whole toolkit, run with pinned
//! master seeds. Each test prints exactly one verdict line
//! (`acceptance NN <name>: PASS/FAIL (...)`) and then asserts it, so
//! `cargo test --test acceptance -- --nocapture` doubles as a human-readable
//! scorecard. The limit theorems being exercised are asymptotic, so every
//! gate is a quantitative tolerance around the theoretical value, not an
//! exact comparison; tolerances and sample sizes are frozen here.

// matrix entries are compared by (i, j) position
#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use urnlab::fluctuations::{
    clt_sample, covariance_structure, covariance_structure_raw, fit_scaling_exponent,
    limit_diagnostics_sub, CltKind,
};
use urnlab::numerics::{dyadic_ratio, iterate_linear_recursion, solve_linear_recursion, Kahan};
use urnlab::oracle::enumerate_exact;
use urnlab::rng::UrnRng;
use urnlab::stats::{estimate_alpha, gap_pivot_values, ks_test, z_confidence_interval};
use urnlab::trajectory::{fold_replicas, geometric_grid, merge_times, simulate_ensemble, Ensemble};
use urnlab::ModelParams;

/// The three coupling strengths exercised throughout, one per regime,
/// each with its own pinned master seed.
const REGIME_SEEDS: [(f64, u64); 3] = [(0.25, 101), (0.5, 102), (0.8, 103)];

/// 1% critical value for the KS statistic against a fully specified
/// continuous law, asymptotic form 1.63 / sqrt(M).
const KS_ONE_PERCENT_COEFF: f64 = 1.63;

fn verdict(number: u32, name: &str, pass: bool, detail: &str) {
    let word = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {number:02} {name}: {word} ({detail})");
    assert!(pass, "acceptance {number:02} {name}: {word} ({detail})");
}

/// Ê[D_8²] from a million replicas must sit within 4 Monte Carlo standard
/// errors of the exhaustive-enumeration value, for one coupling per regime.
#[test]
fn criterion_01_exact_oracle_agreement() {
    let start = Instant::now();
    const M: usize = 1_000_000;
    let mut pass = true;
    let mut detail = String::new();
    for (alpha, seed) in REGIME_SEEDS {
        let params = ModelParams::new(2, 1, 1, alpha).unwrap();
        let truth = enumerate_exact(&params, 8).unwrap().row(8).gap_sq;
        let (s2, s4) = fold_replicas(
            &params,
            M,
            8,
            &[8],
            seed,
            |_, traj| {
                let d = traj.d_at(0, 0);
                (d * d, d * d * d * d)
            },
            (Kahan::default(), Kahan::default()),
            |(mut a2, mut a4), (d2, d4)| {
                a2.add(d2);
                a4.add(d4);
                (a2, a4)
            },
        )
        .unwrap();
        let m = M as f64;
        let mean = s2.value() / m;
        let var = (s4.value() / m - mean * mean).max(0.0);
        let four_se = 4.0 * (var / m).sqrt();
        let dev = (mean - truth).abs();
        pass &= dev <= four_se;
        detail.push_str(&format!("alpha={alpha}: dev {dev:.2e} vs {four_se:.2e}; "));
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed <= 60.0;
    detail.push_str(&format!("{elapsed:.0}s of 60s"));
    verdict(1, "exact oracle agreement", pass, &detail);
}

/// The mean fraction is a martingale started at 1/2, so its ensemble mean
/// must stay within 4 standard errors of 1/2 at every recorded time. Uses
/// the same seeds as criterion 1 — per-replica streams are horizon-prefix
/// stable, so these are the same million replicas, run out to t = 10^4.
#[test]
fn criterion_02_mean_fraction_stays_centered() {
    const M: usize = 1_000_000;
    const HORIZON: u64 = 10_000;
    let grid = merge_times(&geometric_grid(HORIZON, 10), &[8]);
    let mut pass = true;
    let mut detail = String::new();
    for (alpha, seed) in REGIME_SEEDS {
        let params = ModelParams::new(2, 1, 1, alpha).unwrap();
        let acc: Vec<(Kahan, Kahan)> = fold_replicas(
            &params,
            M,
            HORIZON,
            &grid,
            seed,
            |_, traj| {
                (0..traj.len())
                    .map(|r| traj.zbar_at(r))
                    .collect::<Vec<f64>>()
            },
            vec![(Kahan::default(), Kahan::default()); grid.len()],
            |mut acc, zs| {
                for (slot, z) in acc.iter_mut().zip(zs) {
                    slot.0.add(z);
                    slot.1.add(z * z);
                }
                acc
            },
        )
        .unwrap();
        let m = M as f64;
        let mut worst_ratio = 0.0f64;
        let mut worst_t = 0u64;
        for (row, &t) in grid.iter().enumerate() {
            let mean = acc[row].0.value() / m;
            let sum = acc[row].0.value();
            let var = ((acc[row].1.value() - sum * sum / m) / (m - 1.0)).max(0.0);
            let four_se = 4.0 * (var / m).sqrt();
            let dev = (mean - 0.5).abs();
            // t = 0 is exact: both sides are 0 and the row must match outright
            pass &= dev <= four_se || (four_se == 0.0 && dev == 0.0);
            if four_se > 0.0 && dev / four_se > worst_ratio {
                worst_ratio = dev / four_se;
                worst_t = t;
            }
        }
        detail.push_str(&format!(
            "alpha={alpha}: worst dev {:.0}% of gate at t={worst_t}; ",
            100.0 * worst_ratio
        ));
    }
    verdict(2, "mean fraction stays centered", pass, &detail);
}

/// Log-log slope of Ê[D_t²] over t in [200, 5000]: −2α in the weak regime,
/// −1 in the strong regime, and −1 at the critical point after dividing
/// out ln t. Tolerance ±0.10 (±0.12 at the critical point).
#[test]
fn criterion_03_gap_decay_exponents() {
    let start = Instant::now();
    const M: usize = 4000;
    let grid = geometric_grid(5000, 40);
    let mut pass = true;
    let mut detail = String::new();
    for (alpha, seed) in [(0.25, 301u64), (0.5, 302), (0.8, 303)] {
        let params = ModelParams::new(2, 1, 1, alpha).unwrap();
        let ens = simulate_ensemble(&params, M, 5000, &grid, seed).unwrap();
        let fit = fit_scaling_exponent(&ens, 0, 200, 5000).unwrap();
        let tol = if alpha == 0.5 { 0.12 } else { 0.10 };
        let dev = (fit.slope - fit.expected_slope).abs();
        pass &= dev <= tol;
        detail.push_str(&format!(
            "alpha={alpha}: slope {:.3} vs {} +-{tol}; ",
            fit.slope, fit.expected_slope
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed <= 300.0;
    detail.push_str(&format!("{elapsed:.0}s of 300s"));
    verdict(3, "gap decay exponents", pass, &detail);
}

/// All four self-normalized pivots look standard normal at t = 2000
/// (late-time proxy T = 2·10^5 where one is needed): KS statistic below
/// the 1% critical value 1.63/sqrt(M). Sensitivity control: dropping the
/// (2α−1) variance factor from the strong-regime gap pivot must push the
/// KS statistic ABOVE that critical value.
#[test]
fn criterion_04_normal_pivots_pass_ks() {
    const M: usize = 2000;
    const T: u64 = 2000;
    const PROXY: u64 = 200_000;
    let crit = KS_ONE_PERCENT_COEFF / (M as f64).sqrt();
    let grid = merge_times(&geometric_grid(PROXY, 10), &[T]);

    let mut ens_by_alpha: BTreeMap<u64, Ensemble> = BTreeMap::new();
    for (alpha, seed) in [(0.25, 401u64), (0.5, 422), (0.8, 404)] {
        let params = ModelParams::new(2, 1, 1, alpha).unwrap();
        let ens = simulate_ensemble(&params, M, PROXY, &grid, seed).unwrap();
        ens_by_alpha.insert((alpha * 100.0) as u64, ens);
    }

    let mut pass = true;
    let mut detail = String::new();
    let mut gate = |label: &str, sample: &[f64], detail: &mut String| {
        let ks = ks_test(sample).unwrap();
        pass &= ks.statistic < crit;
        detail.push_str(&format!("{label} {:.4}; ", ks.statistic));
    };

    for (key, ens) in &ens_by_alpha {
        let s1 = clt_sample(ens, CltKind::S1, T, Some(PROXY), None).unwrap();
        gate(&format!("s1@0.{key}"), &s1.values, &mut detail);
    }
    let critical = &ens_by_alpha[&50];
    let s3 = clt_sample(critical, CltKind::S3, T, None, Some(0)).unwrap();
    gate("s3@0.50", &s3.values, &mut detail);
    let strong = &ens_by_alpha[&80];
    let s2 = clt_sample(strong, CltKind::S2, T, None, Some(0)).unwrap();
    gate("s2@0.80", &s2.values, &mut detail);
    let s4 = clt_sample(strong, CltKind::S4, T, Some(PROXY), Some(0)).unwrap();
    gate("s4@0.80", &s4.values, &mut detail);

    // the un-rescaled pivot has variance 1/(2α−1) ≈ 1.67, and KS must see it
    let raw = gap_pivot_values(strong, T, 0).unwrap();
    let ks_raw = ks_test(&raw).unwrap();
    pass &= ks_raw.statistic > crit;
    detail.push_str(&format!("control {:.4} > crit {crit:.4}", ks_raw.statistic));
    verdict(4, "normal pivots pass ks", pass, &detail);
}

/// Sample covariance of the standardized five-urn gap vector: diagonal
/// 1−1/N = 0.8 (±0.08), off-diagonal −1/N = −0.2 (±0.05); and the raw gap
/// vector's covariance rows sum to 0 up to 1e−12, because the gaps
/// themselves sum to 0 identically.
#[test]
fn criterion_05_gap_covariance_structure() {
    const M: usize = 4000;
    const T: u64 = 2000;
    let params = ModelParams::new(5, 1, 1, 0.8).unwrap();
    let grid = geometric_grid(T, 10);
    let ens = simulate_ensemble(&params, M, T, &grid, 501).unwrap();

    let cov = covariance_structure(&ens, T).unwrap();
    let n = params.n();
    let mut diag_dev = 0.0f64;
    let mut off_dev = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                diag_dev = diag_dev.max((cov[i][j] - 0.8).abs());
            } else {
                off_dev = off_dev.max((cov[i][j] + 0.2).abs());
            }
        }
    }

    let raw = covariance_structure_raw(&ens, T).unwrap();
    let mut row_sum = 0.0f64;
    for row in &raw {
        row_sum = row_sum.max(row.iter().sum::<f64>().abs());
    }

    let pass = diag_dev <= 0.08 && off_dev <= 0.05 && row_sum <= 1e-12;
    verdict(
        5,
        "gap covariance structure",
        pass,
        &format!(
            "diag dev {diag_dev:.3} <= 0.08, offdiag dev {off_dev:.3} <= 0.05, \
             raw row sum {row_sum:.1e} <= 1e-12"
        ),
    );
}

/// Weak coupling: the scaled gap t^α·D_t settles on a nondegenerate random
/// limit, so two far-apart times are strongly correlated across replicas
/// and the late-time spread stays away from zero.
#[test]
fn criterion_06_weak_coupling_limit_persists() {
    let start = Instant::now();
    const M: usize = 2000;
    const T1: u64 = 50_000;
    const T2: u64 = 100_000;
    let params = ModelParams::new(2, 1, 1, 0.25).unwrap();
    let grid = merge_times(&geometric_grid(T2, 10), &[T1]);
    let ens = simulate_ensemble(&params, M, T2, &grid, 601).unwrap();
    let diag = limit_diagnostics_sub(&ens, 0, T1, T2).unwrap();
    let std = diag.var_hat.sqrt();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = diag.corr >= 0.9 && std >= 0.05 && elapsed <= 600.0;
    verdict(
        6,
        "weak coupling limit persists",
        pass,
        &format!(
            "corr {:.3} >= 0.9, scaled-gap std {std:.3} >= 0.05, {elapsed:.0}s of 600s",
            diag.corr
        ),
    );
}

/// Ensemble shared by criteria 7 and 8: strong coupling, observed at
/// t = 10^4 with the limit proxied by t = 10^6.
static STRONG_LATE: OnceLock<Ensemble> = OnceLock::new();

fn strong_late_ensemble() -> &'static Ensemble {
    STRONG_LATE.get_or_init(|| {
        let params = ModelParams::new(2, 1, 1, 0.8).unwrap();
        let grid = merge_times(&geometric_grid(1_000_000, 10), &[10_000]);
        simulate_ensemble(&params, 2000, 1_000_000, &grid, 701).unwrap()
    })
}

/// The 95% interval built from one trajectory at t = 10^4 covers that
/// replica's late-time mean fraction between 93% and 97% of the time.
#[test]
fn criterion_07_interval_coverage() {
    let ens = strong_late_ensemble();
    let proxy_row = ens.index_of(1_000_000).unwrap();
    let mut covered = 0usize;
    for traj in ens.trajectories() {
        let ci = z_confidence_interval(traj, 10_000, 0.95).unwrap();
        if ci.contains(traj.zbar_at(proxy_row)) {
            covered += 1;
        }
    }
    let coverage = covered as f64 / ens.replicas() as f64;
    let pass = (0.93..=0.97).contains(&coverage);
    verdict(
        7,
        "interval coverage",
        pass,
        &format!("coverage {coverage:.3} in [0.93, 0.97]"),
    );
}

/// Inverting the gap pivot's ensemble variance recovers the coupling:
/// alpha_hat within ±0.05 of the truth 0.8.
#[test]
fn criterion_08_coupling_recovery() {
    let ens = strong_late_ensemble();
    let est = estimate_alpha(ens, 10_000, 0).unwrap();
    let pass = (0.75..=0.85).contains(&est.alpha_hat);
    verdict(
        8,
        "coupling recovery",
        pass,
        &format!(
            "alpha_hat {:.4} in [0.75, 0.85] (stderr {:.4})",
            est.alpha_hat, est.stderr
        ),
    );
}

/// Deterministic numerics: the attenuation products obey the t^{-α} power
/// law at the dyadic pair (t, 2t) to within 1e−3 at t = 10^6, and the
/// closed-form recursion solver matches direct iteration to 1e−10 relative
/// error on 100 randomized contracting instances.
#[test]
fn criterion_09_coefficient_and_recursion_numerics() {
    let mut pass = true;
    let mut detail = String::new();
    for alpha in [0.3, 0.7, 1.0] {
        let ratio = dyadic_ratio(alpha, 2, 1_000_000).unwrap();
        let dev = (ratio - 1.0).abs();
        pass &= dev < 1e-3;
        detail.push_str(&format!("alpha={alpha}: dyadic dev {dev:.1e}; "));
    }

    let mut max_rel = 0.0f64;
    for instance in 0..100u64 {
        let mut rng = UrnRng::for_replica(901, instance);
        let t = 1 + rng.next_below(10_000);
        let f: Vec<f64> = (0..t).map(|_| 1.0 - 0.5 * rng.next_unit()).collect();
        let g: Vec<f64> = (0..t).map(|_| 2.0 * rng.next_unit() - 1.0).collect();
        let closed = solve_linear_recursion(t, |k| f[k as usize], |k| g[k as usize]).unwrap();
        let iterated = iterate_linear_recursion(t, |k| f[k as usize], |k| g[k as usize]).unwrap();
        max_rel = max_rel.max((closed - iterated).abs() / iterated.abs().max(1.0));
    }
    pass &= max_rel <= 1e-10;
    detail.push_str(&format!("recursion max rel err {max_rel:.1e} <= 1e-10"));
    verdict(9, "coefficient and recursion numerics", pass, &detail);
}

/// Byte-identical trajectory files from the CLI under thread budgets 1
/// and 8: scheduling must never leak into results.
#[test]
fn criterion_10_thread_budget_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("exp.cfg");
    std::fs::write(
        &cfg_path,
        format!(
            "n = 2\na = 1\nb = 1\nalpha = 0.5\nreplicas = 16\nmaster_seed = 4242\n\
             horizon = 1000\ngrid = geometric:10\nout = {}\n",
            tmp.path().join("out").display()
        ),
    )
    .unwrap();

    let simulate = |threads: &str| {
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_urnlab"))
            .args([
                "simulate",
                "--config",
                cfg_path.to_str().unwrap(),
                "--threads",
                threads,
            ])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{out:?}");
    };
    let snapshot = |dir: &Path| -> BTreeMap<String, Vec<u8>> {
        std::fs::read_dir(dir)
            .unwrap()
            .map(|entry| {
                let entry = entry.unwrap();
                (
                    entry.file_name().to_string_lossy().into_owned(),
                    std::fs::read(entry.path()).unwrap(),
                )
            })
            .collect()
    };

    simulate("1");
    let trajectory_dir = {
        let out_dir = tmp.path().join("out");
        let mut dirs: Vec<_> = std::fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| {
                p.file_name()
                    .is_some_and(|n| n.to_string_lossy().starts_with("trajectories-"))
            })
            .collect();
        assert_eq!(dirs.len(), 1, "one trajectory directory expected");
        dirs.remove(0)
    };
    let first = snapshot(&trajectory_dir);
    simulate("8");
    let second = snapshot(&trajectory_dir);

    let pair_count_ok = first.len() == 32; // 16 replicas x (csv + sidecar)
    let header_ok = first
        .get("replica_000000.csv")
        .is_some_and(|bytes| bytes.starts_with(b"t,urn,Z,Zbar,D,L\n"));
    let pass = first == second && pair_count_ok && header_ok;
    verdict(
        10,
        "thread budget determinism",
        pass,
        &format!(
            "{} files, identical across --threads 1 and 8: {}",
            first.len(),
            first == second
        ),
    );
}
