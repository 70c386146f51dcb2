//! Monte Carlo of the redundancy process `S_n = Σ_{i≤n} f(X_i)`.
//!
//! Any code's length at distortion `D` satisfies, eventually and with
//! probability one, `ℓ_n ≥ nR(D) + S_n − 2 log₂ n`, and the best codes
//! achieve `ℓ_n ≤ nR(D) + S_n + 5 log₂ n`. No code is simulated here: the
//! two envelopes are reported as analytic references next to the sampled
//! `S_n`.
//!
//! Each trial draws from its own ChaCha8 stream keyed by `(seed, trial)`,
//! so results do not depend on scheduling.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::criticality::Verdict;
use crate::error::{Error, Result};
use crate::model::DiscreteModel;
use crate::numeric::CompensatedSum;
use crate::rd_solver::{solve_at_distortion, SolveOptions};

/// Envelope constants (in units of `log₂ n`).
pub const LOWER_LOG_COEFF: f64 = 2.0;
pub const UPPER_LOG_COEFF: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledStats {
    pub n: u64,
    pub mean: f64,
    /// Sample variance of `S_n/√n`; absent with a single trial.
    pub var: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResult {
    pub d: f64,
    pub r_bits: f64,
    pub sigma2_bits2: f64,
    pub verdict: Verdict,
    pub f_bits: Vec<f64>,
    pub n_grid: Vec<u64>,
    pub trials: usize,
    pub seed: u64,
    /// `s_paths[trial][g]` is `S_n` at `n = n_grid[g]`.
    pub s_paths: Vec<Vec<f64>>,
    pub lower_envelope: Vec<Vec<f64>>,
    pub upper_envelope: Vec<Vec<f64>>,
    pub scaled_stats: ScaledStats,
}

fn validate_grid(n_grid: &[u64], trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if n_grid.is_empty() {
        return Err(Error::InvalidArgument("empty n grid".into()));
    }
    if n_grid[0] < 2 {
        return Err(Error::InvalidArgument(
            "sample sizes must be >= 2 (envelopes coincide at n = 1)".into(),
        ));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "n grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn trial_path(cdf: &[f64], f: &[f64], n_grid: &[u64], seed: u64, trial: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let mut acc = CompensatedSum::new();
    let mut out = Vec::with_capacity(n_grid.len());
    let mut n = 0u64;
    for &target in n_grid {
        while n < target {
            let u: f64 = rng.random();
            let i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            acc.add(f[i]);
            n += 1;
        }
        out.push(acc.value());
    }
    out
}

/// Sample `S_n` paths for a given per-letter table `f`.
pub fn simulate_with_f(
    pmf: &[f64],
    f_bits: &[f64],
    n_grid: &[u64],
    trials: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    validate_grid(n_grid, trials)?;
    if pmf.len() != f_bits.len() || pmf.is_empty() {
        return Err(Error::InvalidArgument(
            "pmf and f table lengths differ".into(),
        ));
    }
    let mut cdf = Vec::with_capacity(pmf.len());
    let mut c = 0.0;
    for p in pmf {
        c += p;
        cdf.push(c);
    }
    Ok((0..trials as u64)
        .into_par_iter()
        .map(|t| trial_path(&cdf, f_bits, n_grid, seed, t))
        .collect())
}

fn scaled(paths: &[Vec<f64>], n_grid: &[u64]) -> ScaledStats {
    let g = n_grid.len() - 1;
    let n = n_grid[g];
    let root = (n as f64).sqrt();
    let xs: Vec<f64> = paths.iter().map(|p| p[g] / root).collect();
    let t = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / t;
    let var =
        (xs.len() > 1).then(|| xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (t - 1.0));
    ScaledStats { n, mean, var }
}

/// Solve once at `D`, then sample `trials` independent redundancy paths.
///
/// For a critical source the table `f` is exactly zero, so every `S_n` is 0.
pub fn sample_redundancy_paths(
    model: &DiscreteModel,
    d: f64,
    n_grid: &[u64],
    trials: usize,
    seed: u64,
) -> Result<SimulationResult> {
    validate_grid(n_grid, trials)?;
    let sol = solve_at_distortion(model, d, &SolveOptions::default())?;
    let f_bits = match sol.verdict {
        Verdict::Critical => vec![0.0; model.source_len()],
        Verdict::Generic => sol.f_bits.clone(),
    };
    let sigma2 = match sol.verdict {
        Verdict::Critical => 0.0,
        Verdict::Generic => sol.sigma2_bits2,
    };
    let s_paths = simulate_with_f(model.pmf(), &f_bits, n_grid, trials, seed)?;
    let envelope = |coeff: f64| -> Vec<Vec<f64>> {
        s_paths
            .iter()
            .map(|path| {
                path.iter()
                    .zip(n_grid)
                    .map(|(s, &n)| n as f64 * sol.r_bits + s + coeff * (n as f64).log2())
                    .collect()
            })
            .collect()
    };
    let lower = envelope(-LOWER_LOG_COEFF);
    let upper = envelope(UPPER_LOG_COEFF);
    let scaled_stats = scaled(&s_paths, n_grid);
    Ok(SimulationResult {
        d,
        r_bits: sol.r_bits,
        sigma2_bits2: sigma2,
        verdict: sol.verdict,
        f_bits,
        n_grid: n_grid.to_vec(),
        trials,
        seed,
        s_paths,
        lower_envelope: lower,
        upper_envelope: upper,
        scaled_stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltSummary {
    pub n: u64,
    pub trials: usize,
    pub mean_scaled: f64,
    pub var_scaled: Option<f64>,
    pub sigma2: f64,
    /// `|var_scaled − σ²| / σ²`; absent when σ² = 0 or the variance is.
    pub rel_gap: Option<f64>,
    /// At least 30 trials went into the variance.
    pub reliable: bool,
}

/// Compare the spread of `S_n/√n` at the largest `n` with `σ²`.
pub fn clt_summary(result: &SimulationResult, sigma2: f64) -> CltSummary {
    let s = &result.scaled_stats;
    CltSummary {
        n: s.n,
        trials: result.trials,
        mean_scaled: s.mean,
        var_scaled: s.var,
        sigma2,
        rel_gap: s
            .var
            .filter(|_| sigma2 > 0.0)
            .map(|v| (v - sigma2).abs() / sigma2),
        reliable: result.trials >= 30,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeTrend {
    /// `(D, λ*)` in the order given.
    pub points: Vec<(f64, f64)>,
    /// Indices `k` where `λ*(D_k) ≥ λ*(D_{k−1})` although `D_k < D_{k−1}`.
    pub violations: Vec<usize>,
}

/// `λ*` along a sequence of distortions decreasing toward 0.
pub fn slope_trend(model: &DiscreteModel, ds: &[f64]) -> Result<SlopeTrend> {
    let opts = SolveOptions {
        restart_check: false,
        ..SolveOptions::default()
    };
    let points = ds
        .iter()
        .map(|&d| solve_at_distortion(model, d, &opts).map(|s| (d, s.lambda_star)))
        .collect::<Result<Vec<_>>>()?;
    let violations = (1..points.len())
        .filter(|&k| points[k].0 < points[k - 1].0 && points[k].1 >= points[k - 1].1)
        .collect();
    Ok(SlopeTrend { points, violations })
}

/// Per-trial CSV: `trial,n,S_n,lower,upper`.
pub fn write_paths_csv<W: Write>(result: &SimulationResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "n", "S_n", "lower", "upper"])?;
    for t in 0..result.trials {
        for (g, n) in result.n_grid.iter().enumerate() {
            w.write_record([
                t.to_string(),
                n.to_string(),
                result.s_paths[t][g].to_string(),
                result.lower_envelope[t][g].to_string(),
                result.upper_envelope[t][g].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    #[test]
    fn critical_paths_are_zero() {
        let m = builtin::binary(0.5).unwrap();
        let r = sample_redundancy_paths(&m, 0.25, &[10, 100, 1000], 8, 7).unwrap();
        assert_eq!(r.verdict, Verdict::Critical);
        assert!(r.s_paths.iter().flatten().all(|s| *s == 0.0));
        for t in 0..r.trials {
            for (g, &n) in r.n_grid.iter().enumerate() {
                let gap = r.upper_envelope[t][g] - r.lower_envelope[t][g];
                let want = 7.0 * (n as f64).log2();
                assert!((gap - want).abs() <= 1e-12 * (n as f64), "{gap} vs {want}");
            }
        }
        let c = clt_summary(&r, 0.0);
        assert_eq!(c.mean_scaled, 0.0);
        assert_eq!(c.var_scaled, Some(0.0));
        assert_eq!(c.rel_gap, None);
        assert!(!c.reliable);
    }

    #[test]
    fn deterministic_and_trial_independent() {
        let m = builtin::binary(0.3).unwrap();
        let a = sample_redundancy_paths(&m, 0.1, &[10, 50], 5, 42).unwrap();
        let b = sample_redundancy_paths(&m, 0.1, &[10, 50], 5, 42).unwrap();
        assert_eq!(a, b);
        // trial 3 does not depend on how many trials run
        let c = sample_redundancy_paths(&m, 0.1, &[10, 50], 4, 42).unwrap();
        assert_eq!(a.s_paths[3], c.s_paths[3]);
        let d = sample_redundancy_paths(&m, 0.1, &[10, 50], 5, 43).unwrap();
        assert_ne!(a.s_paths, d.s_paths);
        assert!(a
            .lower_envelope
            .iter()
            .flatten()
            .zip(a.upper_envelope.iter().flatten())
            .all(|(l, u)| l < u));
    }

    #[test]
    fn single_trial_has_no_variance() {
        let m = builtin::binary(0.3).unwrap();
        let r = sample_redundancy_paths(&m, 0.1, &[100], 1, 1).unwrap();
        let c = clt_summary(&r, r.sigma2_bits2);
        assert_eq!(c.var_scaled, None);
        assert_eq!(c.rel_gap, None);
    }

    #[test]
    fn rejects_bad_grids() {
        let m = builtin::binary(0.3).unwrap();
        assert!(sample_redundancy_paths(&m, 0.1, &[1, 10], 2, 0).is_err());
        assert!(sample_redundancy_paths(&m, 0.1, &[10, 10], 2, 0).is_err());
        assert!(sample_redundancy_paths(&m, 0.1, &[10], 0, 0).is_err());
        assert!(sample_redundancy_paths(&m, 0.1, &[], 2, 0).is_err());
        assert!(sample_redundancy_paths(&m, 0.6, &[10], 2, 0).is_err());
    }

    #[test]
    fn binary_slope_trend() {
        let m = builtin::binary(0.3).unwrap();
        let ds = [0.2, 0.1, 0.05, 0.01, 0.001];
        let t = slope_trend(&m, &ds).unwrap();
        assert!(t.violations.is_empty());
        for &(d, l) in &t.points {
            assert!((l - (d / (1.0 - d)).ln()).abs() < 1e-6, "{d}: {l}");
        }
        assert!((t.points[4].1 + 6.906_754_778_648_554).abs() < 1e-6);
    }

    #[test]
    fn csv_layout() {
        let m = builtin::binary(0.3).unwrap();
        let r = sample_redundancy_paths(&m, 0.1, &[10, 20], 2, 9).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "trial,n,S_n,lower,upper");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("1,20,"));
    }
}
