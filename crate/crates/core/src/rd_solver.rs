//! Rate-distortion solver.
//!
//! At a fixed slope `λ ≤ 0` the Blahut–Arimoto sweep
//! `W(j|i) ∝ Q(j) e^{λρ_ij}`, `Q'(j) = Σ_i P_i W(j|i)` climbs
//! `Λ_{P,Q}(λ)` to `Γ(λ) = sup_Q Λ_{P,Q}(λ)`. The slope matching a target
//! distortion is found by an outer bracketed search on `λ`, using that
//! `D(λ) = Λ'_{P,Q_λ}(λ)` is nondecreasing.

use serde::Serialize;

use crate::criticality::{self, Verdict, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::lagrangian::{lambda_eval_unchecked, tilt_row};
use crate::model::{validate_pmf, DiscreteModel, Q_SUM_TOL};
use crate::numeric::{max_abs_diff, LN_2};

/// Q entries below this are set to zero after a solve.
pub const SUPPORT_CLAMP: f64 = 1e-12;
/// Default tolerance for [`verify_kkt`].
pub const KKT_TOL: f64 = 1e-8;
/// Two restarts disagreeing by more than this in sup-norm flag a
/// non-unique optimal reproduction distribution.
pub const RESTART_TOL: f64 = 1e-6;
const WARM_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct BaOptions {
    pub max_iters: usize,
    /// Stop when the sup-norm change of `Q` over one sweep is below this.
    pub tol: f64,
    /// Starting distribution; uniform when `None`.
    pub initial_q: Option<Vec<f64>>,
}

impl Default for BaOptions {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            tol: 1e-13,
            initial_q: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub ba: BaOptions,
    /// Tolerance on `|D(λ*) − D|`; `1e-9·D_max` when `None`.
    pub d_tol: Option<f64>,
    pub max_outer_iters: usize,
    /// Criticality threshold in bits.
    pub epsilon: f64,
    /// Re-run the fixed-slope iteration from a second start and compare.
    pub restart_check: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            ba: BaOptions::default(),
            d_tol: None,
            max_outer_iters: 200,
            epsilon: DEFAULT_EPSILON,
            restart_check: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeSolution {
    pub lambda: f64,
    pub q: Vec<f64>,
    /// `Γ(λ)` in nats.
    pub gamma: f64,
    /// `Λ'_{P,Q}(λ)`.
    pub d_of_lambda: f64,
    pub r_bits: f64,
    pub iterations: usize,
    pub converged: bool,
    /// False if `Λ_{P,Q_t}(λ)` ever decreased between sweeps.
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    pub cond_a_residual: f64,
    pub cond_b_residual: f64,
    /// `(j, value)` for every `j` with `Q_j = 0`.
    pub cond_c_values: Vec<(usize, f64)>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RdSolution {
    pub d: f64,
    pub r_bits: f64,
    pub lambda_star: f64,
    pub q_star: Vec<f64>,
    pub d_of_lambda: f64,
    pub f_bits: Vec<f64>,
    pub sigma2_bits2: f64,
    /// `max_i log₂ g_i − min_i log₂ g_i`.
    pub spread_bits: f64,
    pub kkt: KktReport,
    pub verdict: Verdict,
    pub epsilon: f64,
    /// A second start converged to a different `Q` (by more than 1e-6).
    pub dual_degenerate: bool,
}

fn ba_sweep(model: &DiscreteModel, q: &[f64], lambda: f64, next: &mut [f64]) -> f64 {
    next.iter_mut().for_each(|v| *v = 0.0);
    let mut value = 0.0;
    for (p, row) in model.pmf().iter().zip(model.rows()) {
        let t = tilt_row(row, q, lambda);
        value += p * t.log_g;
        for ((nj, &qj), &r) in next.iter_mut().zip(q).zip(row) {
            if qj > 0.0 {
                *nj += p * qj * (lambda * r - t.log_g).exp();
            }
        }
    }
    if lambda == 0.0 {
        value = 0.0;
    }
    value
}

fn clamp_support(q: &mut [f64]) {
    for v in q.iter_mut() {
        if *v < SUPPORT_CLAMP {
            *v = 0.0;
        }
    }
    let s: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= s);
}

/// Compute `Γ(λ)` and a maximizing `Q` by alternating maximization.
pub fn ba_fixed_slope(
    model: &DiscreteModel,
    lambda: f64,
    opts: &BaOptions,
) -> Result<SlopeSolution> {
    if lambda > 0.0 || lambda.is_nan() {
        return Err(Error::PositiveSlope(lambda));
    }
    let kr = model.repro_len();
    let mut q = match &opts.initial_q {
        Some(q0) => {
            validate_pmf(q0, kr, Q_SUM_TOL)?;
            if q0.iter().all(|&v| v <= 0.0) {
                return Err(Error::InvalidArgument("initial Q has empty support".into()));
            }
            q0.clone()
        }
        None => vec![1.0 / kr as f64; kr],
    };
    let mut next = vec![0.0; kr];
    let mut prev_value = f64::NEG_INFINITY;
    let mut monotone = true;
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < opts.max_iters {
        let value = ba_sweep(model, &q, lambda, &mut next);
        iterations += 1;
        if value < prev_value - 1e-12 * prev_value.abs().max(1e-300) {
            monotone = false;
        }
        prev_value = value;
        change = max_abs_diff(&q, &next);
        std::mem::swap(&mut q, &mut next);
        if change <= opts.tol {
            break;
        }
    }
    if change > opts.tol {
        return Err(Error::Convergence {
            what: "Blahut-Arimoto",
            iterations,
            residual: change,
        });
    }
    clamp_support(&mut q);
    let e = lambda_eval_unchecked(model, &q, lambda);
    let r_bits = ((lambda * e.first_deriv - e.value) / LN_2).max(0.0);
    Ok(SlopeSolution {
        lambda,
        q,
        gamma: e.value,
        d_of_lambda: e.first_deriv,
        r_bits,
        iterations,
        converged: true,
        monotone,
    })
}

/// Check the three optimality conditions for `(Q, λ)` at distortion `D`.
pub fn verify_kkt(model: &DiscreteModel, q: &[f64], lambda: f64, d: f64, tol: f64) -> KktReport {
    let kr = model.repro_len();
    let e = lambda_eval_unchecked(model, q, lambda);
    let mut marginal = vec![0.0; kr];
    let mut col_c = vec![0.0; kr];
    let mut b = Vec::with_capacity(model.source_len());
    for (p, row) in model.pmf().iter().zip(model.rows()) {
        let lg = tilt_row(row, q, lambda).log_g;
        b.push(p * (-lg).exp());
        for j in 0..kr {
            let ratio = (lambda * row[j] - lg).exp();
            col_c[j] += p * ratio;
            marginal[j] += p * q[j] * ratio;
        }
    }
    let cond_b = (0..kr)
        .filter(|&j| q[j] > 0.0)
        .map(|j| (marginal[j] - q[j]).abs())
        .fold(0.0, f64::max);
    let cond_c: Vec<(usize, f64)> = (0..kr)
        .filter(|&j| q[j] <= 0.0)
        .map(|j| (j, col_c[j]))
        .collect();
    let cond_a = (e.first_deriv - d).abs();
    let passed = cond_a <= tol && cond_b <= tol && cond_c.iter().all(|(_, v)| *v <= 1.0 + tol);
    KktReport {
        cond_a_residual: cond_a,
        cond_b_residual: cond_b,
        cond_c_values: cond_c,
        b,
        tol,
        passed,
    }
}

/// Pair `(λ*, Q*)` with `D(λ*) = D`, before the redundancy quantities are attached.
#[derive(Debug, Clone)]
struct Certificate {
    lambda: f64,
    q: Vec<f64>,
}

/// Warm start from `q`. Zeros are lifted to `WARM_FLOOR` because the
/// multiplicative update can never revive a letter that starts at zero.
fn warm(opts: &BaOptions, q: Option<&[f64]>) -> BaOptions {
    let lift = |q: &[f64]| {
        let mut v: Vec<f64> = q.iter().map(|&x| x.max(WARM_FLOOR)).collect();
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        v
    };
    BaOptions {
        initial_q: q.map(lift).or_else(|| opts.initial_q.clone()),
        ..opts.clone()
    }
}

fn find_certificate(
    model: &DiscreteModel,
    d: f64,
    opts: &SolveOptions,
    d_tol: f64,
) -> Result<Certificate> {
    // Lower end of the bracket: double from λ = −1 until D(λ) < D.
    let mut lo = -1.0;
    let mut sol_lo = ba_fixed_slope(model, lo, &opts.ba)?;
    let mut doublings = 0;
    while sol_lo.d_of_lambda >= d {
        if (sol_lo.d_of_lambda - d).abs() <= d_tol {
            return Ok(Certificate {
                lambda: lo,
                q: sol_lo.q,
            });
        }
        doublings += 1;
        if doublings > 80 {
            return Err(Error::NotBracketed {
                d,
                reason: format!("D({lo}) = {} is still >= D", sol_lo.d_of_lambda),
            });
        }
        lo *= 2.0;
        sol_lo = ba_fixed_slope(model, lo, &warm(&opts.ba, Some(&sol_lo.q)))?;
    }
    if (sol_lo.d_of_lambda - d).abs() <= d_tol {
        return Ok(Certificate {
            lambda: lo,
            q: sol_lo.q,
        });
    }
    // Upper end: D(0⁻) = D_max > D.
    let mut hi = 0.0_f64;
    let mut f_lo = sol_lo.d_of_lambda - d;
    let mut f_hi = opts_dmax(model) - d;
    let mut q_lo = sol_lo.q.clone();
    let mut q_hi: Option<Vec<f64>> = None;
    let mut side = 0i8;

    for _ in 0..opts.max_outer_iters {
        // Illinois false position, with a bisection step whenever the
        // interpolant lands too close to an end.
        let mut x = hi - f_hi * (hi - lo) / (f_hi - f_lo);
        let w = hi - lo;
        if !(x > lo + 1e-3 * w && x < hi - 1e-3 * w) {
            x = 0.5 * (lo + hi);
        }
        let start = q_hi.as_deref().unwrap_or(&q_lo);
        let sol = ba_fixed_slope(model, x, &warm(&opts.ba, Some(start)))?;
        let f = sol.d_of_lambda - d;
        if f.abs() <= d_tol {
            return Ok(Certificate {
                lambda: x,
                q: sol.q,
            });
        }
        if f < 0.0 {
            lo = x;
            f_lo = f;
            q_lo = sol.q;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            f_hi = f;
            q_hi = Some(sol.q);
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
        if hi - lo <= 4.0 * f64::EPSILON * lo.abs() {
            break;
        }
    }

    // D(λ) jumps across the collapsed bracket: R(D) has a linear piece and
    // every mixture of the two one-sided maximizers is optimal at λ = lo.
    // Pick the mixture whose Λ' hits D.
    let q_hi = q_hi.ok_or(Error::Convergence {
        what: "slope search",
        iterations: opts.max_outer_iters,
        residual: f_lo.abs(),
    })?;
    let lambda = lo;
    let q_a = ba_fixed_slope(model, lambda, &warm(&opts.ba, Some(&q_lo)))?.q;
    let q_b = ba_fixed_slope(model, lambda, &warm(&opts.ba, Some(&q_hi)))?.q;
    let mix = |t: f64| -> Vec<f64> {
        q_a.iter()
            .zip(&q_b)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect()
    };
    let dd = |t: f64| lambda_eval_unchecked(model, &mix(t), lambda).first_deriv - d;
    let (mut a, mut b) = (0.0, 1.0);
    let (fa, fb) = (dd(a), dd(b));
    if fa.signum() == fb.signum() {
        return Err(Error::Convergence {
            what: "slope search",
            iterations: opts.max_outer_iters,
            residual: fa.abs().min(fb.abs()),
        });
    }
    let increasing = fb > fa;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = dd(m);
        if fm.abs() <= d_tol {
            a = m;
            b = m;
            break;
        }
        if (fm < 0.0) == increasing {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(Certificate {
        lambda,
        q: mix(0.5 * (a + b)),
    })
}

fn opts_dmax(model: &DiscreteModel) -> f64 {
    model.d_max().value
}

/// Compute `R(D)`, `(λ*, Q*)`, the redundancy function, the minimal coding
/// variance and the optimality report for `0 < D < D_max`.
pub fn solve_at_distortion(
    model: &DiscreteModel,
    d: f64,
    opts: &SolveOptions,
) -> Result<RdSolution> {
    let d_max = model.d_max().value;
    if !(d > 0.0) {
        return Err(Error::Lossless(d));
    }
    if d >= d_max {
        return Err(Error::RateZero { d, d_max });
    }
    let d_tol = opts.d_tol.unwrap_or(1e-9 * d_max);
    let cert = find_certificate(model, d, opts, d_tol)?;
    let e = lambda_eval_unchecked(model, &cert.q, cert.lambda);
    let r_bits = (cert.lambda * d - e.value) / LN_2;
    let f_bits = criticality::f_values(model, &cert.q, cert.lambda, d, r_bits)?;
    let sigma2 = criticality::minimal_coding_variance(model, &f_bits);
    let spread = criticality::constancy_test(model, &cert.q, cert.lambda, opts.epsilon).spread_bits;
    let max_abs = f_bits.iter().map(|f| f.abs()).fold(0.0, f64::max);
    let verdict = Verdict::from_max_abs_f(max_abs, opts.epsilon);
    let kkt = verify_kkt(model, &cert.q, cert.lambda, d, KKT_TOL);

    let dual_degenerate = if opts.restart_check && model.repro_len() > 1 {
        let kr = model.repro_len();
        let total = (kr * (kr + 1) / 2) as f64;
        let ramp: Vec<f64> = (1..=kr).map(|j| j as f64 / total).collect();
        match ba_fixed_slope(model, cert.lambda, &warm(&opts.ba, Some(&ramp))) {
            Ok(alt) => max_abs_diff(&alt.q, &cert.q) > RESTART_TOL,
            Err(_) => true,
        }
    } else {
        false
    };

    Ok(RdSolution {
        d,
        r_bits,
        lambda_star: cert.lambda,
        q_star: cert.q,
        d_of_lambda: e.first_deriv,
        f_bits,
        sigma2_bits2: sigma2,
        spread_bits: spread,
        kkt,
        verdict,
        epsilon: opts.epsilon,
        dual_degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub d: f64,
    pub r_bits: f64,
    pub lambda_star: f64,
    pub sigma2: f64,
    pub verdict: Option<Verdict>,
    pub error: Option<String>,
}

/// `R(D)` over a grid of distortions, sorted by `D`. Failures are recorded
/// per row.
pub fn rd_curve(model: &DiscreteModel, d_grid: &[f64], opts: &SolveOptions) -> Vec<CurveRow> {
    let mut grid = d_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.into_iter()
        .map(|d| match solve_at_distortion(model, d, opts) {
            Ok(s) => CurveRow {
                d,
                r_bits: s.r_bits,
                lambda_star: s.lambda_star,
                sigma2: s.sigma2_bits2,
                verdict: Some(s.verdict),
                error: None,
            },
            Err(e) => CurveRow {
                d,
                r_bits: f64::NAN,
                lambda_star: f64::NAN,
                sigma2: f64::NAN,
                verdict: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeReport {
    pub d: f64,
    pub h: f64,
    pub lambda_star: f64,
    /// `ln 2 · (R(D+h) − R(D−h)) / 2h`.
    pub fd_slope: f64,
    pub rel_gap: f64,
}

/// Compare `λ*` with the central-difference slope of `R` scaled by `ln 2`.
pub fn slope_consistency(
    model: &DiscreteModel,
    d: f64,
    h: f64,
    opts: &SolveOptions,
) -> Result<SlopeReport> {
    let lambda_star = solve_at_distortion(model, d, opts)?.lambda_star;
    let up = solve_at_distortion(model, d + h, opts)?.r_bits;
    let down = solve_at_distortion(model, d - h, opts)?.r_bits;
    let fd = LN_2 * (up - down) / (2.0 * h);
    Ok(SlopeReport {
        d,
        h,
        lambda_star,
        fd_slope: fd,
        rel_gap: (lambda_star - fd).abs() / lambda_star.abs(),
    })
}
