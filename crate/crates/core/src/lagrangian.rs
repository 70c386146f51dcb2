//! The log-moment generating functional `Λ_{P,Q}(λ) = E_P[ln E_Q e^{λρ(X,Y)}]`,
//! its first two derivatives, its Fenchel–Legendre transform, and the
//! inversion `Λ'(λ) = D`.
//!
//! Every inner expectation is evaluated in the log domain with the row
//! maximum subtracted, so slopes as negative as `−10⁴·M` stay finite.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{validate_pmf, DiscreteModel, Q_SUM_TOL};
use crate::numeric::LOG2_E;

/// Bisection budget for [`solve_lambda_for_d`].
pub const MAX_SOLVE_ITERS: usize = 200;
/// Bracket doublings before giving up on finding `Λ'(λ_lo) < D`.
const MAX_BRACKET_DOUBLINGS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaEval {
    pub lambda: f64,
    /// `Λ(λ)` in nats.
    pub value: f64,
    /// `Λ'(λ)`, a distortion.
    pub first_deriv: f64,
    /// `Λ''(λ) ≥ 0`.
    pub second_deriv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LegendreEval {
    pub d: f64,
    pub lambda_star: f64,
    pub lambda_star_exists: bool,
    pub value_nats: f64,
    pub value_bits: f64,
}

/// Tilted statistics of one source row under `Q`:
/// `g = Σ_j Q_j e^{λρ_j}` (as `ln g`) and the mean and variance of `ρ`
/// under the tilted weights `Q_j e^{λρ_j} / g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowTilt {
    pub log_g: f64,
    pub mean: f64,
    pub var: f64,
}

/// Tilted statistics of a single row. `q` must have nonempty support.
pub fn tilt_row(row: &[f64], q: &[f64], lambda: f64) -> RowTilt {
    let m = row
        .iter()
        .zip(q)
        .filter(|(_, &qj)| qj > 0.0)
        .map(|(r, _)| lambda * r)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    let mut s1 = 0.0;
    for (&r, &qj) in row.iter().zip(q) {
        if qj > 0.0 {
            let w = qj * (lambda * r - m).exp();
            s += w;
            s1 += w * r;
        }
    }
    let mean = s1 / s;
    let mut s2 = 0.0;
    for (&r, &qj) in row.iter().zip(q) {
        if qj > 0.0 {
            let w = qj * (lambda * r - m).exp();
            s2 += w * (r - mean) * (r - mean);
        }
    }
    RowTilt {
        log_g: m + s.ln(),
        mean,
        var: s2 / s,
    }
}

/// `ln Σ_j Q_j e^{λρ_ij}` for every source letter `i`.
pub fn log_g(model: &DiscreteModel, q: &[f64], lambda: f64) -> Vec<f64> {
    model
        .rows()
        .map(|row| tilt_row(row, q, lambda).log_g)
        .collect()
}

fn check_q(model: &DiscreteModel, q: &[f64]) -> Result<()> {
    validate_pmf(q, model.repro_len(), Q_SUM_TOL)?;
    if q.iter().all(|&v| v <= 0.0) {
        return Err(Error::InvalidArgument("Q has empty support".into()));
    }
    Ok(())
}

/// Evaluate `Λ_{P,Q}` and its first two derivatives at `λ ≤ 0`.
pub fn lambda_eval(model: &DiscreteModel, q: &[f64], lambda: f64) -> Result<LambdaEval> {
    if lambda > 0.0 || lambda.is_nan() {
        return Err(Error::PositiveSlope(lambda));
    }
    check_q(model, q)?;
    Ok(lambda_eval_unchecked(model, q, lambda))
}

pub(crate) fn lambda_eval_unchecked(model: &DiscreteModel, q: &[f64], lambda: f64) -> LambdaEval {
    let mut value = 0.0;
    let mut first = 0.0;
    let mut second = 0.0;
    for (p, row) in model.pmf().iter().zip(model.rows()) {
        let t = tilt_row(row, q, lambda);
        value += p * t.log_g;
        first += p * t.mean;
        second += p * t.var;
    }
    if lambda == 0.0 {
        value = 0.0;
    }
    LambdaEval {
        lambda,
        value,
        first_deriv: first,
        second_deriv: second,
    }
}

/// Default stopping tolerance on `|Λ'(λ) − D|`.
pub fn default_tol(model: &DiscreteModel) -> f64 {
    1e-10 * model.d_max().value.max(1.0)
}

/// Find the unique `λ < 0` with `|Λ'_{P,Q}(λ) − D| ≤ tol`.
///
/// `D` must lie strictly inside `(D_min^{P,Q}, D_max^{P,Q})`. The bracket
/// `[λ_lo, 0]` starts at `λ_lo = −1` and doubles until `Λ'(λ_lo) < D`; the
/// root is then polished by Newton steps that fall back to bisection
/// whenever they leave the bracket.
pub fn solve_lambda_for_d(model: &DiscreteModel, q: &[f64], d: f64, tol: f64) -> Result<f64> {
    check_q(model, q)?;
    let lo_d = model.d_min_q(q)?;
    let hi_d = model.d_max_q(q)?;
    if !(d > lo_d && d < hi_d) {
        return Err(Error::OutOfRange {
            d,
            lo: lo_d,
            hi: hi_d,
        });
    }
    let resid = |l: f64| {
        let e = lambda_eval_unchecked(model, q, l);
        (e.first_deriv - d, e.second_deriv)
    };

    let mut lo = -1.0;
    let mut f_lo = resid(lo).0;
    let mut doublings = 0;
    while f_lo >= 0.0 {
        if f_lo.abs() <= tol {
            return Ok(lo);
        }
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS {
            return Err(Error::NotBracketed {
                d,
                reason: format!("Lambda'({lo}) = {} is still >= D", f_lo + d),
            });
        }
        lo *= 2.0;
        f_lo = resid(lo).0;
    }
    if f_lo.abs() <= tol {
        return Ok(lo);
    }
    let mut hi = 0.0_f64;

    let mut x = 0.5 * (lo + hi);
    let mut best = (f64::INFINITY, x);
    for _ in 0..MAX_SOLVE_ITERS {
        let (f, fp) = resid(x);
        if f.abs() < best.0 {
            best = (f.abs(), x);
        }
        if f.abs() <= tol {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = if fp > 0.0 { x - f / fp } else { f64::NAN };
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
            break;
        }
    }
    Err(Error::Convergence {
        what: "slope bisection",
        iterations: MAX_SOLVE_ITERS,
        residual: best.0,
    })
}

/// Fenchel–Legendre transform `Λ*_{P,Q}(D) = sup_{λ≤0} [λD − Λ_{P,Q}(λ)]`.
///
/// For `D ≥ D_max^{P,Q}` the supremum sits at `λ = 0` and is zero. For
/// `D ≤ D_min^{P,Q}` the value is reported as `+∞`.
pub fn legendre(model: &DiscreteModel, q: &[f64], d: f64) -> Result<LegendreEval> {
    if !(d >= 0.0) {
        return Err(Error::InvalidArgument(format!("distortion {d} < 0")));
    }
    check_q(model, q)?;
    let lo_d = model.d_min_q(q)?;
    let hi_d = model.d_max_q(q)?;
    if d >= hi_d {
        return Ok(LegendreEval {
            d,
            lambda_star: 0.0,
            lambda_star_exists: false,
            value_nats: 0.0,
            value_bits: 0.0,
        });
    }
    if d <= lo_d {
        return Ok(LegendreEval {
            d,
            lambda_star: f64::NEG_INFINITY,
            lambda_star_exists: false,
            value_nats: f64::INFINITY,
            value_bits: f64::INFINITY,
        });
    }
    let lambda = solve_lambda_for_d(model, q, d, default_tol(model))?;
    let e = lambda_eval_unchecked(model, q, lambda);
    let value = (lambda * d - e.value).max(0.0);
    Ok(LegendreEval {
        d,
        lambda_star: lambda,
        lambda_star_exists: true,
        value_nats: value,
        value_bits: value * LOG2_E,
    })
}
