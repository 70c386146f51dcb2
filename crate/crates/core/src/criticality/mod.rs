//! The pointwise redundancy function `f`, minimal coding variance, and the
//! critical/generic classification.
//!
//! A source is *critical* at distortion `D` when `f(X) = 0` almost surely,
//! equivalently when `Σ_j Q*_j e^{λ*ρ(x, a_j)}` does not depend on `x`. Then
//! the best achievable pointwise redundancy is `O(log n)`; otherwise it is of
//! order `√n` and the fluctuation has variance `n·σ²`.
//!
//! In the discrete pipeline "almost all x" means every source letter (all
//! letters carry positive probability). For a discretized continuous model it
//! means every grid cell.

mod continuous;
mod determinant;

pub use continuous::{
    check_thm2_independence, discretize, independence_for_points, IndependenceReport,
};
pub use determinant::{
    certificate_det, check_thm3a, check_thm3b, det_t, s_pi_check, DetDiagnostic, SPiMode,
    Thm3bReport, S_PI_EXHAUSTIVE_MAX,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lagrangian::log_g;
use crate::model::{is_uniform, DiscreteModel, SymmetryCheck, STRUCT_TOL};
use crate::numeric::LOG2_E;
use crate::rd_solver::{solve_at_distortion, KktReport, SolveOptions};

/// Default criticality threshold in bits.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// `f ≡ 0`: best pointwise redundancy `O(log n)`.
    Critical,
    /// `f` not constant: pointwise redundancy of order `√n`.
    Generic,
}

impl Verdict {
    pub fn from_max_abs_f(max_abs_f: f64, epsilon: f64) -> Self {
        if max_abs_f <= epsilon {
            Verdict::Critical
        } else {
            Verdict::Generic
        }
    }

    pub fn redundancy_order(self) -> &'static str {
        match self {
            Verdict::Critical => "O(log n)",
            Verdict::Generic => "O(sqrt n)",
        }
    }

    /// One-line form printed by the CLI.
    pub fn banner(self) -> &'static str {
        match self {
            Verdict::Critical => "CRITICAL (O(log n))",
            Verdict::Generic => "GENERIC (O(sqrt n))",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Critical => "Critical",
            Verdict::Generic => "Generic",
        })
    }
}

/// `f(a_i) = log₂e·[λ*D − ln Σ_j Q*_j e^{λ*ρ_ij}] − R(D)` in bits.
pub fn f_values(
    model: &DiscreteModel,
    q_star: &[f64],
    lambda_star: f64,
    d: f64,
    r_bits: f64,
) -> Result<Vec<f64>> {
    if q_star.len() != model.repro_len() || q_star.iter().all(|&v| v <= 0.0) {
        return Err(Error::InvalidArgument("Q* has empty support".into()));
    }
    Ok(log_g(model, q_star, lambda_star)
        .into_iter()
        .map(|lg| LOG2_E * (lambda_star * d - lg) - r_bits)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constancy {
    pub critical: bool,
    /// `log₂(max_i g_i / min_i g_i)`.
    pub spread_bits: f64,
}

/// Test whether `g_i = Σ_j Q*_j e^{λ*ρ_ij}` is constant across source letters.
pub fn constancy_test(
    model: &DiscreteModel,
    q_star: &[f64],
    lambda_star: f64,
    epsilon: f64,
) -> Constancy {
    let lg = log_g(model, q_star, lambda_star);
    let max = lg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = lg.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = (max - min) * LOG2_E;
    Constancy {
        critical: spread <= epsilon,
        spread_bits: spread,
    }
}

/// `σ² = Σ_i P_i f_i²` (f has zero mean under P).
pub fn minimal_coding_variance(model: &DiscreteModel, f_bits: &[f64]) -> f64 {
    model.pmf().iter().zip(f_bits).map(|(p, f)| p * f * f).sum()
}

/// Lossless redundancy function `f_i = −log₂ P_i − H(P)`.
pub fn lossless_f(pmf: &[f64]) -> Vec<f64> {
    // exact zeros for a uniform pmf, where H = −log₂ P_i identically
    if pmf.windows(2).all(|w| w[0] == w[1]) {
        return vec![0.0; pmf.len()];
    }
    let h: f64 = pmf
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum();
    pmf.iter().map(|p| -p.log2() - h).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem1Prediction {
    pub uniform: bool,
    pub permutation: bool,
    /// Uniform source and permutation distortion: critical at every `D`.
    pub critical_for_all_d: bool,
    /// The structural rule assumes a square symmetric matrix with zeros
    /// exactly on the diagonal; reported, not enforced.
    pub structure: SymmetryCheck,
}

pub fn theorem1_predict(model: &DiscreteModel) -> Theorem1Prediction {
    let uniform = is_uniform(model.pmf(), STRUCT_TOL);
    let permutation = model.is_permutation_measure(STRUCT_TOL).is_permutation;
    Theorem1Prediction {
        uniform,
        permutation,
        critical_for_all_d: uniform && permutation,
        structure: model.symmetry_check(STRUCT_TOL),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalityReport {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "R_bits")]
    pub r_bits: f64,
    pub lambda_star: f64,
    #[serde(rename = "Q_star")]
    pub q_star: Vec<f64>,
    #[serde(rename = "f")]
    pub f_bits: Vec<f64>,
    pub f_tilde_bits: Vec<f64>,
    pub max_abs_f: f64,
    #[serde(rename = "sigma2")]
    pub sigma2_bits2: f64,
    pub spread: f64,
    pub verdict: Verdict,
    pub redundancy: &'static str,
    pub epsilon_used: f64,
    pub theorem1: Theorem1Prediction,
    pub kkt: KktReport,
    pub dual_degenerate: bool,
}

/// Solve at `D` and classify the source.
pub fn classify(model: &DiscreteModel, d: f64, epsilon: f64) -> Result<CriticalityReport> {
    let opts = SolveOptions {
        epsilon,
        ..SolveOptions::default()
    };
    classify_with(model, d, &opts)
}

pub fn classify_with(
    model: &DiscreteModel,
    d: f64,
    opts: &SolveOptions,
) -> Result<CriticalityReport> {
    let sol = solve_at_distortion(model, d, opts)?;
    let max_abs_f = sol.f_bits.iter().map(|f| f.abs()).fold(0.0, f64::max);
    Ok(CriticalityReport {
        d: sol.d,
        r_bits: sol.r_bits,
        lambda_star: sol.lambda_star,
        f_tilde_bits: sol.f_bits.iter().map(|f| f + sol.r_bits).collect(),
        max_abs_f,
        sigma2_bits2: sol.sigma2_bits2,
        spread: sol.spread_bits,
        verdict: sol.verdict,
        redundancy: sol.verdict.redundancy_order(),
        epsilon_used: opts.epsilon,
        theorem1: theorem1_predict(model),
        q_star: sol.q_star,
        f_bits: sol.f_bits,
        kkt: sol.kkt,
        dual_degenerate: sol.dual_degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::lagrangian::lambda_eval;

    const P5: [f64; 3] = [4.0 / 13.0, 4.0 / 13.0, 5.0 / 13.0];

    fn mean(model: &DiscreteModel, v: &[f64]) -> f64 {
        model.pmf().iter().zip(v).map(|(p, x)| p * x).sum()
    }

    #[test]
    fn example_five_certificate_has_zero_f() {
        let m = builtin::five();
        let ev = lambda_eval(&m, &P5, -1.0).unwrap();
        let r = (-ev.first_deriv - ev.value) * LOG2_E;
        let f = f_values(&m, &P5, -1.0, ev.first_deriv, r).unwrap();
        assert!(f.iter().all(|v| v.abs() <= 1e-12), "{f:?}");
        let c = constancy_test(&m, &P5, -1.0, DEFAULT_EPSILON);
        assert!(c.critical && c.spread_bits <= 1e-12);
    }

    #[test]
    fn binary_generic_values() {
        // mean-centred −log₂(P(x)/(1−D)) at p = 0.3, D = 0.1
        let m = builtin::binary(0.3).unwrap();
        let rep = classify(&m, 0.1, DEFAULT_EPSILON).unwrap();
        let raw: Vec<f64> = m.pmf().iter().map(|p| -(p / 0.9).log2()).collect();
        let mu = mean(&m, &raw);
        for (f, r) in rep.f_bits.iter().zip(&raw) {
            assert!((f - (r - mu)).abs() < 1e-8);
        }
        assert!((rep.f_bits[0] + 0.366_717_726_400_934_36).abs() < 1e-8);
        assert!((rep.f_bits[1] - 0.855_674_694_935_513_5).abs() < 1e-8);
        assert!((rep.sigma2_bits2 - 0.313_791_078_665_564_66).abs() < 1e-8);
        assert!((rep.spread - 1.222_392_421_336_447_9).abs() < 1e-8);
        assert_eq!(rep.verdict, Verdict::Generic);
        assert!(mean(&m, &rep.f_bits).abs() < 1e-12);
        assert!((mean(&m, &rep.f_tilde_bits) - rep.r_bits).abs() < 1e-12);
    }

    #[test]
    fn binary_verdicts() {
        let rep = classify(&builtin::binary(0.5).unwrap(), 0.25, DEFAULT_EPSILON).unwrap();
        assert_eq!(rep.verdict, Verdict::Critical);
        assert_eq!(rep.redundancy, "O(log n)");
        assert_eq!(rep.sigma2_bits2, rep.sigma2_bits2.abs());
        assert!(rep.sigma2_bits2 <= 1e-12);
    }

    #[test]
    fn example_five_verdicts() {
        let m = builtin::five();
        let d_star = lambda_eval(&m, &P5, -1.0).unwrap().first_deriv;
        let rep = classify(&m, d_star, DEFAULT_EPSILON).unwrap();
        assert_eq!(rep.verdict, Verdict::Critical);
        assert!((rep.lambda_star + 1.0).abs() < 1e-6);
        let rep = classify(&m, 0.2, DEFAULT_EPSILON).unwrap();
        assert_eq!(rep.verdict, Verdict::Generic);
        assert!(rep.spread > 1e-3);
    }

    #[test]
    fn single_column_constancy() {
        let m = DiscreteModel::from_matrix(vec![0.5, 0.5], vec![vec![0.0], vec![0.0]]).unwrap();
        assert!(constancy_test(&m, &[1.0], -3.0, DEFAULT_EPSILON).critical);
        assert!(f_values(&m, &[0.0], -1.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn lossless_values() {
        assert!(lossless_f(&[0.25; 4]).iter().all(|f| *f == 0.0));
        assert_eq!(lossless_f(&[0.5, 0.25, 0.25]), vec![-0.5, 0.5, 0.5]);
        let f = lossless_f(&[0.9, 0.1]);
        let h = -(0.9f64 * 0.9f64.log2() + 0.1 * 0.1f64.log2());
        assert!((h - 0.468_995_593_589_281_2).abs() < 1e-15);
        assert!((f[0] - (-0.9f64.log2() - h)).abs() < 1e-15);
        assert!((f[0] + 0.316_992_500_144_231_3).abs() < 1e-12);
        assert!((f[1] - 2.852_932_501_298_081).abs() < 1e-12);
    }

    #[test]
    fn variance_examples() {
        let m = builtin::lossless();
        let f = lossless_f(m.pmf());
        assert!((minimal_coding_variance(&m, &f) - 0.25).abs() < 1e-15);
        let u = DiscreteModel::hamming(vec![1.0 / 3.0; 3]).unwrap();
        assert_eq!(minimal_coding_variance(&u, &lossless_f(u.pmf())), 0.0);
    }

    #[test]
    fn theorem1_predictions() {
        let t = theorem1_predict(&DiscreteModel::hamming(vec![0.25; 4]).unwrap());
        assert!(t.critical_for_all_d);
        let t = theorem1_predict(&builtin::five());
        assert!(!t.uniform && !t.permutation && !t.critical_for_all_d);
        let m = DiscreteModel::from_matrix(
            vec![1.0 / 3.0; 3],
            vec![
                vec![0.0, 1.0, 2.0],
                vec![1.0, 0.0, 2.0],
                vec![2.0, 2.0, 0.0],
            ],
        )
        .unwrap();
        let t = theorem1_predict(&m);
        assert!(t.uniform && !t.permutation && !t.critical_for_all_d);
    }
}
