//! Determinant diagnostics.
//!
//! For evaluation points `x_0..x_k` and reproduction functions `r_1..r_k`
//! (with `r_0 ≡ 0`), `T(λ)` is the `(k+1)×(k+1)` matrix `[e^{λ r_j(x_i)}]`.
//! If `Σ_j Q_j e^{λ r_j(x)}` is constant over the points then
//! `T(λ)(−c, Q)ᵀ = 0` and `det T(λ) = 0`. Expanding the determinant over
//! permutations gives `Σ_π sgn(π) e^{λ s_π}` with `s_π = Σ_j r_j(x_{π(j)})`;
//! if the identity sum differs from every other `s_π` the determinant cannot
//! vanish along a sequence `λ → −∞`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lagrangian::log_g;
use crate::model::{ContinuousModel, DiscreteModel};

/// Largest `k + 1` for which all permutations are enumerated.
pub const S_PI_EXHAUSTIVE_MAX: usize = 8;
const S_PI_SAMPLES: usize = 10_000;
const S_PI_SEED: u64 = 0x5eed_u64;
/// Cap on the number of row subsets examined by [`certificate_det`].
const MAX_ROW_SUBSETS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SPiMode {
    Exhaustive,
    /// Random permutations only; a `true` verdict is probabilistic.
    Sampled,
}

/// Outcome of the permutation-sum check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thm3bReport {
    /// The identity sum differs from every other `s_π` examined.
    pub holds: bool,
    /// `min_{π ≠ id} |s_π − s_id|` over the permutations examined.
    pub margin: f64,
    pub mode: SPiMode,
    pub permutations_checked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Points {
    SourceIndices(Vec<usize>),
    Reals(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetDiagnostic {
    pub lambda: f64,
    pub points: Option<Points>,
    pub size: usize,
    pub det_value: f64,
    /// `‖T‖_∞^{size}`, the natural magnitude of the determinant.
    pub scale: f64,
    /// Identity permutation sum is distinct from all others.
    pub s_pi_distinct: bool,
    pub s_pi: Thm3bReport,
}

fn check_shape(r: &[Vec<f64>]) -> Result<usize> {
    let n = r.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no evaluation points".into()));
    }
    let k = n - 1;
    if r.iter().any(|row| row.len() != k) {
        return Err(Error::InvalidArgument(format!(
            "expected {n} rows of {k} function values"
        )));
    }
    if r.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite function value".into()));
    }
    Ok(k)
}

/// `r_j(x_i)` with the zero function in column 0.
fn value(r: &[Vec<f64>], i: usize, j: usize) -> f64 {
    if j == 0 {
        0.0
    } else {
        r[i][j - 1]
    }
}

fn identity_sum(r: &[Vec<f64>]) -> f64 {
    (0..r.len()).map(|j| value(r, j, j)).sum()
}

fn perm_sum(r: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter()
        .enumerate()
        .map(|(j, &pj)| value(r, pj, j))
        .sum()
}

/// Heap's algorithm, visiting every permutation of `0..n` except the first.
fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize])) {
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            visit(&a);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Check that `s_id` differs from `s_π` for every non-identity permutation.
///
/// `r` has `k + 1` rows (points) of `k` values (functions `r_1..r_k`).
pub fn s_pi_check(r: &[Vec<f64>]) -> Result<Thm3bReport> {
    let k = check_shape(r)?;
    let n = k + 1;
    let s_id = identity_sum(r);
    let mut margin = f64::INFINITY;
    let mut count = 0;
    let mode = if n <= S_PI_EXHAUSTIVE_MAX {
        for_each_permutation(n, |p| {
            count += 1;
            margin = margin.min((perm_sum(r, p) - s_id).abs());
        });
        SPiMode::Exhaustive
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(S_PI_SEED);
        let mut p: Vec<usize> = (0..n).collect();
        let identity: Vec<usize> = (0..n).collect();
        while count < S_PI_SAMPLES {
            p.shuffle(&mut rng);
            if p == identity {
                continue;
            }
            count += 1;
            margin = margin.min((perm_sum(r, &p) - s_id).abs());
        }
        SPiMode::Sampled
    };
    Ok(Thm3bReport {
        holds: margin > 0.0,
        margin,
        mode,
        permutations_checked: count,
    })
}

/// Determinant of `[e^{λ r_j(x_i)}]_{i,j=0..k}` with the zero function
/// prepended, plus the permutation-sum check.
pub fn det_t(r: &[Vec<f64>], lambda: f64) -> Result<DetDiagnostic> {
    let k = check_shape(r)?;
    let n = k + 1;
    let t = DMatrix::from_fn(n, n, |i, j| (lambda * value(r, i, j)).exp());
    let norm_inf = (0..n)
        .map(|i| t.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let s_pi = s_pi_check(r)?;
    Ok(DetDiagnostic {
        lambda,
        points: None,
        size: n,
        det_value: t.determinant(),
        scale: norm_inf.powi(n as i32),
        s_pi_distinct: s_pi.holds,
        s_pi,
    })
}

fn combinations(n: usize, r: usize, cap: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if r > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        out.push(idx.clone());
        if out.len() >= cap {
            return out;
        }
        let Some(i) = (0..r).rev().find(|&i| idx[i] < n - r + i) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Builds the `r` rows for one subset of source letters.
type RowBuilder<'a> = Box<dyn Fn(&[usize]) -> Vec<Vec<f64>> + 'a>;

/// Determinant diagnostic at a discrete certificate `(Q, λ)`.
///
/// With support `S` of size `N` and at least `N + 1` source letters, this is
/// `T(λ)` over `N + 1` source letters and the columns `{0} ∪ S`; the subset
/// with the largest `|det|` is reported. With fewer letters the support
/// columns are merged into their `Q`-mixture, i.e. a single function with
/// `e^{λ r(x_i)} = Σ_j Q_j e^{λρ_ij}`, and the `2×2` determinants over pairs
/// of letters are examined instead. Either way the value vanishes at a
/// critical certificate.
pub fn certificate_det(model: &DiscreteModel, q: &[f64], lambda: f64) -> Result<DetDiagnostic> {
    if !(lambda < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "certificate slope {lambda} must be < 0"
        )));
    }
    let support: Vec<usize> = (0..q.len()).filter(|&j| q[j] > 0.0).collect();
    if support.is_empty() || q.len() != model.repro_len() {
        return Err(Error::InvalidArgument("Q has empty support".into()));
    }
    let ks = model.source_len();
    let n = support.len();
    let (subsets, rows): (Vec<Vec<usize>>, RowBuilder<'_>) = if ks > n {
        let rows = move |sub: &[usize]| -> Vec<Vec<f64>> {
            sub.iter()
                .map(|&i| support.iter().map(|&j| model.rho(i, j)).collect())
                .collect()
        };
        (combinations(ks, n + 1, MAX_ROW_SUBSETS), Box::new(rows))
    } else {
        let r_eff: Vec<f64> = log_g(model, q, lambda)
            .into_iter()
            .map(|lg| lg / lambda)
            .collect();
        let rows =
            move |sub: &[usize]| -> Vec<Vec<f64>> { sub.iter().map(|&i| vec![r_eff[i]]).collect() };
        if ks < 2 {
            return Err(Error::InvalidArgument(
                "need at least two source letters".into(),
            ));
        }
        (combinations(ks, 2, MAX_ROW_SUBSETS), Box::new(rows))
    };
    let mut best: Option<DetDiagnostic> = None;
    for sub in &subsets {
        let mut diag = det_t(&rows(sub), lambda)?;
        diag.points = Some(Points::SourceIndices(sub.clone()));
        let worse = best
            .as_ref()
            .is_some_and(|b| b.det_value.abs() / b.scale >= diag.det_value.abs() / diag.scale);
        if !worse {
            best = Some(diag);
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no row subsets".into()))
}

fn validate_points(points: &[f64], model: &ContinuousModel) -> Result<()> {
    if points.len() != model.k() + 1 {
        return Err(Error::InvalidArgument(format!(
            "need {} points for {} reproduction letters, got {}",
            model.k() + 1,
            model.k(),
            points.len()
        )));
    }
    for (a, &x) in points.iter().enumerate() {
        if !model.contains(x) {
            let (lo, hi) = model.interval();
            return Err(Error::InvalidArgument(format!(
                "point {x} outside [{lo}, {hi}]"
            )));
        }
        if points[..a].contains(&x) {
            return Err(Error::InvalidArgument(format!("point {x} repeated")));
        }
    }
    Ok(())
}

/// `r_j(x_i)` for `i = 0..=k`, `j = 1..=k`.
pub(crate) fn r_matrix(points: &[f64], model: &ContinuousModel) -> Vec<Vec<f64>> {
    points.iter().map(|&x| model.r_all(x)).collect()
}

/// Strict-dominance condition: `r_j(x_j) > r_j(x_i)` for all `i ≠ j`, `j ≥ 1`.
/// Returns the verdict and the smallest gap `r_j(x_j) − r_j(x_i)`.
pub fn check_thm3a(points: &[f64], model: &ContinuousModel) -> Result<(bool, f64)> {
    validate_points(points, model)?;
    let r = r_matrix(points, model);
    let k = model.k();
    let mut margin = f64::INFINITY;
    for j in 1..=k {
        for i in 0..=k {
            if i != j {
                margin = margin.min(r[j][j - 1] - r[i][j - 1]);
            }
        }
    }
    Ok((margin > 0.0, margin))
}

/// Distinct-identity-sum condition over all permutations of the points.
pub fn check_thm3b(points: &[f64], model: &ContinuousModel) -> Result<Thm3bReport> {
    validate_points(points, model)?;
    s_pi_check(&r_matrix(points, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    #[test]
    fn two_by_two_closed_form() {
        for &(l, t) in &[(-1.0, 2.0), (-0.3, 0.5), (-5.0, 1.0)] {
            let d = det_t(&[vec![0.0], vec![t]], l).unwrap();
            assert!((d.det_value - ((l * t).exp() - 1.0)).abs() < 1e-15);
            assert!(d.det_value.abs() > 0.0);
            assert!(d.s_pi_distinct);
        }
    }

    #[test]
    fn limit_matrix_has_unit_determinant() {
        // x_0 positive everywhere, x_j zero exactly at function j
        let r = vec![
            vec![1.0, 2.0, 1.5],
            vec![0.0, 1.0, 3.0],
            vec![2.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ];
        let mut last = 0.0;
        for &l in &[-5.0, -20.0, -60.0] {
            last = det_t(&r, l).unwrap().det_value;
        }
        assert!((last.abs() - 1.0).abs() < 1e-12, "{last}");
    }

    #[test]
    fn heap_visits_every_permutation() {
        let mut seen = std::collections::HashSet::new();
        for_each_permutation(5, |p| {
            seen.insert(p.to_vec());
        });
        assert_eq!(seen.len(), 119);
        assert!(!seen.contains(&vec![0, 1, 2, 3, 4]));
    }

    #[test]
    fn s_pi_sampled_beyond_cap() {
        let r: Vec<Vec<f64>> = (0..9)
            .map(|i| {
                (0..8)
                    .map(|j| {
                        if i == j + 1 {
                            10.0 + j as f64
                        } else {
                            (i * j) as f64 * 0.01
                        }
                    })
                    .collect()
            })
            .collect();
        let rep = s_pi_check(&r).unwrap();
        assert_eq!(rep.mode, SPiMode::Sampled);
        assert_eq!(rep.permutations_checked, 10_000);
        assert!(rep.holds);
    }

    #[test]
    fn example_three_witness() {
        let m = builtin::mse2();
        let (ok, margin) = check_thm3a(&[0.0, 2.0, -2.0], &m).unwrap();
        assert!(ok);
        assert_eq!(margin, 8.0);
        assert!(check_thm3b(&[0.0, 2.0, -2.0], &m).unwrap().holds);
        assert!(!check_thm3a(&[0.0, -2.0, 2.0], &m).unwrap().0);
        assert!(check_thm3a(&[0.0, 2.0, 2.0], &m).is_err());
        assert!(check_thm3a(&[0.0, 2.0, 3.0], &m).is_err());
        assert!(check_thm3a(&[0.0, 2.0], &m).is_err());
    }

    #[test]
    fn combinations_enumerate_subsets() {
        assert_eq!(combinations(4, 2, 100).len(), 6);
        assert_eq!(combinations(3, 3, 100), vec![vec![0, 1, 2]]);
        assert!(combinations(2, 3, 100).is_empty());
        assert_eq!(combinations(10, 3, 7).len(), 7);
    }

    #[test]
    fn example_five_certificate_is_singular() {
        let m = builtin::five();
        let q = [4.0 / 13.0, 4.0 / 13.0, 5.0 / 13.0];
        let d = certificate_det(&m, &q, -1.0).unwrap();
        assert_eq!(d.size, 2);
        assert!(d.det_value.abs() <= 1e-12 * d.scale, "{d:?}");
    }

    #[test]
    fn partial_support_uses_letter_subsets() {
        let m = crate::model::DiscreteModel::hamming(vec![1.0 / 3.0; 3]).unwrap();
        let d = certificate_det(&m, &[0.5, 0.5, 0.0], -1.0).unwrap();
        assert_eq!(d.size, 3);
        assert!(matches!(d.points, Some(Points::SourceIndices(ref v)) if v.len() == 3));
    }
}
