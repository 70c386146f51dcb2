//! Source and reproduction alphabets, distortion matrices and the structural
//! predicates used by the criticality checks.
//!
//! Distortions are stored in normalized form: every source row has a zero
//! entry. Raw matrices are shifted row by row on construction and the shifts
//! are kept in [`DiscreteModel::offsets`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for the structural predicates.
pub const STRUCT_TOL: f64 = 1e-9;
/// Tolerance on `|Σ pmf − 1|` for source distributions.
pub const PMF_SUM_TOL: f64 = 1e-12;
/// Tolerance on `|Σ Q − 1|` for reproduction distributions, which usually come
/// out of an iterative solver.
pub const Q_SUM_TOL: f64 = 1e-9;

/// Subtract the row minimum from every row.
///
/// Returns the normalized matrix and the per-row offsets.
pub fn normalize_distortion(raw: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut out = Vec::with_capacity(raw.len());
    let mut offsets = Vec::with_capacity(raw.len());
    for (i, row) in raw.iter().enumerate() {
        if row.is_empty() {
            return Err(Error::InvalidModel(format!("distortion row {i} is empty")));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidModel(format!(
                "distortion row {i} has a non-finite or negative entry {v}"
            )));
        }
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        out.push(row.iter().map(|v| v - min).collect());
        offsets.push(min);
    }
    Ok((out, offsets))
}

/// True iff `max_i |pmf[i] − 1/k| ≤ tol`.
pub fn is_uniform(pmf: &[f64], tol: f64) -> bool {
    if pmf.is_empty() {
        return false;
    }
    let u = 1.0 / pmf.len() as f64;
    pmf.iter().all(|p| (p - u).abs() <= tol)
}

/// Check that `q` is a probability vector of length `len`.
pub fn validate_pmf(q: &[f64], len: usize, sum_tol: f64) -> Result<()> {
    if q.len() != len {
        return Err(Error::InvalidArgument(format!(
            "distribution has {} entries, expected {len}",
            q.len()
        )));
    }
    if let Some(v) = q.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distribution has a non-finite or negative entry {v}"
        )));
    }
    let s: f64 = q.iter().sum();
    if (s - 1.0).abs() > sum_tol {
        return Err(Error::InvalidArgument(format!(
            "distribution sums to {s}, not 1"
        )));
    }
    Ok(())
}

/// `D_max` together with the column achieving it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DMax {
    pub value: f64,
    /// Lowest-index column attaining the minimum expected distortion.
    pub column: usize,
}

/// Result of the permutation-measure predicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationCheck {
    pub is_permutation: bool,
    /// First pair of rows whose sorted entries differ.
    pub witness: Option<(usize, usize)>,
    pub reason: Option<String>,
}

/// Advisory structure report: the structural criticality rule assumes a square,
/// symmetric matrix that vanishes exactly on the diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetryCheck {
    pub square: bool,
    pub symmetric: bool,
    pub zero_diagonal_only: bool,
}

/// A memoryless source on a finite alphabet with a finite reproduction alphabet.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteModel {
    source_labels: Vec<String>,
    pmf: Vec<f64>,
    repro_labels: Vec<String>,
    /// Row-major `k_s × k_r`, normalized.
    rho: Vec<f64>,
    offsets: Vec<f64>,
}

impl DiscreteModel {
    /// Build a model from a raw (possibly unnormalized) distortion matrix.
    pub fn new(
        source_labels: Vec<String>,
        pmf: Vec<f64>,
        repro_labels: Vec<String>,
        raw_rho: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let ks = pmf.len();
        if ks == 0 {
            return Err(Error::InvalidModel("empty source alphabet".into()));
        }
        if source_labels.len() != ks {
            return Err(Error::InvalidModel(format!(
                "{} source labels for {ks} probabilities",
                source_labels.len()
            )));
        }
        let kr = repro_labels.len();
        if kr == 0 {
            return Err(Error::InvalidModel("empty reproduction alphabet".into()));
        }
        if raw_rho.len() != ks || raw_rho.iter().any(|r| r.len() != kr) {
            return Err(Error::InvalidModel(format!(
                "distortion matrix must be {ks}x{kr}"
            )));
        }
        if let Some((i, p)) = pmf
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p <= 0.0)
        {
            return Err(Error::InvalidModel(format!(
                "source probability {i} is {p}; drop zero-probability letters first"
            )));
        }
        let s: f64 = pmf.iter().sum();
        if (s - 1.0).abs() > PMF_SUM_TOL {
            return Err(Error::InvalidModel(format!("source pmf sums to {s}")));
        }
        let (norm, offsets) = normalize_distortion(&raw_rho)?;
        Ok(Self {
            source_labels,
            pmf,
            repro_labels,
            rho: norm.into_iter().flatten().collect(),
            offsets,
        })
    }

    /// Model with numeric labels `0..k`.
    pub fn from_matrix(pmf: Vec<f64>, raw_rho: Vec<Vec<f64>>) -> Result<Self> {
        let ks = pmf.len();
        let kr = raw_rho.first().map_or(0, Vec::len);
        Self::new(
            (0..ks).map(|i| i.to_string()).collect(),
            pmf,
            (0..kr).map(|j| j.to_string()).collect(),
            raw_rho,
        )
    }

    /// `A = Â` with Hamming distortion.
    pub fn hamming(pmf: Vec<f64>) -> Result<Self> {
        let k = pmf.len();
        let rho = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect();
        Self::from_matrix(pmf, rho)
    }

    pub fn source_len(&self) -> usize {
        self.pmf.len()
    }

    pub fn repro_len(&self) -> usize {
        self.repro_labels.len()
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn source_labels(&self) -> &[String] {
        &self.source_labels
    }

    pub fn repro_labels(&self) -> &[String] {
        &self.repro_labels
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    #[inline]
    pub fn rho(&self, i: usize, j: usize) -> f64 {
        self.rho[i * self.repro_len() + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let kr = self.repro_len();
        &self.rho[i * kr..(i + 1) * kr]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rho.chunks_exact(self.repro_len())
    }

    /// Normalized distortion matrix as nested rows.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// The bound `M`: largest normalized distortion.
    pub fn max_distortion(&self) -> f64 {
        self.rho.iter().copied().fold(0.0, f64::max)
    }

    /// Expected distortion of each fixed reproduction letter.
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.repro_len()];
        for (p, row) in self.pmf.iter().zip(self.rows()) {
            for (m, r) in means.iter_mut().zip(row) {
                *m += p * r;
            }
        }
        means
    }

    /// Smallest distortion reachable with a single reproduction letter.
    pub fn d_max(&self) -> DMax {
        let means = self.column_means();
        let mut best = DMax {
            value: means[0],
            column: 0,
        };
        for (j, &m) in means.iter().enumerate().skip(1) {
            if m < best.value {
                best = DMax {
                    value: m,
                    column: j,
                };
            }
        }
        best
    }

    /// `E_P[min_{a ∈ supp Q} ρ(X, a)]`.
    pub fn d_min_q(&self, q: &[f64]) -> Result<f64> {
        validate_pmf(q, self.repro_len(), Q_SUM_TOL)?;
        Ok(self
            .pmf
            .iter()
            .zip(self.rows())
            .map(|(p, row)| {
                let m = row
                    .iter()
                    .zip(q)
                    .filter(|(_, &qj)| qj > 0.0)
                    .map(|(r, _)| *r)
                    .fold(f64::INFINITY, f64::min);
                p * m
            })
            .sum())
    }

    /// `E_{P×Q}[ρ(X, Y)]`.
    pub fn d_max_q(&self, q: &[f64]) -> Result<f64> {
        validate_pmf(q, self.repro_len(), Q_SUM_TOL)?;
        Ok(self
            .pmf
            .iter()
            .zip(self.rows())
            .map(|(p, row)| p * row.iter().zip(q).map(|(r, qj)| r * qj).sum::<f64>())
            .sum())
    }

    /// True iff all rows are equal as multisets (sorted rows agree within `tol`).
    pub fn is_permutation_measure(&self, tol: f64) -> PermutationCheck {
        if self.source_len() != self.repro_len() {
            return PermutationCheck {
                is_permutation: false,
                witness: None,
                reason: Some("not square".into()),
            };
        }
        let sorted: Vec<Vec<f64>> = self
            .rows()
            .map(|r| {
                let mut v = r.to_vec();
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        for a in 0..sorted.len() {
            for b in a + 1..sorted.len() {
                let differ = sorted[a]
                    .iter()
                    .zip(&sorted[b])
                    .any(|(x, y)| (x - y).abs() > tol);
                if differ {
                    return PermutationCheck {
                        is_permutation: false,
                        witness: Some((a, b)),
                        reason: Some(format!("rows {a} and {b} are not permutations")),
                    };
                }
            }
        }
        PermutationCheck {
            is_permutation: true,
            witness: None,
            reason: None,
        }
    }

    pub fn symmetry_check(&self, tol: f64) -> SymmetryCheck {
        let k = self.source_len();
        if k != self.repro_len() {
            return SymmetryCheck {
                square: false,
                symmetric: false,
                zero_diagonal_only: false,
            };
        }
        let mut symmetric = true;
        let mut zero_diag = true;
        for i in 0..k {
            for j in 0..k {
                if (self.rho(i, j) - self.rho(j, i)).abs() > tol {
                    symmetric = false;
                }
                let is_zero = self.rho(i, j).abs() <= tol;
                if (i == j) != is_zero {
                    zero_diag = false;
                }
            }
        }
        SymmetryCheck {
            square: true,
            symmetric,
            zero_diagonal_only: zero_diag,
        }
    }
}

/// Built-in source densities for continuous models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Density {
    Uniform,
    /// Normal density restricted to the interval (unnormalized on `I`;
    /// discretization renormalizes).
    TruncatedNormal {
        mean: f64,
        std: f64,
    },
}

impl Density {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Density::Uniform => 1.0,
            Density::TruncatedNormal { mean, std } => {
                let z = (x - mean) / std;
                (-0.5 * z * z).exp()
            }
        }
    }
}

/// Built-in per-letter distortion families on the real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionFamily {
    SquaredError,
    AbsoluteError,
}

impl DistortionFamily {
    pub fn raw(self, x: f64, y: f64) -> f64 {
        match self {
            DistortionFamily::SquaredError => (x - y) * (x - y),
            DistortionFamily::AbsoluteError => (x - y).abs(),
        }
    }
}

/// A source with a positive density on an interval `I` and finitely many
/// real reproduction points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuousModel {
    low: f64,
    high: f64,
    density: Density,
    repro_points: Vec<f64>,
    family: DistortionFamily,
    grid_size: usize,
}

impl ContinuousModel {
    pub fn new(
        interval: [f64; 2],
        density: Density,
        repro_points: Vec<f64>,
        family: DistortionFamily,
        grid_size: usize,
    ) -> Result<Self> {
        let [low, high] = interval;
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(Error::InvalidModel(format!(
                "interval [{low}, {high}] is empty or unbounded"
            )));
        }
        if repro_points.is_empty() {
            return Err(Error::InvalidModel("no reproduction points".into()));
        }
        if repro_points.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidModel("non-finite reproduction point".into()));
        }
        for a in 0..repro_points.len() {
            for b in a + 1..repro_points.len() {
                if repro_points[a] == repro_points[b] {
                    return Err(Error::InvalidModel(format!(
                        "reproduction point {} repeated",
                        repro_points[a]
                    )));
                }
            }
        }
        if let Density::TruncatedNormal { std, mean } = density {
            if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "truncated normal needs finite mean and std > 0, got ({mean}, {std})"
                )));
            }
        }
        if grid_size == 0 {
            return Err(Error::InvalidModel("grid_size must be positive".into()));
        }
        Ok(Self {
            low,
            high,
            density,
            repro_points,
            family,
            grid_size,
        })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.low, self.high)
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    pub fn repro_points(&self) -> &[f64] {
        &self.repro_points
    }

    pub fn family(&self) -> DistortionFamily {
        self.family
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    /// Number of reproduction points `k`.
    pub fn k(&self) -> usize {
        self.repro_points.len()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.low && x <= self.high
    }

    /// Normalized distortion `r_j(x) = ρ(x, a_j) − min_z ρ(x, z)` for the
    /// 0-based reproduction index `j`.
    pub fn r(&self, j: usize, x: f64) -> f64 {
        distortion_functions(self.family, &self.repro_points, x)[j]
    }

    /// All normalized distortions at `x`.
    pub fn r_all(&self, x: f64) -> Vec<f64> {
        distortion_functions(self.family, &self.repro_points, x)
    }
}

/// Row of normalized distortions at `x`. Works for repeated points too, which
/// the rank check uses for degenerate inputs.
pub(crate) fn distortion_functions(family: DistortionFamily, points: &[f64], x: f64) -> Vec<f64> {
    let raw: Vec<f64> = points.iter().map(|&y| family.raw(x, y)).collect();
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    raw.into_iter().map(|v| v - min).collect()
}
