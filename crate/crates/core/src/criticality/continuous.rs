//! Continuous-source tools: discretization onto a midpoint grid and the
//! linear-independence check on `{e^{λ r_j}}`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{distortion_functions, ContinuousModel, DiscreteModel, DistortionFamily};

/// Smallest singular value that still counts as linearly independent.
pub const INDEPENDENCE_THRESHOLD: f64 = 1e-8;

/// Midpoint discretization with `grid_size` cells. Cell probabilities are
/// proportional to the density at the midpoint; distortions are the
/// normalized `r_j` at the midpoint.
pub fn discretize(model: &ContinuousModel) -> Result<DiscreteModel> {
    let m = model.grid_size();
    if m < model.k() {
        return Err(Error::InvalidArgument(format!(
            "grid of {m} cells is smaller than the {} reproduction points",
            model.k()
        )));
    }
    let (lo, hi) = model.interval();
    let w = (hi - lo) / m as f64;
    let mids: Vec<f64> = (0..m).map(|i| lo + (i as f64 + 0.5) * w).collect();
    let weights: Vec<f64> = mids.iter().map(|&x| model.density().eval(x) * w).collect();
    if weights.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidModel(
            "density is not positive on every grid cell".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    let pmf: Vec<f64> = weights.iter().map(|v| v / total).collect();
    let rho: Vec<Vec<f64>> = mids.iter().map(|&x| model.r_all(x)).collect();
    DiscreteModel::new(
        mids.iter().map(|x| format!("{x}")).collect(),
        pmf,
        model
            .repro_points()
            .iter()
            .map(|y| format!("{y}"))
            .collect(),
        rho,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceReport {
    /// `(λ, σ_min)` of the column-normalized sample matrix.
    pub min_singular_value_by_lambda: Vec<(f64, f64)>,
    pub sample_count: usize,
    pub threshold: f64,
    pub independent: bool,
}

/// Rank check of `{1, e^{λ r_1}, …, e^{λ r_k}}` sampled at `sample_count`
/// evenly spaced points of `[low, high]`. Repeated reproduction points are
/// allowed here.
pub fn independence_for_points(
    interval: (f64, f64),
    family: DistortionFamily,
    repro_points: &[f64],
    lambda_grid: &[f64],
    sample_count: usize,
) -> Result<IndependenceReport> {
    let cols = repro_points.len() + 1;
    if sample_count < 4 * cols {
        return Err(Error::InvalidArgument(format!(
            "need at least {} samples for {cols} functions",
            4 * cols
        )));
    }
    if lambda_grid.is_empty() || lambda_grid.iter().any(|l| !(*l < 0.0)) {
        return Err(Error::InvalidArgument(
            "lambda grid must be nonempty and negative".into(),
        ));
    }
    let (lo, hi) = interval;
    let step = (hi - lo) / sample_count as f64;
    let r: Vec<Vec<f64>> = (0..sample_count)
        .map(|s| distortion_functions(family, repro_points, lo + (s as f64 + 0.5) * step))
        .collect();

    let mut by_lambda = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        let mut a = DMatrix::from_fn(sample_count, cols, |s, j| {
            if j == 0 {
                1.0
            } else {
                (lambda * r[s][j - 1]).exp()
            }
        });
        for mut c in a.column_iter_mut() {
            let n = c.norm();
            if n > 0.0 {
                c /= n;
            }
        }
        let sv = a.singular_values();
        by_lambda.push((lambda, sv.min()));
    }
    let worst = by_lambda.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(IndependenceReport {
        min_singular_value_by_lambda: by_lambda,
        sample_count,
        threshold: INDEPENDENCE_THRESHOLD,
        independent: worst > INDEPENDENCE_THRESHOLD,
    })
}

pub fn check_thm2_independence(
    model: &ContinuousModel,
    lambda_grid: &[f64],
    sample_count: usize,
) -> Result<IndependenceReport> {
    independence_for_points(
        model.interval(),
        model.family(),
        model.repro_points(),
        lambda_grid,
        sample_count,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    const GRID: [f64; 4] = [-0.5, -1.0, -2.0, -4.0];

    #[test]
    fn example_four_is_independent() {
        let rep = check_thm2_independence(&builtin::l1three(), &GRID, 400).unwrap();
        assert!(rep.independent, "{rep:?}");
        assert_eq!(rep.min_singular_value_by_lambda.len(), 4);
    }

    #[test]
    fn duplicated_point_is_dependent() {
        let rep = independence_for_points(
            (0.0, 6.0),
            DistortionFamily::AbsoluteError,
            &[1.0, 3.0, 3.0],
            &GRID,
            400,
        )
        .unwrap();
        assert!(!rep.independent);
        assert!(rep.min_singular_value_by_lambda.iter().all(|p| p.1 <= 1e-8));
    }

    #[test]
    fn constant_only_is_independent() {
        let rep =
            independence_for_points((0.0, 1.0), DistortionFamily::SquaredError, &[], &GRID, 8)
                .unwrap();
        assert!(rep.independent);
    }

    #[test]
    fn too_few_samples() {
        assert!(check_thm2_independence(&builtin::mse2(), &GRID, 11).is_err());
        assert!(check_thm2_independence(&builtin::mse2(), &[0.5], 100).is_err());
    }

    #[test]
    fn discretization_shape() {
        let d = discretize(&builtin::mse2()).unwrap();
        assert_eq!(d.source_len(), 400);
        assert_eq!(d.repro_len(), 2);
        assert!(d.pmf().iter().all(|p| (p - 1.0 / 400.0).abs() < 1e-15));
        // every row keeps a zero
        assert!(d.rows().all(|r| r.contains(&0.0)));
        // midpoint of the last cell is 1.995, r_1 = 4x there
        assert!((d.rho(399, 0) - 4.0 * 1.995).abs() < 1e-12);
        assert_eq!(discretize(&builtin::mse2()).unwrap(), d);

        let tiny = ContinuousModel::new(
            [0.0, 1.0],
            crate::model::Density::Uniform,
            vec![0.1, 0.5, 0.9],
            DistortionFamily::AbsoluteError,
            2,
        )
        .unwrap();
        assert!(discretize(&tiny).is_err());
    }
}
