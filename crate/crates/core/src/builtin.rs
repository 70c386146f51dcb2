//! Built-in example models.
//!
//! | name      | model                                                        |
//! |-----------|--------------------------------------------------------------|
//! | `lossless`| pmf (1/2, 1/4, 1/4), Hamming distortion, analysed at `D = 0` |
//! | `binary`  | Bernoulli(p) source, Hamming distortion                      |
//! | `mse2`    | uniform on [−2, 2], reproduction {−1, +1}, squared error     |
//! | `l1three` | uniform on [0, 6], reproduction {1, 3, 5}, absolute error    |
//! | `five`    | three letters, P = (4/13, 4/13, 5/13), critical at λ* = −1   |

use crate::error::{Error, Result};
use crate::model::{ContinuousModel, Density, DiscreteModel, DistortionFamily};

/// `α = ln(3e / (4 − e))`, the off-block distortion of [`five`].
pub fn five_alpha() -> f64 {
    let e = std::f64::consts::E;
    (3.0 * e / (4.0 - e)).ln()
}

/// Three-letter source that is critical at exactly one slope, `λ* = −1`.
pub fn five() -> DiscreteModel {
    let a = five_alpha();
    DiscreteModel::from_matrix(
        vec![4.0 / 13.0, 4.0 / 13.0, 5.0 / 13.0],
        vec![vec![0.0, 1.0, a], vec![1.0, 0.0, a], vec![a, a, 0.0]],
    )
    .expect("built-in model is valid")
}

/// Binary source with `P(1) = p` and Hamming distortion.
pub fn binary(p: f64) -> Result<DiscreteModel> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidModel(format!(
            "binary source needs 0 < p < 1, got {p}"
        )));
    }
    DiscreteModel::new(
        vec!["0".into(), "1".into()],
        vec![1.0 - p, p],
        vec!["0".into(), "1".into()],
        vec![vec![0.0, 1.0], vec![1.0, 0.0]],
    )
}

pub fn lossless() -> DiscreteModel {
    DiscreteModel::hamming(vec![0.5, 0.25, 0.25]).expect("built-in model is valid")
}

pub fn mse2() -> ContinuousModel {
    ContinuousModel::new(
        [-2.0, 2.0],
        Density::Uniform,
        vec![-1.0, 1.0],
        DistortionFamily::SquaredError,
        400,
    )
    .expect("built-in model is valid")
}

pub fn l1three() -> ContinuousModel {
    ContinuousModel::new(
        [0.0, 6.0],
        Density::Uniform,
        vec![1.0, 3.0, 5.0],
        DistortionFamily::AbsoluteError,
        600,
    )
    .expect("built-in model is valid")
}

/// Either kind of model, as read from a file or selected by name.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Discrete(DiscreteModel),
    Continuous(ContinuousModel),
}

/// Look up a built-in example by name. `p` is only used by `binary`
/// (default 0.5).
pub fn by_name(name: &str, p: Option<f64>) -> Result<AnyModel> {
    Ok(match name {
        "binary" => AnyModel::Discrete(binary(p.unwrap_or(0.5))?),
        "five" => AnyModel::Discrete(five()),
        "lossless" => AnyModel::Discrete(lossless()),
        "mse2" => AnyModel::Continuous(mse2()),
        "l1three" => AnyModel::Continuous(l1three()),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown example '{other}' (binary, five, lossless, mse2, l1three)"
            )))
        }
    })
}
