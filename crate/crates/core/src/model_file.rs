//! JSON model files.
//!
//! Discrete:
//! ```json
//! {"source": {"labels": ["a", "b"], "pmf": [0.7, 0.3]},
//!  "reproduction": {"labels": ["a", "b"]},
//!  "distortion": [[0, 1], [1, 0]]}
//! ```
//! Continuous:
//! ```json
//! {"interval": [-2, 2], "density": {"name": "uniform"},
//!  "reproduction": [-1, 1], "distortion_family": "squared_error", "grid_size": 400}
//! ```
//! Distortions are normalized on read; the offsets are kept on the model.

use std::path::Path;

use serde::Deserialize;

use crate::builtin::AnyModel;
use crate::error::{Error, Result};
use crate::model::{ContinuousModel, Density, DiscreteModel, DistortionFamily};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceSpec {
    labels: Option<Vec<String>>,
    pmf: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReproSpec {
    labels: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscreteFile {
    source: SourceSpec,
    reproduction: ReproSpec,
    distortion: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContinuousFile {
    interval: [f64; 2],
    density: Density,
    reproduction: Vec<f64>,
    distortion_family: DistortionFamily,
    grid_size: usize,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ModelFile {
    Discrete(DiscreteFile),
    Continuous(ContinuousFile),
}

/// Parse a model from JSON text.
pub fn parse_model(text: &str) -> Result<AnyModel> {
    let file: ModelFile = serde_json::from_str(text)
        .map_err(|e| Error::InvalidModel(format!("unrecognized model file: {e}")))?;
    match file {
        ModelFile::Discrete(f) => {
            let labels = f
                .source
                .labels
                .unwrap_or_else(|| (0..f.source.pmf.len()).map(|i| i.to_string()).collect());
            Ok(AnyModel::Discrete(DiscreteModel::new(
                labels,
                f.source.pmf,
                f.reproduction.labels,
                f.distortion,
            )?))
        }
        ModelFile::Continuous(f) => Ok(AnyModel::Continuous(ContinuousModel::new(
            f.interval,
            f.density,
            f.reproduction,
            f.distortion_family,
            f.grid_size,
        )?)),
    }
}

pub fn read_model(path: &Path) -> Result<AnyModel> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_file_is_normalized() {
        let m = parse_model(
            r#"{"source": {"labels": ["x", "y"], "pmf": [0.5, 0.5]},
                "reproduction": {"labels": ["u", "v"]},
                "distortion": [[1, 2], [3, 3]]}"#,
        )
        .unwrap();
        let AnyModel::Discrete(m) = m else { panic!() };
        assert_eq!(m.matrix(), vec![vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert_eq!(m.offsets(), &[1.0, 3.0]);
    }

    #[test]
    fn continuous_file() {
        let m = parse_model(
            r#"{"interval": [0, 6], "density": {"name": "truncated_normal", "mean": 3, "std": 1},
                "reproduction": [1, 3, 5], "distortion_family": "absolute_error", "grid_size": 60}"#,
        )
        .unwrap();
        let AnyModel::Continuous(m) = m else { panic!() };
        assert_eq!(m.k(), 3);
        assert_eq!(m.family(), DistortionFamily::AbsoluteError);
    }

    #[test]
    fn invalid_files() {
        assert!(matches!(parse_model("{}"), Err(Error::InvalidModel(_))));
        assert!(matches!(
            parse_model(
                r#"{"source": {"pmf": [0.5, 0.6]}, "reproduction": {"labels": ["a"]},
                    "distortion": [[0], [0]]}"#
            ),
            Err(Error::InvalidModel(_))
        ));
    }
}
