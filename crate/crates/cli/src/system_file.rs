//! TOML system definitions.
//!
//! ```toml
//! name = "example1"
//! k0 = [2.0, 3.5]                    # diagonal of K0
//! k1 = [[-1.0, 0.5], [0.5, -1.0]]    # row-major
//! k2 = [[-0.5, 0.5], [0.5, 0.5]]
//! sector = [1.0, 1.0]
//! activation = "scaled-tanh"         # or one entry per neuron
//! input = [0.0, 0.0]                 # optional; the model is shifted to its equilibrium
//! initial_state = [1.0, -0.6]        # optional, used by `simulate`
//!
//! [delay]                            # optional, used by `simulate`
//! kind = "sinusoid"
//! mean = 0.5
//! amplitude = 0.45
//! frequency = 1.6
//! ```

use delaycert::sim::DelaySignal;
use delaycert::system::{Activation, DelayedNNSystem};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::CliError;

const EXAMPLE1: &str = include_str!("../systems/example1.toml");
const EXAMPLE2: &str = include_str!("../systems/example2.toml");

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ActivationSpec {
    All(Activation),
    Each(Vec<Activation>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub name: Option<String>,
    pub k0: Vec<f64>,
    pub k1: Vec<Vec<f64>>,
    pub k2: Vec<Vec<f64>>,
    pub sector: Vec<f64>,
    pub activation: Option<ActivationSpec>,
    pub input: Option<Vec<f64>>,
    pub initial_state: Option<Vec<f64>>,
    pub delay: Option<DelaySignal>,
}

/// A parsed system plus the text it came from.
pub struct LoadedSystem {
    pub source: String,
    pub text: String,
    pub file: SystemFile,
    pub system: DelayedNNSystem,
}

fn matrix(field: &str, rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != n {
        return Err(CliError::Invalid(format!(
            "{field}: expected {n} rows, found {}",
            rows.len()
        )));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(CliError::Invalid(format!(
                "{field}[{i}]: expected {n} entries, found {}",
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn parse(source: &str, text: &str) -> Result<SystemFile, CliError> {
    let de =
        toml::Deserializer::parse(text).map_err(|e| CliError::Invalid(format!("{source}: {e}")))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::Invalid(format!(
            "{source}: field `{}`: {}",
            e.path(),
            e.inner().message()
        ))
    })
}

impl SystemFile {
    pub fn build(&self) -> Result<DelayedNNSystem, CliError> {
        let n = self.k0.len();
        let k1 = matrix("k1", &self.k1, n)?;
        let k2 = matrix("k2", &self.k2, n)?;
        if self.sector.len() != n {
            return Err(CliError::Invalid(format!(
                "sector: expected {n} entries, found {}",
                self.sector.len()
            )));
        }
        let mut sys = DelayedNNSystem::new(self.k0.clone(), k1, k2, self.sector.clone())
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        match &self.activation {
            None => {}
            Some(ActivationSpec::All(a)) => sys.activation = vec![*a; n],
            Some(ActivationSpec::Each(list)) if list.len() == n => sys.activation = list.clone(),
            Some(ActivationSpec::Each(list)) => {
                return Err(CliError::Invalid(format!(
                    "activation: expected {n} entries, found {}",
                    list.len()
                )))
            }
        }
        if let Some(input) = &self.input {
            if input.len() != n {
                return Err(CliError::Invalid(format!(
                    "input: expected {n} entries, found {}",
                    input.len()
                )));
            }
            sys.input = input.clone();
            if input.iter().any(|v| *v != 0.0) {
                sys = sys.shifted().map_err(CliError::from_core)?;
            }
        }
        sys.validate()
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        if let Some(d) = &self.delay {
            d.validate()
                .map_err(|e| CliError::Invalid(format!("delay: {e}")))?;
        }
        if let Some(s) = &self.initial_state {
            if s.len() != n {
                return Err(CliError::Invalid(format!(
                    "initial_state: expected {n} entries, found {}",
                    s.len()
                )));
            }
        }
        Ok(sys)
    }
}

/// Reads `source` as a bundled name (`example1`, `example2`) or a file path.
pub fn load(source: &str) -> Result<LoadedSystem, CliError> {
    let text = match source {
        "example1" => EXAMPLE1.to_string(),
        "example2" => EXAMPLE2.to_string(),
        path => std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read system file {path}: {e}")))?,
    };
    let file = parse(source, &text)?;
    let system = file.build()?;
    Ok(LoadedSystem {
        source: source.to_string(),
        text,
        file,
        system,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_files_match_presets() {
        assert_eq!(
            load("example1").unwrap().system,
            delaycert::system::example1()
        );
        assert_eq!(
            load("example2").unwrap().system,
            delaycert::system::example2()
        );
    }

    #[test]
    fn schema_errors_name_the_field() {
        let text = EXAMPLE1.replace("sector = [1.0, 1.0]", "sector = [1.0, \"x\"]");
        let err = parse("t", &text).unwrap_err().to_string();
        assert!(err.contains("sector"), "{err}");
        let text = EXAMPLE1.replace(
            "k1 = [[-1.0, 0.5], [0.5, -1.0]]",
            "k1 = [[-1.0, 0.5], [0.5]]",
        );
        let err = parse("t", &text).unwrap().build().unwrap_err().to_string();
        assert!(err.contains("k1[1]"), "{err}");
        let err = parse("t", &format!("bogus = 1\n{EXAMPLE1}"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn input_shifts_to_equilibrium() {
        let text = EXAMPLE1.replace("initial_state", "input = [0.3, -0.2]\ninitial_state");
        let sys = parse("t", &text).unwrap().build().unwrap();
        assert!(sys.offset.iter().any(|z| *z != 0.0));
    }
}
