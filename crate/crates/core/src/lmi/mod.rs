//! Matrix inequalities for the exponential-stability certificate.
//!
//! Everything is affine in one flat decision vector; [`layout`] maps that
//! vector to the structured matrices, [`affine`] holds the sparse maps, and
//! [`theorem`] assembles the certificate. [`lkf`] evaluates the functional
//! and the augmented state on a concrete trajectory.

pub mod affine;
pub mod layout;
pub mod lkf;
pub mod theorem;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use affine::{AffineSymMap, Entry, MapBuilder};
pub use layout::{count_variables, Layout, LmiVariables, Var, VarKind};
pub use lkf::{assemble_chi, evaluate_lkf, StateHistory};
pub use theorem::{
    assemble, build_selectors, CertificateLmis, Formulation, SelectorBank, TheoremParams,
};

use crate::error::{Error, Result};

/// Base of the strictness margin; each constraint uses `base·(1 + ‖F0‖_F)`.
pub const MARGIN_BASE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    /// `F(x) ⪰ margin·I`
    Psd,
    /// `F(x) ⪯ -margin·I`
    Nsd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub map: AffineSymMap,
    pub sense: Sense,
    pub margin: f64,
}

impl Constraint {
    /// Margin from [`MARGIN_BASE`] and the constant term.
    pub fn new(name: impl Into<String>, map: AffineSymMap, sense: Sense) -> Self {
        let f0 = map.constant.iter().map(|e| {
            let w = if e.0 == e.1 { 1.0 } else { 2.0 };
            w * e.2 * e.2
        });
        let norm = f0.sum::<f64>().sqrt();
        Constraint {
            name: name.into(),
            margin: MARGIN_BASE * (1.0 + norm),
            map,
            sense,
        }
    }

    pub fn dim(&self) -> usize {
        self.map.dim
    }

    pub fn sign(&self) -> f64 {
        match self.sense {
            Sense::Psd => 1.0,
            Sense::Nsd => -1.0,
        }
    }

    /// `±F(x) - margin·I`; the constraint holds iff this is PSD.
    pub fn normalized(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.map.evaluate(x) * self.sign();
        for i in 0..m.nrows() {
            m[(i, i)] -= self.margin;
        }
        m
    }
}

/// Where a problem came from, when it came from the certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemMetadata {
    pub n: usize,
    pub h: f64,
    pub mu: f64,
    pub k: f64,
    pub xi: f64,
    pub formulation: Formulation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmiProblem {
    pub num_vars: usize,
    pub constraints: Vec<Constraint>,
    pub metadata: Option<ProblemMetadata>,
}

pub const FORMAT_NAME: &str = "delaycert-lmi";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct WireConstraint {
    name: String,
    dim: usize,
    sense: Sense,
    margin: f64,
    constant: Vec<Entry>,
    entries: Vec<(usize, usize, usize, f64)>,
}

#[derive(Serialize, Deserialize)]
struct WireProblem {
    format: String,
    version: u32,
    num_vars: usize,
    metadata: Option<ProblemMetadata>,
    constraints: Vec<WireConstraint>,
}

impl LmiProblem {
    pub fn validate(&self) -> Result<()> {
        for c in &self.constraints {
            c.map
                .validate(self.num_vars)
                .map_err(|e| Error::Format(format!("{}: {e}", c.name)))?;
            if !(c.margin >= 0.0) {
                return Err(Error::Format(format!("{}: negative margin", c.name)));
            }
        }
        Ok(())
    }

    /// Smallest eigenvalue over all normalized constraints at `x`.
    pub fn worst_eigenvalue(&self, x: &[f64]) -> Result<f64> {
        let mut worst = f64::INFINITY;
        for c in &self.constraints {
            worst = worst.min(crate::linalg::min_eigenvalue(&c.normalized(x))?);
        }
        Ok(worst)
    }

    /// Triplet JSON: constant entries as `[r, c, v]`, coefficients as
    /// `[var, r, c, v]`, upper triangle only.
    pub fn to_json(&self) -> Result<String> {
        let wire = WireProblem {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            num_vars: self.num_vars,
            metadata: self.metadata.clone(),
            constraints: self
                .constraints
                .iter()
                .map(|c| WireConstraint {
                    name: c.name.clone(),
                    dim: c.dim(),
                    sense: c.sense,
                    margin: c.margin,
                    constant: c.map.constant.clone(),
                    entries: c
                        .map
                        .terms
                        .iter()
                        .flat_map(|(j, es)| es.iter().map(move |&(r, cc, v)| (*j, r, cc, v)))
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string(&wire).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: WireProblem =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if wire.format != FORMAT_NAME || wire.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format {} v{}",
                wire.format, wire.version
            )));
        }
        let constraints = wire
            .constraints
            .into_iter()
            .map(|w| {
                let mut terms: Vec<(usize, Vec<Entry>)> = vec![];
                let mut entries = w.entries;
                entries.sort_by_key(|a| (a.0, a.1, a.2));
                for (j, r, c, v) in entries {
                    match terms.last_mut() {
                        Some((last, es)) if *last == j => es.push((r, c, v)),
                        _ => terms.push((j, vec![(r, c, v)])),
                    }
                }
                Constraint {
                    name: w.name,
                    map: AffineSymMap {
                        dim: w.dim,
                        constant: w.constant,
                        terms,
                    },
                    sense: w.sense,
                    margin: w.margin,
                }
            })
            .collect();
        let p = LmiProblem {
            num_vars: wire.num_vars,
            constraints,
            metadata: wire.metadata,
        };
        p.validate()?;
        Ok(p)
    }
}
