//! JSON input schema for `biaslab analyze`: a coefficient vector plus the
//! covariance structure, given either as explicit blocks or through one of
//! the classical measurement-error shorthands.

use serde::Deserialize;

use biaslab::bias::{CoefficientVector, CovarianceBlocks, ErrorVariances};
use biaslab::linalg::{RectMatrix, SymMatrix};
use biaslab::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeInput {
    /// Coefficients of the error-prone covariates.
    pub beta_x: Vec<f64>,
    /// Coefficients of the error-free covariates; defaults to zeros (they
    /// do not enter the bias formulas).
    #[serde(default)]
    pub beta_z: Option<Vec<f64>>,
    /// Indices within Z (0-based) holding perfectly measured pollutants,
    /// used for the assumption profile.
    #[serde(default)]
    pub pollutant_z_indices: Vec<usize>,
    /// Explicit covariance blocks.
    #[serde(default)]
    pub blocks: Option<BlocksInput>,
    /// Classical error: W = X + E with a full error covariance.
    #[serde(default)]
    pub classical: Option<ClassicalInput>,
    /// Classical error with per-covariate (uncorrelated) error variances.
    #[serde(default)]
    pub classical_uncorrelated: Option<UncorrelatedInput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlocksInput {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalInput {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub error_cov: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncorrelatedInput {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub error_variances: Vec<f64>,
}

fn sym(name: &str, rows: &[Vec<f64>]) -> Result<SymMatrix> {
    SymMatrix::from_rows(rows)
        .map_err(|e| Error::Schema(format!("matrix '{name}': {e}")))
}

fn rect(name: &str, rows: &[Vec<f64>]) -> Result<RectMatrix> {
    RectMatrix::from_rows(rows)
        .map_err(|e| Error::Schema(format!("matrix '{name}': {e}")))
}

impl AnalyzeInput {
    /// Validate and assemble the blocks, the coefficient vector, and (when
    /// the structure declares uncorrelated classical error) the error
    /// variances for the attenuation/additive decomposition.
    pub fn build(&self) -> Result<(CovarianceBlocks, CoefficientVector, Option<ErrorVariances>)> {
        let given =
            [self.blocks.is_some(), self.classical.is_some(), self.classical_uncorrelated.is_some()]
                .iter()
                .filter(|x| **x)
                .count();
        if given != 1 {
            return Err(Error::Schema(
                "exactly one of 'blocks', 'classical', 'classical_uncorrelated' is required"
                    .into(),
            ));
        }
        let (blocks, err) = if let Some(b) = &self.blocks {
            (
                CovarianceBlocks::new(
                    sym("a", &b.a)?,
                    rect("b", &b.b)?,
                    rect("c", &b.c)?,
                    sym("d", &b.d)?,
                    rect("f", &b.f)?,
                    sym("g", &b.g)?,
                )?,
                None,
            )
        } else if let Some(cl) = &self.classical {
            (
                CovarianceBlocks::classical(
                    sym("a", &cl.a)?,
                    rect("b", &cl.b)?,
                    sym("d", &cl.d)?,
                    &sym("error_cov", &cl.error_cov)?,
                )?,
                None,
            )
        } else {
            let cu = self.classical_uncorrelated.as_ref().unwrap();
            let err = ErrorVariances::new(cu.error_variances.clone())?;
            (
                CovarianceBlocks::classical_uncorrelated(
                    sym("a", &cu.a)?,
                    rect("b", &cu.b)?,
                    sym("d", &cu.d)?,
                    &err,
                )?,
                Some(err),
            )
        };
        if self.beta_x.len() != blocks.num_x {
            return Err(Error::Schema(format!(
                "beta_x has length {}, expected d = {}",
                self.beta_x.len(),
                blocks.num_x
            )));
        }
        let beta_z = match &self.beta_z {
            Some(v) => {
                if v.len() != blocks.num_z {
                    return Err(Error::Schema(format!(
                        "beta_z has length {}, expected p = {}",
                        v.len(),
                        blocks.num_z
                    )));
                }
                v.clone()
            }
            None => vec![0.0; blocks.num_z],
        };
        if let Some(&k) = self.pollutant_z_indices.iter().find(|&&k| k >= blocks.num_z) {
            return Err(Error::Schema(format!(
                "pollutant_z_indices entry {k} outside Z (p = {})",
                blocks.num_z
            )));
        }
        let beta = CoefficientVector::new(beta_z, self.beta_x.clone());
        Ok((blocks, beta, err))
    }
}
