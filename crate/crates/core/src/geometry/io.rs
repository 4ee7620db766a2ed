//! TOML description of a polytope.
//!
//! ```toml
//! # either an explicit H-representation
//! a = [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]
//! b = [1.0, 1.0, 1.0]
//!
//! # or a simplex-family member, optionally scaled
//! c = [1.0, 0.25, 0.5]
//! beta = [1.0, 2.0, 1.0]
//! ```

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::polytope::matrix_from_rows;
use super::{apply_scaling, build_simplex, Polytope, ScalingTransform, SimplexSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolytopeFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
}

impl PolytopeFile {
    pub fn build(&self) -> Result<Polytope> {
        let base = match (&self.a, &self.b, &self.c) {
            (Some(a), Some(b), None) => {
                Polytope::new(matrix_from_rows(a)?, DVector::from_column_slice(b))?
            }
            (None, None, Some(c)) => build_simplex(&SimplexSpec::new(c.clone())?),
            _ => {
                return Err(Error::Parse(
                    "polytope needs either `a` and `b` or `c`".into(),
                ))
            }
        };
        match &self.beta {
            Some(beta) => apply_scaling(&base, &ScalingTransform::new(beta.clone())?),
            None => Ok(base),
        }
    }

    pub fn from_polytope(poly: &Polytope) -> Self {
        Self {
            a: Some(poly.rows()),
            b: Some(poly.b().iter().copied().collect()),
            c: None,
            beta: None,
        }
    }
}

pub fn parse_polytope(text: &str) -> Result<Polytope> {
    let file: PolytopeFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.build()
}

pub fn read_polytope(path: &Path) -> Result<Polytope> {
    parse_polytope(&std::fs::read_to_string(path)?)
}

pub fn write_polytope(poly: &Polytope) -> Result<String> {
    toml::to_string(&PolytopeFile::from_polytope(poly)).map_err(|e| Error::Parse(e.to_string()))
}
