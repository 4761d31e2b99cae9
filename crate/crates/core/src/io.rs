//! Scenario files.
//!
//! ```json
//! {
//!   "algebra": "su2_spin_half",
//!   "h_f": {"re": [[0.5, 0], [0, -0.5]]},
//!   "rho_i": {"re": [[0.9, 0], [0, 0.1]]},
//!   "omega": 1.0
//! }
//! ```
//!
//! `algebra` is a standard kind (`"su2_spin_half"`, `{"full_traceless": 3}`,
//! `{"full_hermitian": 2}`, `{"heisenberg_total_spin": 4}`) or
//! `{"basis": [op, ...], "label": "..."}`. The final Hamiltonian is `h_f`
//! (projected onto the algebra) or `h_f_coords` (coefficients in the
//! orthonormalized basis). The state is a density matrix `rho_i` or an
//! already projected `rho_i_c`.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::algebra::{build_standard, orthonormalize, ControlAlgebra, Scenario, StandardAlgebra};
use crate::error::{Error, Result};
use crate::operator::{check_density_matrix, HermitianOperator};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlgebraSpec {
    Standard(StandardAlgebra),
    Basis {
        basis: Vec<HermitianOperator>,
        #[serde(default)]
        label: Option<String>,
    },
}

impl AlgebraSpec {
    pub fn build(&self) -> Result<ControlAlgebra> {
        match self {
            AlgebraSpec::Standard(kind) => build_standard(*kind),
            AlgebraSpec::Basis { basis, label } => {
                let mut a = orthonormalize(basis)?;
                if let Some(l) = label {
                    a = ControlAlgebra::from_basis(a.basis().to_vec(), l.clone())?;
                }
                let report = a.closure();
                if !report.closed {
                    return Err(Error::InvalidInput(format!(
                        "algebra: basis is not closed under commutators (residual {:.3e})",
                        report.worst_residual
                    )));
                }
                Ok(a)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub algebra: AlgebraSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_f: Option<HermitianOperator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_f_coords: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_i: Option<HermitianOperator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_i_c: Option<HermitianOperator>,
    pub omega: f64,
}

const FIELDS: [&str; 6] = ["algebra", "h_f", "h_f_coords", "rho_i", "rho_i_c", "omega"];

fn field<T: DeserializeOwned>(obj: &Map<String, Value>, name: &str) -> Result<Option<T>> {
    obj.get(name)
        .map(|v| T::deserialize(v).map_err(|e| Error::InvalidInput(format!("field `{name}`: {e}"))))
        .transpose()
}

fn required<T: DeserializeOwned>(obj: &Map<String, Value>, name: &str) -> Result<T> {
    field(obj, name)?.ok_or_else(|| Error::InvalidInput(format!("missing field `{name}`")))
}

/// Parses a JSON object, reporting unknown, missing or malformed fields
/// by name.
pub fn parse_object(text: &str) -> Result<Map<String, Value>> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(obj)) => Ok(obj),
        Ok(_) => Err(Error::InvalidInput("expected a JSON object".into())),
        Err(e) => Err(Error::InvalidInput(format!("malformed JSON: {e}"))),
    }
}

fn reject_unknown(obj: &Map<String, Value>, allowed: &[&str]) -> Result<()> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::InvalidInput(format!("unknown field `{k}`"))),
        None => Ok(()),
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let obj = parse_object(text)?;
        reject_unknown(&obj, &FIELDS)?;
        Ok(Self {
            algebra: required(&obj, "algebra")?,
            h_f: field(&obj, "h_f")?,
            h_f_coords: field(&obj, "h_f_coords")?,
            rho_i: field(&obj, "rho_i")?,
            rho_i_c: field(&obj, "rho_i_c")?,
            omega: required(&obj, "omega")?,
        })
    }

    pub fn build(&self) -> Result<Scenario> {
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidInput(format!("field `omega`: must be positive, got {}", self.omega)));
        }
        let algebra = self.algebra.build()?;
        let h = match (&self.h_f, &self.h_f_coords) {
            (Some(h), None) => h.clone(),
            (None, Some(c)) => {
                if c.len() != algebra.len() {
                    return Err(Error::InvalidInput(format!(
                        "field `h_f_coords`: expected {} coefficients, got {}",
                        algebra.len(),
                        c.len()
                    )));
                }
                algebra.from_coords(c)
            }
            _ => return Err(Error::InvalidInput("exactly one of `h_f` and `h_f_coords` is required".into())),
        };
        let labelled = |e: Error, name: &str| match e {
            Error::InvalidInput(m) => Error::InvalidInput(format!("field `{name}`: {m}")),
            other => Error::InvalidInput(format!("field `{name}`: {other}")),
        };
        match (&self.rho_i, &self.rho_i_c) {
            (Some(rho), None) => {
                check_density_matrix(rho).map_err(|e| labelled(e, "rho_i"))?;
                Scenario::from_density(algebra, &h, rho, self.omega)
            }
            (None, Some(rho_c)) => {
                let h_c = algebra.project(&h).map_err(|e| labelled(e, "h_f"))?;
                Scenario::new(algebra, h_c, rho_c.clone(), self.omega).map_err(|e| labelled(e, "rho_i_c"))
            }
            _ => Err(Error::InvalidInput("exactly one of `rho_i` and `rho_i_c` is required".into())),
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    ScenarioFile::parse(text)?.build()
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&read_to_string(path)?)
}

/// Deserializes a whole document with `deny_unknown_fields` semantics,
/// prefixing errors with the offending location.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("malformed input: {e}")))
}
