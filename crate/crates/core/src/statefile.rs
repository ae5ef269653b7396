//! JSON state files: `{"rho": [[[re, im] x4] x4]}`, row-major in the basis
//! |00>, |01>, |10>, |11>.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::{c, Mat4};
use crate::qstate::{validate_state, TwoQubitState};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    rho: [[[f64; 2]; 4]; 4],
}

/// Parses the JSON text into a raw matrix without validating physicality.
pub fn parse_matrix(text: &str) -> Result<Mat4> {
    let file: StateFile = serde_json::from_str(text).map_err(|e| Error::StateFile(e.to_string()))?;
    Ok(Mat4::from_fn(|i, j| c(file.rho[i][j][0], file.rho[i][j][1])))
}

pub fn parse_state(text: &str, tol: f64) -> Result<TwoQubitState> {
    validate_state(&parse_matrix(text)?, tol)
}

/// Serializes with 17 significant digits per component.
pub fn to_json(s: &TwoQubitState) -> String {
    let rho = s.rho();
    let mut out = String::from("{\"rho\": [\n");
    for i in 0..4 {
        out.push_str("  [");
        for j in 0..4 {
            let z = rho[(i, j)];
            let _ = write!(out, "[{:.16e}, {:.16e}]", z.re, z.im);
            if j < 3 {
                out.push_str(", ");
            }
        }
        out.push(']');
        if i < 3 {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("]}\n");
    out
}

pub fn read_state(path: &Path, tol: f64) -> Result<TwoQubitState> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::StateFile(format!("{}: {e}", path.display())))?;
    parse_state(&text, tol)
}

pub fn write_state(path: &Path, s: &TwoQubitState) -> Result<()> {
    std::fs::write(path, to_json(s)).map_err(|e| Error::StateFile(format!("{}: {e}", path.display())))
}
