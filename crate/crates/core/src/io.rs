//! On-disk formats: JSON instance schemas, deterministic float formatting
//! and CSV helpers.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagrangian::{Component, ObjectiveFamily};
use crate::linalg::Mat;
use crate::manifolds::ManifoldSpec;

/// Serde adapter storing a matrix as a list of rows.
pub mod rowmajor {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::linalg::{self, Mat};

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        linalg::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        if let Some(first) = rows.first() {
            if rows.iter().any(|r| r.len() != first.len()) {
                return Err(D::Error::custom("matrix rows have unequal lengths"));
            }
        }
        Ok(linalg::from_rows(&rows))
    }
}

/// A problem instance: manifold, objective components and constraint values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub manifold: ManifoldSpec,
    pub components: Vec<Component>,
    #[serde(default)]
    pub constraint_rhs: Vec<f64>,
}

impl Instance {
    pub fn family(&self) -> Result<ObjectiveFamily> {
        ObjectiveFamily::new(self.manifold.clone(), self.components.clone())
    }
}

/// Unbalanced Procrustes data `min ‖UᵀX − Wᵀ‖²` over Stiefel(n, m).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct UppJson {
    #[serde(with = "rowmajor")]
    pub U: Mat,
    #[serde(with = "rowmajor")]
    pub W: Mat,
}

/// JSON formatter writing every finite float with 17 significant digits so
/// output is byte-stable across runs.
struct FixedFloats;

impl serde_json::ser::Formatter for FixedFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        write!(writer, "{:.16e}", value as f64)
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloats);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

pub fn to_json_value<T: Serialize>(value: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(value)?)
}

/// Parses JSON text; schema errors carry the line and column.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        Error::InvalidArgument(format!("{origin}: line {} column {}: {e}", e.line(), e.column()))
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    parse_json(&text, &path.display().to_string())
}

/// Writes rows of floats as CSV with a header.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| format!("{x:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headerless CSV of floats (rows = points).
pub fn read_point_cloud(path: &Path) -> Result<Mat> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::InvalidArgument(format!("{}: ragged rows", path.display())));
            }
        }
        rows.push(row);
    }
    Ok(crate::linalg::from_rows(&rows))
}
