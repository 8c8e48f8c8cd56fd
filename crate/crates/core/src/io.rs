//! File formats: problem JSON, samples CSV and metrics JSON.
//!
//! A problem file looks like
//!
//! ```json
//! {
//!   "dim": 2,
//!   "mean": [0.0, 0.0],
//!   "matrix_kind": "covariance",
//!   "matrix": [[1.0, 0.5], [0.5, 1.0]],
//!   "lower": [0.0, "-inf"],
//!   "upper": ["inf", 3.0]
//! }
//! ```
//!
//! with either `lower`/`upper` or `F`/`g` for the constraints and an
//! optional `init` starting point.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{BoxConstraints, Constraints, GaussianSpec, LinearConstraints, MatrixKind, MtnProblem};

/// A bound that may be infinite; written as a number or `"inf"`/`"-inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bound(pub f64);

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            f64::INFINITY => s.serialize_str("inf"),
            f64::NEG_INFINITY => s.serialize_str("-inf"),
            x => s.serialize_f64(x),
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Bound(x)),
            Raw::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(Bound(f64::INFINITY)),
                "-inf" | "-infinity" => Ok(Bound(f64::NEG_INFINITY)),
                _ => Err(serde::de::Error::custom(format!("invalid bound `{t}`"))),
            },
        }
    }
}

/// On-disk problem description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub dim: usize,
    pub mean: Vec<f64>,
    pub matrix_kind: MatrixKind,
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<Bound>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<Bound>>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
}

fn field_error(field: &str, e: Error) -> Error {
    Error::InvalidParameter(format!("field `{field}`: {e}"))
}

fn check_len(field: &str, len: usize, dim: usize) -> Result<()> {
    if len != dim {
        return Err(field_error(field, Error::DimensionMismatch { expected: dim, found: len }));
    }
    Ok(())
}

impl ProblemFile {
    /// Describes `problem` (without its caches).
    pub fn from_problem(problem: &MtnProblem, init: Option<Vec<f64>>) -> Self {
        let gauss = problem.gaussian();
        let mut file = ProblemFile {
            dim: problem.dim(),
            mean: gauss.mean().to_vec(),
            matrix_kind: gauss.kind(),
            matrix: gauss.matrix().to_rows(),
            lower: None,
            upper: None,
            f: None,
            g: None,
            init,
        };
        match problem.constraints() {
            Constraints::Box(b) => {
                file.lower = Some(b.lower().iter().map(|&x| Bound(x)).collect());
                file.upper = Some(b.upper().iter().map(|&x| Bound(x)).collect());
            }
            Constraints::Linear(l) => {
                file.f = Some(l.f().to_rows());
                file.g = Some(l.g().to_vec());
            }
        }
        file
    }

    /// Validates the description and builds the problem and starting point.
    pub fn into_problem(self) -> Result<(MtnProblem, Option<Vec<f64>>)> {
        let d = self.dim;
        if d == 0 {
            return Err(field_error("dim", Error::InvalidParameter("must be at least 1".into())));
        }
        check_len("mean", self.mean.len(), d)?;
        check_len("matrix", self.matrix.len(), d)?;
        let matrix = Matrix::from_rows(&self.matrix).map_err(|e| field_error("matrix", e))?;
        check_len("matrix", matrix.cols(), d)?;
        let gauss = GaussianSpec::new(self.mean, self.matrix_kind, matrix).map_err(|e| field_error("matrix", e))?;

        let constraints = match (self.lower, self.upper, self.f, self.g) {
            (lower, upper, None, None) if lower.is_some() || upper.is_some() => {
                let unwrap = |b: Option<Vec<Bound>>, fill: f64| {
                    b.map_or(vec![fill; d], |v| v.into_iter().map(|x| x.0).collect())
                };
                let lower = unwrap(lower, f64::NEG_INFINITY);
                let upper = unwrap(upper, f64::INFINITY);
                check_len("lower", lower.len(), d)?;
                check_len("upper", upper.len(), d)?;
                Constraints::Box(BoxConstraints::new(lower, upper).map_err(|e| field_error("lower/upper", e))?)
            }
            (None, None, Some(f), Some(g)) => {
                let f = if f.is_empty() {
                    Matrix::zeros(0, d)
                } else {
                    Matrix::from_rows(&f).map_err(|e| field_error("F", e))?
                };
                check_len("F", f.cols(), d)?;
                Constraints::Linear(LinearConstraints::new(f, g).map_err(|e| field_error("F/g", e))?)
            }
            (None, None, None, None) => Constraints::Box(BoxConstraints::unbounded(d)),
            _ => {
                return Err(Error::InvalidParameter(
                    "give either `lower`/`upper` or both `F` and `g`".into(),
                ))
            }
        };
        if let Some(init) = &self.init {
            check_len("init", init.len(), d)?;
        }
        let problem = MtnProblem::new(gauss, constraints)?;
        if let Some(init) = &self.init {
            problem.validate_initial(init).map_err(|e| field_error("init", e))?;
        }
        Ok((problem, self.init))
    }
}

/// Reads and validates a problem file.
pub fn read_problem(path: &Path) -> Result<(MtnProblem, Option<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let file: ProblemFile = serde_json::from_str(&text)?;
    file.into_problem()
}

pub fn write_problem(path: &Path, problem: &MtnProblem, init: Option<Vec<f64>>) -> Result<()> {
    let file = ProblemFile::from_problem(problem, init);
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &file)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes draws as CSV with header `x1,…,xd`, one row per draw.
pub fn write_samples_csv<W: Write>(mut w: W, samples: &Matrix) -> Result<()> {
    let header: Vec<String> = (1..=samples.cols()).map(|i| format!("x{i}")).collect();
    writeln!(w, "{}", header.join(","))?;
    let mut line = String::new();
    for i in 0..samples.rows() {
        line.clear();
        for (j, x) in samples.row(i).iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            // `{}` prints the shortest representation that round-trips.
            line.push_str(&x.to_string());
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_samples_file(path: &Path, samples: &Matrix) -> Result<()> {
    write_samples_csv(BufWriter::new(File::create(path)?), samples)
}

/// Writes any serializable value as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOX_JSON: &str = r#"{
        "dim": 2, "mean": [0.0, 1.0], "matrix_kind": "covariance",
        "matrix": [[1.0, 0.5], [0.5, 2.0]],
        "lower": [0.0, "-inf"], "upper": ["inf", 3.0], "init": [0.5, 0.5]
    }"#;

    #[test]
    fn box_problem_round_trips() {
        let file: ProblemFile = serde_json::from_str(BOX_JSON).unwrap();
        let (p, init) = file.clone().into_problem().unwrap();
        assert_eq!(init, Some(vec![0.5, 0.5]));
        let b = p.constraints().as_box().unwrap();
        assert_eq!(b.lower(), &[0.0, f64::NEG_INFINITY]);
        assert_eq!(b.upper(), &[f64::INFINITY, 3.0]);
        let again = ProblemFile::from_problem(&p, init);
        assert_eq!(again, file);
        let text = serde_json::to_string(&again).unwrap();
        assert!(text.contains("\"-inf\""));
        assert_eq!(serde_json::from_str::<ProblemFile>(&text).unwrap(), file);
    }

    #[test]
    fn linear_problem_parses() {
        let text = r#"{"dim": 2, "mean": [0, 0], "matrix_kind": "precision",
            "matrix": [[1, 0], [0, 1]], "F": [[1, 1]], "g": [1]}"#;
        let (p, init) = serde_json::from_str::<ProblemFile>(text).unwrap().into_problem().unwrap();
        assert!(init.is_none());
        assert!(matches!(p.constraints(), Constraints::Linear(l) if l.count() == 1));
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            (r#""mean": [0.0]"#, "mean"),
            (r#""lower": [0.0, 5.0]"#, "lower"),
            (r#""init": [-1.0, 0.5]"#, "init"),
        ];
        for (patch, field) in cases {
            let key = patch.split(':').next().unwrap();
            let mut v: serde_json::Value = serde_json::from_str(BOX_JSON).unwrap();
            let new: serde_json::Value = serde_json::from_str(&format!("{{{patch}}}")).unwrap();
            v[key.trim_matches('"')] = new[key.trim_matches('"')].clone();
            let file: ProblemFile = serde_json::from_value(v).unwrap();
            let err = file.into_problem().unwrap_err().to_string();
            assert!(err.contains(field), "{err}");
        }
    }

    #[test]
    fn mixed_constraint_forms_rejected() {
        let text = r#"{"dim": 1, "mean": [0], "matrix_kind": "covariance", "matrix": [[1]],
            "lower": [0], "F": [[1]], "g": [0]}"#;
        let file: ProblemFile = serde_json::from_str(text).unwrap();
        assert!(file.into_problem().is_err());
    }

    #[test]
    fn samples_csv_layout() {
        let m = Matrix::from_rows(&[[1.0, -0.5], [0.25, 3.0]]).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &m).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x1,x2\n1,-0.5\n0.25,3\n");
    }
}
