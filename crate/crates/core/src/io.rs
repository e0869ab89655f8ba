//! Matrix documents, reports and summaries on disk.
//!
//! A matrix document is `{"dim": n, "data": [[re, im], ...]}` in row-major
//! order. Every float written by this module uses 17 significant digits, so
//! `parse(write(m))` is bit-exact and repeated runs produce identical bytes.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::ser::Serialize;
use serde::Deserialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter, Serializer};

use crate::error::{Error, MatrixFileError, Result};
use crate::matrix::{ComplexMatrix, C64};
use crate::suites::{SuiteRun, SuiteSummary, TrialReport};

/// Delegates layout to `F` and prints finite floats as `{:.16e}`, except
/// `+0.0` which prints as `0`. Non-finite floats never reach the formatter;
/// serde_json writes `null` for them.
pub struct FixedFloat<F>(pub F);

macro_rules! delegate {
    ($($name:ident),*) => {$(
        fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.$name(w)
        }
    )*};
}

macro_rules! delegate_first {
    ($($name:ident),*) => {$(
        fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
            self.0.$name(w, first)
        }
    )*};
}

impl<F: Formatter> Formatter for FixedFloat<F> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.to_bits() == 0 {
            w.write_all(b"0")
        } else {
            write!(w, "{value:.16e}")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    delegate!(begin_array, end_array, end_array_value, begin_object, end_object, end_object_key, begin_object_value, end_object_value);
    delegate_first!(begin_array_value, begin_object_key);
}

/// JSON with fixed float formatting; `pretty` adds two-space indentation.
pub fn to_json<T: Serialize + ?Sized>(value: &T, pretty: bool) -> Result<String> {
    let mut buf = Vec::new();
    if pretty {
        let mut ser = Serializer::with_formatter(&mut buf, FixedFloat(PrettyFormatter::new()));
        value.serialize(&mut ser)?;
    } else {
        let mut ser = Serializer::with_formatter(&mut buf, FixedFloat(CompactFormatter));
        value.serialize(&mut ser)?;
    }
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

fn io_err(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = to_json(value, true)?;
    text.push('\n');
    write_text(path, &text)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Entry {
    Number(f64),
    Text(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixDoc {
    dim: usize,
    data: Vec<(Entry, Entry)>,
}

#[derive(serde::Serialize)]
struct MatrixOut {
    dim: usize,
    data: Vec<[f64; 2]>,
}

/// Parses a matrix document; `path` only labels errors.
pub fn parse_matrix_str(text: &str, path: &Path) -> Result<ComplexMatrix> {
    let malformed = |line, column, message: String| MatrixFileError::Malformed {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let doc: MatrixDoc = serde_json::from_str(text).map_err(|e| {
        let full = e.to_string();
        let suffix = format!(" at line {} column {}", e.line(), e.column());
        let message = full.strip_suffix(&suffix).unwrap_or(&full).to_string();
        malformed(e.line(), e.column(), message)
    })?;
    if doc.dim == 0 {
        return Err(malformed(0, 0, "dim must be positive".into()).into());
    }
    let expected = doc.dim.checked_mul(doc.dim).ok_or_else(|| malformed(0, 0, "dim too large".into()))?;
    if doc.data.len() != expected {
        return Err(MatrixFileError::LengthMismatch {
            path: path.to_path_buf(),
            dim: doc.dim,
            len: doc.data.len(),
            expected,
        }
        .into());
    }
    let mut entries = Vec::with_capacity(expected);
    for (index, (re, im)) in doc.data.into_iter().enumerate() {
        let part = |e: Entry| -> Result<f64> {
            match e {
                Entry::Number(v) if v.is_finite() => Ok(v),
                Entry::Number(_) => Err(MatrixFileError::NonFinite {
                    path: path.to_path_buf(),
                    index,
                }
                .into()),
                Entry::Text(s) => {
                    let lowered = s.trim().to_ascii_lowercase();
                    let lowered = lowered.trim_start_matches(['+', '-']);
                    if matches!(lowered, "nan" | "inf" | "infinity") {
                        Err(MatrixFileError::NonFinite {
                            path: path.to_path_buf(),
                            index,
                        }
                        .into())
                    } else {
                        Err(malformed(0, 0, format!("entry {index} is the string {s:?}, expected a number")).into())
                    }
                }
            }
        };
        let re = part(re)?;
        let im = part(im)?;
        entries.push(C64::new(re, im));
    }
    ComplexMatrix::from_row_major(doc.dim, &entries)
}

pub fn parse_matrix(path: &Path) -> Result<ComplexMatrix> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_matrix_str(&text, path)
}

pub fn matrix_to_json(m: &ComplexMatrix) -> Result<String> {
    let out = MatrixOut {
        dim: m.dim(),
        data: m.row_major().into_iter().map(|z| [z.re, z.im]).collect(),
    };
    to_json(&out, false)
}

pub fn write_matrix(m: &ComplexMatrix, path: &Path) -> Result<()> {
    let mut text = matrix_to_json(m)?;
    text.push('\n');
    write_text(path, &text)
}

pub const SUMMARY_HEADER: &str = "suite,trials,pass,fail,inconclusive,seconds";

pub fn summary_csv(summaries: &[SuiteSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{:.3}\n",
            s.suite, s.trials, s.pass, s.fail, s.inconclusive, s.seconds
        ));
    }
    out
}

/// Writes `report.json` (all trial reports, in suite then index order) and
/// `summary.csv` into `dir`; returns the two paths.
pub fn write_verify_outputs(dir: &Path, runs: &[SuiteRun]) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let reports: Vec<&TrialReport> = runs.iter().flat_map(|r| r.reports.iter()).collect();
    let report_path = dir.join("report.json");
    write_json(&report_path, &reports)?;
    let summaries: Vec<SuiteSummary> = runs.iter().map(|r| r.summary.clone()).collect();
    let csv_path = dir.join("summary.csv");
    write_text(&csv_path, &summary_csv(&summaries))?;
    Ok((report_path, csv_path))
}

/// Flushes `text` plus a newline to stdout.
pub fn print_line(text: &str) -> Result<()> {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    writeln!(lock, "{text}")
        .and_then(|_| lock.flush())
        .map_err(|e| io_err(Path::new("<stdout>"), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("m.json")
    }

    #[test]
    fn parses_nilpotent() {
        let m = parse_matrix_str(r#"{"dim":2,"data":[[0,0],[1,0],[0,0],[0,0]]}"#, p()).unwrap();
        let n = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        assert!(m.bit_eq(&n));
    }

    #[test]
    fn length_mismatch() {
        let e = parse_matrix_str(r#"{"dim":2,"data":[[0,0],[1,0],[0,0]]}"#, p()).unwrap_err();
        match e {
            Error::MatrixFile(m) => assert_eq!(m.code(), "E_LENGTH"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn non_finite_and_malformed_are_distinct() {
        let nf = parse_matrix_str(r#"{"dim":1,"data":[["NaN",0]]}"#, p()).unwrap_err();
        let inf = parse_matrix_str(r#"{"dim":1,"data":[[0,"-Infinity"]]}"#, p()).unwrap_err();
        let bad = parse_matrix_str(r#"{"dim":1,"data":[[0,0]"#, p()).unwrap_err();
        let word = parse_matrix_str(r#"{"dim":1,"data":[["zero",0]]}"#, p()).unwrap_err();
        let code = |e: Error| match e {
            Error::MatrixFile(m) => m.code(),
            other => panic!("{other}"),
        };
        assert_eq!(code(nf), "E_NONFINITE");
        assert_eq!(code(inf), "E_NONFINITE");
        assert_eq!(code(bad), "E_MALFORMED");
        assert_eq!(code(word), "E_MALFORMED");
    }

    #[test]
    fn malformed_reports_position() {
        let e = parse_matrix_str("{\n  \"dim\": 2,\n  \"data\": [[0, 0] [1, 0]]\n}", p()).unwrap_err();
        match e {
            Error::MatrixFile(MatrixFileError::Malformed { line, column, .. }) => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let vals = [0.1, -0.0, 1e-310, 123456789.12345679, -2.5e300, std::f64::consts::PI];
        let entries: Vec<C64> = (0..9).map(|k| C64::new(vals[k % 6], vals[(k + 2) % 6] / 3.0)).collect();
        let m = ComplexMatrix::from_row_major(3, &entries).unwrap();
        let text = matrix_to_json(&m).unwrap();
        assert!(parse_matrix_str(&text, p()).unwrap().bit_eq(&m));
    }

    #[test]
    fn fixed_float_format() {
        assert_eq!(to_json(&[1.0, 0.5], false).unwrap(), "[1.0000000000000000e0,5.0000000000000000e-1]");
        assert_eq!(to_json(&[0.0, -0.0], false).unwrap(), "[0,-0.0000000000000000e0]");
        assert_eq!(to_json(&f64::NAN, false).unwrap(), "null");
        let pretty = to_json(&serde_json::json!({"a": [1]}), true).unwrap();
        assert!(pretty.contains('\n'));
    }
}
