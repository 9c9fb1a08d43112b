//! File formats.
//!
//! * dataset CSV: header `y,x1,…,xd`
//! * subsample CSV: header `y,pi,neg_rate,x1,…,xd`; `neg_rate` may be
//!   omitted when all negatives share one rate
//! * pilot JSON: `{alpha, beta[], omega, m_inv[][]}`
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a written file reproduces the in-memory values bit for bit.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Theta};
use crate::sampling::{PilotBundle, Subsample};

/// A parsed CSV table: features and labels, plus the probability columns
/// when the file has them.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub data: Dataset,
    pub pi: Option<Vec<f64>>,
    pub neg_rate: Option<Vec<f64>>,
}

impl Table {
    pub fn into_subsample(self) -> Result<Subsample> {
        let pi = self
            .pi
            .ok_or_else(|| Error::Config("input has no `pi` column".into()))?;
        match self.neg_rate {
            Some(q) => Subsample::new(self.data, pi, q),
            None => Subsample::from_inclusion(self.data, pi),
        }
    }
}

pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.first() != Some(&"y") {
        return Err(Error::Parse {
            line: 1,
            msg: "first column must be `y`".into(),
        });
    }
    let has_pi = cols.get(1) == Some(&"pi");
    let has_rate = has_pi && cols.get(2) == Some(&"neg_rate");
    let first_x = 1 + has_pi as usize + has_rate as usize;
    let d = cols.len() - first_x;
    if d == 0 {
        return Err(Error::Parse {
            line: 1,
            msg: "no feature columns".into(),
        });
    }
    for (j, name) in cols[first_x..].iter().enumerate() {
        if *name != format!("x{}", j + 1) {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected column `x{}`, found `{name}`", j + 1),
            });
        }
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut pi = Vec::new();
    let mut rate = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |k: usize| -> Result<f64> {
            let raw = rec.get(k).ok_or_else(|| Error::Parse {
                line,
                msg: format!("missing column {}", k + 1),
            })?;
            raw.parse::<f64>().map_err(|e| Error::Parse {
                line,
                msg: format!("column `{}`: {e} (`{raw}`)", cols[k]),
            })
        };
        let label = match rec.get(0) {
            Some("0") => 0u8,
            Some("1") => 1u8,
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("label must be 0 or 1, found {:?}", other.unwrap_or("")),
                })
            }
        };
        y.push(label);
        if has_pi {
            pi.push(field(1)?);
        }
        if has_rate {
            rate.push(field(2)?);
        }
        for k in first_x..cols.len() {
            let v = field(k)?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("non-finite value in `{}`", cols[k]),
                });
            }
            x.push(v);
        }
    }
    let data = Dataset::new_unchecked_classes(x, y, d)?;
    Ok(Table {
        data,
        pi: has_pi.then_some(pi),
        neg_rate: has_rate.then_some(rate),
    })
}

pub fn read_table_path(path: &Path) -> Result<Table> {
    read_table(File::open(path)?)
}

fn header(d: usize, with_pi: bool) -> String {
    let mut h = String::from("y");
    if with_pi {
        h.push_str(",pi,neg_rate");
    }
    for j in 1..=d {
        h.push_str(&format!(",x{j}"));
    }
    h
}

fn write_rows<W: Write>(mut w: W, data: &Dataset, pi: Option<(&[f64], &[f64])>) -> Result<()> {
    writeln!(w, "{}", header(data.dim(), pi.is_some()))?;
    let mut line = String::new();
    for i in 0..data.len() {
        use std::fmt::Write as _;
        line.clear();
        let _ = write!(line, "{}", data.label(i));
        if let Some((pi, q)) = pi {
            let _ = write!(line, ",{},{}", pi[i], q[i]);
        }
        for v in data.row(i) {
            let _ = write!(line, ",{v}");
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset<W: Write>(w: W, data: &Dataset) -> Result<()> {
    write_rows(w, data, None)
}

pub fn write_subsample<W: Write>(w: W, sub: &Subsample) -> Result<()> {
    write_rows(w, &sub.data, Some((&sub.pi, &sub.neg_rate)))
}

pub fn write_dataset_path(path: &Path, data: &Dataset) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), data)
}

pub fn write_subsample_path(path: &Path, sub: &Subsample) -> Result<()> {
    write_subsample(BufWriter::new(File::create(path)?), sub)
}

/// JSON form of a [`PilotBundle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotFile {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub omega: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_inv: Option<Vec<Vec<f64>>>,
}

impl From<&PilotBundle> for PilotFile {
    fn from(b: &PilotBundle) -> Self {
        PilotFile {
            alpha: b.theta_tilde.alpha,
            beta: b.theta_tilde.beta.clone(),
            omega: b.omega_tilde,
            m_inv: b.m_tilde_inv.as_ref().map(|m| {
                (0..m.nrows())
                    .map(|r| m.row(r).iter().copied().collect())
                    .collect()
            }),
        }
    }
}

impl TryFrom<PilotFile> for PilotBundle {
    type Error = Error;

    fn try_from(f: PilotFile) -> Result<Self> {
        let theta = Theta::new(f.alpha, f.beta)?;
        let m_tilde_inv = match f.m_inv {
            None => None,
            Some(rows) => {
                let k = rows.len();
                if rows.iter().any(|r| r.len() != k) {
                    return Err(Error::Config("m_inv must be square".into()));
                }
                Some(DMatrix::from_row_iterator(k, k, rows.into_iter().flatten()))
            }
        };
        let bundle = PilotBundle {
            theta_tilde: theta,
            omega_tilde: f.omega,
            m_tilde_inv,
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

pub fn write_pilot<W: Write>(w: W, bundle: &PilotBundle) -> Result<()> {
    serde_json::to_writer_pretty(w, &PilotFile::from(bundle))?;
    Ok(())
}

pub fn read_pilot<R: Read>(r: R) -> Result<PilotBundle> {
    let file: PilotFile = serde_json::from_reader(r)?;
    file.try_into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_error_reports_line() {
        let text = "y,x1,x2\n1,0.5,1\n0,abc,2\n";
        match read_table(text.as_bytes()) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("x1"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_label_and_header() {
        assert!(matches!(
            read_table("y,x1\n2,0.5\n".as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            read_table("label,x1\n1,0.5\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            read_table("y,x2\n1,0.5\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn pi_column_detected() {
        let t = read_table("y,pi,x1\n1,1,0.5\n0,0.25,-3\n".as_bytes()).unwrap();
        assert_eq!(t.pi, Some(vec![1.0, 0.25]));
        assert_eq!(t.data.dim(), 1);
        let s = t.into_subsample().unwrap();
        assert_eq!(s.negatives(), 1);
        assert_eq!(s.neg_rate, vec![0.25, 0.25]);
        let t = read_table("y,pi,neg_rate,x1\n1,1,0.1,0.5\n0,0.25,0.25,-3\n".as_bytes()).unwrap();
        assert_eq!(t.data.dim(), 1);
        assert_eq!(t.into_subsample().unwrap().neg_rate, vec![0.1, 0.25]);
        let t = read_table("y,pi,x1\n1,1,0.5\n0,0.25,-3\n0,0.5,1\n".as_bytes()).unwrap();
        assert!(t.into_subsample().is_err());
        let t = read_table("y,x1\n1,0.5\n".as_bytes()).unwrap();
        assert!(t.pi.is_none());
        assert!(t.into_subsample().is_err());
    }

    #[test]
    fn pilot_json_round_trip() {
        let bundle = PilotBundle {
            theta_tilde: Theta::new(-7.1, vec![0.9, 1.2]).unwrap(),
            omega_tilde: 0.0123,
            m_tilde_inv: Some(DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.2, 0.1, 3.0, 0.3, 0.2, 0.3, 4.0])),
        };
        let mut buf = Vec::new();
        write_pilot(&mut buf, &bundle).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        for key in ["alpha", "beta", "omega", "m_inv"] {
            assert!(text.contains(key));
        }
        assert_eq!(read_pilot(buf.as_slice()).unwrap(), bundle);
    }

    #[test]
    fn pilot_json_rejects_unknown_keys() {
        let text = r#"{"alpha": 0, "beta": [1], "omega": 1, "extra": 2}"#;
        assert!(read_pilot(text.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn subsample_csv_round_trips_exactly(
            rows in proptest::collection::vec(
                (any::<bool>(), 1e-9f64..1.0, proptest::collection::vec(-1e6f64..1e6, 3)),
                1..40,
            )
        ) {
            let mut x = Vec::new();
            let mut y = Vec::new();
            let mut pi = Vec::new();
            let mut q = Vec::new();
            for (pos, p, feats) in &rows {
                y.push(*pos as u8);
                pi.push(if *pos { 1.0 } else { *p });
                q.push(*p);
                x.extend_from_slice(feats);
            }
            let data = Dataset::new_unchecked_classes(x, y, 3).unwrap();
            let sub = Subsample::new(data, pi, q).unwrap();
            let mut buf = Vec::new();
            write_subsample(&mut buf, &sub).unwrap();
            let back = read_table(buf.as_slice()).unwrap().into_subsample().unwrap();
            prop_assert_eq!(back, sub);
        }
    }
}
