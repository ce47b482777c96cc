//! Comma-separated dataset files.
//!
//! ```text
//! # scale_min = -1.7e1, scale_max = 1.9e1
//! y_km1,y_km2,y
//! 4.1230000000000000e-1,3.9870000000000000e-1,4.2010000000000000e-1
//! ```
//!
//! Values are written with 17 significant digits, which round-trips every `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Pair, Scale};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub pairs: Vec<Pair>,
    pub scale: Option<Scale>,
}

impl DatasetFile {
    pub fn lags(&self) -> Option<usize> {
        self.pairs.first().map(|p| p.x.len())
    }
}

pub fn write_dataset<W: Write>(mut out: W, pairs: &[Pair], scale: Option<Scale>) -> Result<()> {
    let lags = pairs.first().map_or(0, |p| p.x.len());
    if let Some(s) = scale {
        writeln!(out, "# scale_min = {:.16e}, scale_max = {:.16e}", s.min, s.max)?;
    }
    let mut header: Vec<String> = (1..=lags).map(|l| format!("y_km{l}")).collect();
    header.push("y".into());
    writeln!(out, "{}", header.join(","))?;
    for p in pairs {
        if p.x.len() != lags {
            return Err(Error::DimensionMismatch {
                expected: lags,
                got: p.x.len(),
            });
        }
        for v in &p.x {
            write!(out, "{v:.16e},")?;
        }
        writeln!(out, "{:.16e}", p.y)?;
    }
    Ok(())
}

pub fn write_dataset_file(path: &Path, pairs: &[Pair], scale: Option<Scale>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(&mut w, pairs, scale)?;
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(input: R) -> Result<DatasetFile> {
    let mut pairs = Vec::new();
    let mut scale = None;
    let mut columns: Option<usize> = None;
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if comment.contains("scale_min") {
                scale = Some(parse_scale(comment, lineno)?);
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let values = match (parsed, columns) {
            (Ok(v), _) => v,
            (Err(_), None) => {
                // header line
                columns = Some(fields.len());
                continue;
            }
            (Err(e), Some(_)) => {
                return Err(Error::Parse {
                    line: lineno,
                    message: e.to_string(),
                })
            }
        };
        let expected = *columns.get_or_insert(values.len());
        if values.len() != expected || expected < 1 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {expected} columns, found {}", values.len()),
            });
        }
        let (x, y) = values.split_at(expected - 1);
        pairs.push(Pair::new(x.to_vec(), y[0]));
    }
    Ok(DatasetFile { pairs, scale })
}

fn parse_scale(comment: &str, line: usize) -> Result<Scale> {
    let mut min = None;
    let mut max = None;
    for part in comment.split(',') {
        let mut kv = part.splitn(2, '=');
        let key = kv.next().unwrap_or("").trim();
        let value = kv.next().map(str::trim);
        let parsed = value.and_then(|v| v.parse::<f64>().ok());
        match key {
            "scale_min" => min = parsed,
            "scale_max" => max = parsed,
            _ => {}
        }
    }
    match (min, max) {
        (Some(min), Some(max)) if max > min => Ok(Scale { min, max }),
        _ => Err(Error::Parse {
            line,
            message: "malformed scale comment".into(),
        }),
    }
}

pub fn read_dataset_file(path: &Path) -> Result<DatasetFile> {
    read_dataset(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout() {
        let pairs = vec![Pair::new(vec![0.5, 0.25], 1.0)];
        let mut buf = Vec::new();
        write_dataset(&mut buf, &pairs, Some(Scale { min: -2.0, max: 3.0 })).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# scale_min = -2.0000000000000000e0, scale_max = 3.0000000000000000e0");
        assert_eq!(lines[1], "y_km1,y_km2,y");
        assert_eq!(lines[2], "5.0000000000000000e-1,2.5000000000000000e-1,1.0000000000000000e0");
    }

    #[test]
    fn reads_without_scale_or_header() {
        let f = read_dataset("1,2,3\n4,5,6\n".as_bytes()).unwrap();
        assert_eq!(f.scale, None);
        assert_eq!(f.pairs[1], Pair::new(vec![4.0, 5.0], 6.0));
        assert!(read_dataset("a,b\n1,2\n1,2,3\n".as_bytes()).is_err());
        assert!(read_dataset("a,b\n1,2\nx,3\n".as_bytes()).is_err());
        let empty = read_dataset("y_km1,y\n".as_bytes()).unwrap();
        assert!(empty.pairs.is_empty());
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(
            rows in prop::collection::vec((prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 2), any::<f64>().prop_filter("finite", |v| v.is_finite())), 1..20),
            lo in -1e6f64..0.0, span in 1e-3f64..1e6,
        ) {
            let pairs: Vec<Pair> = rows.into_iter().map(|(x, y)| Pair::new(x, y)).collect();
            let scale = Some(Scale { min: lo, max: lo + span });
            let mut buf = Vec::new();
            write_dataset(&mut buf, &pairs, scale).unwrap();
            let back = read_dataset(buf.as_slice()).unwrap();
            prop_assert_eq!(back.pairs, pairs);
            prop_assert_eq!(back.scale, scale);
        }
    }
}
