use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Features (d x N) and binary labels (C x N) read from a numeric CSV whose
/// last `label_columns` columns hold 0/1 labels. A first line that does not
/// parse as numbers is treated as a header.
pub fn load_csv(path: &Path, label_columns: usize) -> Result<(Matrix, Matrix)> {
    let rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    parse_records(rdr, label_columns)
}

pub fn parse_csv_str(text: &str, label_columns: usize) -> Result<(Matrix, Matrix)> {
    let rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    parse_records(rdr, label_columns)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            msg: format!("{other:?}"),
        },
    }
}

fn parse_records<R: std::io::Read>(mut rdr: csv::Reader<R>, label_columns: usize) -> Result<(Matrix, Matrix)> {
    if label_columns == 0 {
        return Err(Error::InvalidArgument("need at least one label column".into()));
    }
    let mut width: Option<usize> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut first = true;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if first => {
                first = false;
                continue;
            }
            Err(_) => {
                let bad = rec.iter().find(|c| c.parse::<f64>().is_err()).unwrap_or("");
                return Err(Error::Parse {
                    line,
                    msg: format!("non-numeric cell {bad:?}"),
                });
            }
        };
        first = false;
        match width {
            None => {
                if values.len() <= label_columns {
                    return Err(Error::Parse {
                        line,
                        msg: format!(
                            "{} columns leaves no features with {label_columns} label columns",
                            values.len()
                        ),
                    });
                }
                width = Some(values.len());
            }
            Some(w) if w != values.len() => {
                return Err(Error::Parse {
                    line,
                    msg: format!("ragged row: {} columns, expected {w}", values.len()),
                });
            }
            _ => {}
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line,
                msg: format!("non-finite value {v}"),
            });
        }
        let d = values.len() - label_columns;
        if let Some(v) = values[d..].iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Parse {
                line,
                msg: format!("label value {v} is not 0 or 1"),
            });
        }
        rows.push(values);
    }
    let width = width.ok_or_else(|| Error::Parse {
        line: 0,
        msg: "no data rows".into(),
    })?;
    let d = width - label_columns;
    let n = rows.len();
    let mut x = Matrix::zeros(d, n);
    let mut y = Matrix::zeros(label_columns, n);
    for (j, row) in rows.iter().enumerate() {
        for (i, &v) in row[..d].iter().enumerate() {
            x[(i, j)] = v;
        }
        for (c, &v) in row[d..].iter().enumerate() {
            y[(c, j)] = v;
        }
    }
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        let (x, y) = parse_csv_str("1,2,0\n3,4,1\n5,6,1\n", 1).unwrap();
        assert_eq!(x.shape(), (2, 3));
        assert_eq!(y.shape(), (1, 3));
        assert_eq!(x.col(1), vec![3.0, 4.0]);
        assert_eq!(y.as_slice(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn multi_hot_passes_through() {
        let (_, y) = parse_csv_str("0.5,0.5,1,1\n", 2).unwrap();
        assert_eq!(y.col(0), vec![1.0, 1.0]);
    }

    #[test]
    fn header_row_is_skipped() {
        let (x, y) = parse_csv_str("f1,f2,label\n1,2,1\n", 1).unwrap();
        assert_eq!(x.shape(), (2, 1));
        assert_eq!(y.shape(), (1, 1));
    }

    #[test]
    fn ragged_row_names_line() {
        let err = parse_csv_str("1,2,0\n3,4,1\n5,1\n", 1).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("ragged"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_cells() {
        assert!(matches!(
            parse_csv_str("1,2,0\n1,x,1\n", 1),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(parse_csv_str("1,2,2\n", 1), Err(Error::Parse { line: 1, .. })));
        assert!(parse_csv_str("1,0\n", 2).is_err());
        assert!(parse_csv_str("", 1).is_err());
    }
}
