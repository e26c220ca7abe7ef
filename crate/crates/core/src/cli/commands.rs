use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::cli::config::RunConfig;
use crate::data::idx::{parse_labels, LABEL_MAGIC};
use crate::data::one_hot;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::model::{load_weights, save_weights, NetworkConfig};
use crate::numerics::{Matrix, Rng};
use crate::retrieval::{evaluate_packed, load_codes, save_codes, EvalReport, PackedCodes, RelevanceOracle};
use crate::trainer::{train, write_diagnostics_header, write_diagnostics_row, DiagnosticsRow, Trained};

/// Trains a model and writes its weight file and diagnostics CSV.
pub fn cmd_train(cfg: &RunConfig) -> Result<Trained> {
    let weights_path = cfg.require(&cfg.weights, "weights")?.to_path_buf();
    let diag_path = cfg
        .diagnostics
        .clone()
        .unwrap_or_else(|| default_diagnostics_path(&weights_path));
    let source = cfg.data_source()?;
    let hidden = cfg.hidden_dims()?;
    let hyper = cfg.hyperparams()?;
    let exec = cfg.exec()?;
    let timing = cfg.timing.unwrap_or(false);

    let dataset = source.load()?;
    let config = NetworkConfig::new(dataset.dim(), hidden)?;
    let mut rng = Rng::new(cfg.seed());
    let mut rows: Vec<DiagnosticsRow> = Vec::new();
    let trained = train(&dataset, &config, &hyper, &exec, &mut rng, &mut |row| {
        rows.push(row.clone());
        Ok(())
    })?;

    write_atomic(&diag_path, |w| {
        write_diagnostics_header(w)?;
        for row in &rows {
            write_diagnostics_row(w, row, timing)?;
        }
        Ok(())
    })?;
    save_weights(&weights_path, &trained.weights, Some(&trained.classifier))?;
    Ok(trained)
}

pub fn default_diagnostics_path(weights: &Path) -> PathBuf {
    let mut name = weights.file_name().unwrap_or_default().to_os_string();
    name.push(".diagnostics.csv");
    weights.with_file_name(name)
}

/// Encodes the selected samples and writes a packed code file.
pub fn cmd_encode(cfg: &RunConfig) -> Result<PackedCodes> {
    let weights_path = cfg.require(&cfg.weights, "weights")?;
    let out = cfg.require(&cfg.out, "out")?;
    let source = cfg.data_source()?;
    let (weights, _) = load_weights(weights_path)?;
    let dataset = source.load()?;
    let codes = PackedCodes::from_matrix(&weights.encode_columns(dataset.features())?);
    if let Some(path) = &cfg.labels_out {
        write_label_csv(path, dataset.labels())?;
    }
    save_codes(out, &codes)?;
    Ok(codes)
}

/// Writes the layer-`m` activations of the selected samples, one row each.
pub fn cmd_embed(cfg: &RunConfig) -> Result<()> {
    let weights_path = cfg.require(&cfg.weights, "weights")?;
    let out = cfg.require(&cfg.out, "out")?;
    let layer = cfg
        .layer
        .ok_or_else(|| Error::InvalidArgument("missing required setting --layer".into()))?;
    let source = cfg.data_source()?;
    let (weights, _) = load_weights(weights_path)?;
    if layer > weights.depth() {
        return Err(Error::InvalidArgument(format!(
            "layer {layer} out of range for a {}-layer network (0..={})",
            weights.depth(),
            weights.depth()
        )));
    }
    let dataset = source.load()?;
    let mut rows = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        rows.push(weights.forward_all(&dataset.sample(i))?.swap_remove(layer));
    }
    write_atomic(out, |w| {
        for row in &rows {
            write_row(w, row)?;
        }
        Ok(())
    })
}

/// Evaluates query codes against database codes; writes the optional JSON
/// and CSV reports and returns the report.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let queries = load_codes(cfg.require(&cfg.query_codes, "query_codes")?)?;
    let db = load_codes(cfg.require(&cfg.db_codes, "db_codes")?)?;
    let mode = cfg.relevance_mode()?;
    let (lq, ld) = load_label_pair(
        cfg.require(&cfg.query_labels, "query_labels")?,
        cfg.require(&cfg.db_labels, "db_labels")?,
        cfg.classes,
    )?;
    let oracle = RelevanceOracle::new(mode, &lq, &ld)?;
    let report = evaluate_packed(&queries, &db, &oracle)?;
    if let Some(path) = &cfg.json_out {
        write_atomic(path, |w| {
            w.write_all(report_json(&report)?.as_bytes())?;
            Ok(())
        })?;
    }
    if let Some(path) = &cfg.csv_out {
        write_atomic(path, |w| {
            w.write_all(report_csv(&report).as_bytes())?;
            Ok(())
        })?;
    }
    Ok(report)
}

pub fn report_json(report: &EvalReport) -> Result<String> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::InvalidArgument(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    Ok(text)
}

pub const REPORT_CSV_HEADER: &str = "map,precision_r0,precision_r1,precision_r2,recall_r0,recall_r1,recall_r2";

pub fn report_csv(r: &EvalReport) -> String {
    format!(
        "{REPORT_CSV_HEADER}\n{},{},{},{},{},{},{}\n",
        r.map, r.precision_r0, r.precision_r1, r.precision_r2, r.recall_r0, r.recall_r1, r.recall_r2
    )
}

fn write_row(w: &mut dyn Write, row: &[f64]) -> Result<()> {
    for (k, v) in row.iter().enumerate() {
        if k > 0 {
            w.write_all(b",")?;
        }
        write!(w, "{v}")?;
    }
    w.write_all(b"\n")?;
    Ok(())
}

/// One row per item with C columns of 0/1.
pub fn write_label_csv(path: &Path, labels: &Matrix) -> Result<()> {
    write_atomic(path, |w| {
        for j in 0..labels.cols() {
            write_row(w, &labels.col(j))?;
        }
        Ok(())
    })
}

enum RawLabels {
    Classes(Vec<usize>),
    Matrix(Matrix),
}

fn read_raw_labels(path: &Path) -> Result<RawLabels> {
    let bytes = fs::read(path)?;
    if bytes.len() >= 4 && u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) == LABEL_MAGIC {
        return Ok(RawLabels::Classes(
            parse_labels(&bytes)?.into_iter().map(usize::from).collect(),
        ));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let line = line as u64 + 1;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let col = rec
            .iter()
            .map(|cell| match cell {
                "0" => Ok(0.0),
                "1" => Ok(1.0),
                other => Err(Error::Parse {
                    line,
                    msg: format!("label cell {other:?} is not 0 or 1"),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        columns.push(col);
    }
    if columns.is_empty() {
        return Err(Error::InvalidArgument(format!("{} holds no labels", path.display())));
    }
    Ok(RawLabels::Matrix(Matrix::from_columns(columns[0].len(), &columns)?))
}

/// Reads query and database labels into C×Q and C×N matrices.
pub fn load_label_pair(query: &Path, db: &Path, classes: Option<usize>) -> Result<(Matrix, Matrix)> {
    let (q, d) = (read_raw_labels(query)?, read_raw_labels(db)?);
    let max_class = |l: &RawLabels| match l {
        RawLabels::Classes(c) => c.iter().max().map_or(0, |m| m + 1),
        RawLabels::Matrix(m) => m.rows(),
    };
    let classes = classes.unwrap_or_else(|| max_class(&q).max(max_class(&d)));
    let to_matrix = |l: RawLabels| match l {
        RawLabels::Classes(c) => one_hot(&c, classes),
        RawLabels::Matrix(m) => Ok(m),
    };
    Ok((to_matrix(q)?, to_matrix(d)?))
}
