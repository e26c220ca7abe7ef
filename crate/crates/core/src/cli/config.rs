use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::data::{load_csv_dataset, load_idx_dataset, split_query_database, LabeledDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::retrieval::RelevanceMode;
use crate::trainer::{ExecOptions, Hyperparams};

/// Every setting of a run. The JSON config file uses the same flat schema
/// as the flags (snake_case keys); flags win over file values.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[arg(skip)]
    pub seed: Option<u64>,
    #[arg(skip)]
    pub threads: Option<usize>,

    /// Dataset format: idx or csv.
    #[arg(long)]
    pub data_format: Option<String>,
    /// IDX image file.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// CSV file with features followed by binary label columns.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Number of trailing label columns in the CSV.
    #[arg(long)]
    pub label_columns: Option<usize>,
    /// Number of classes for IDX labels.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Which part of the query/database split to use: all, query or database.
    #[arg(long)]
    pub subset: Option<String>,
    /// Queries drawn per class for the split (default 100).
    #[arg(long)]
    pub queries_per_class: Option<usize>,
    /// Keep only the first N samples of the selected subset.
    #[arg(long)]
    pub limit: Option<usize>,

    /// Hidden layer widths, comma separated; the last one is the code length.
    #[arg(long, value_delimiter = ',')]
    pub hidden_dims: Option<Vec<usize>>,
    /// Weight decay on the network layers.
    #[arg(long)]
    pub alpha_theta: Option<f64>,
    /// Weight decay on the classifier.
    #[arg(long)]
    pub alpha_w: Option<f64>,
    /// Activation penalty and dual step.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Weight-copy penalty and dual step (defaults to beta).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Inner subgradient steps per subproblem.
    #[arg(long)]
    pub subgrad_steps: Option<usize>,
    #[arg(long)]
    pub subgrad_base_step: Option<f64>,
    /// Outer sweeps before stopping (default 100).
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Iterations compared by the stopping rule.
    #[arg(long)]
    pub convergence_window: Option<usize>,
    /// Relative dual-norm change below which training stops.
    #[arg(long)]
    pub convergence_rel_tol: Option<f64>,
    /// Half-width of the uniform initialization (default sqrt(6 / fan_in)).
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// Solve the top activation and classifier by subgradient descent.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub force_subgradient: Option<bool>,
    /// Sum the weight copies in parallel (not bit-reproducible).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub parallel_reduce: Option<bool>,
    /// Record per-iteration wall time in the diagnostics.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub timing: Option<bool>,

    /// Weight file (written by train, read by encode and embed).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Diagnostics CSV written by train.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    /// Output file of encode or embed.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Label CSV for the encoded samples.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
    /// Layer whose activations embed writes (0 is the input).
    #[arg(long)]
    pub layer: Option<usize>,

    /// Query code file written by encode.
    #[arg(long)]
    pub query_codes: Option<PathBuf>,
    /// Database code file written by encode.
    #[arg(long)]
    pub db_codes: Option<PathBuf>,
    /// Query labels: IDX label file or 0/1 CSV with one row per item.
    #[arg(long)]
    pub query_labels: Option<PathBuf>,
    /// Database labels, same formats as the query labels.
    #[arg(long)]
    pub db_labels: Option<PathBuf>,
    /// Relevance: single (same class) or multi (any shared label).
    #[arg(long)]
    pub mode: Option<String>,
    /// Also write the report as JSON here.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
    /// Also write the report as a one-row CSV here.
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line() as u64,
            msg: format!("config: {e}"),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::from_json(&fs::read_to_string(path)?)
    }

    /// Values set in `flags` replace those in `self`.
    pub fn overlay(mut self, flags: RunConfig) -> Self {
        overlay!(self, flags;
            seed, threads, data_format, images, labels, csv, label_columns, classes, subset,
            queries_per_class, limit, hidden_dims, alpha_theta, alpha_w, beta, gamma,
            subgrad_steps, subgrad_base_step, max_iterations, convergence_window,
            convergence_rel_tol, init_scale, force_subgradient, parallel_reduce, timing,
            weights, diagnostics, out, labels_out, layer, query_codes, db_codes,
            query_labels, db_labels, mode, json_out, csv_out,
        );
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn hyperparams(&self) -> Result<Hyperparams> {
        let d = Hyperparams::default();
        let h = Hyperparams {
            alpha_theta: self.alpha_theta.unwrap_or(d.alpha_theta),
            alpha_w: self.alpha_w.unwrap_or(d.alpha_w),
            beta: self.beta.unwrap_or(d.beta),
            gamma: self.gamma.or(self.beta).unwrap_or(d.gamma),
            subgrad_steps: self.subgrad_steps.unwrap_or(d.subgrad_steps),
            subgrad_base_step: self.subgrad_base_step.unwrap_or(d.subgrad_base_step),
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            convergence_window: self.convergence_window.unwrap_or(d.convergence_window),
            convergence_rel_tol: self.convergence_rel_tol.unwrap_or(d.convergence_rel_tol),
            init_scale: self.init_scale.or(d.init_scale),
        };
        h.validate()?;
        Ok(h)
    }

    pub fn exec(&self) -> Result<ExecOptions> {
        let threads = self.threads.unwrap_or(1);
        if threads == 0 {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        Ok(ExecOptions {
            force_subgradient: self.force_subgradient.unwrap_or(false),
            parallel_reduce: self.parallel_reduce.unwrap_or(false),
            threads,
        })
    }

    pub fn hidden_dims(&self) -> Result<Vec<usize>> {
        self.hidden_dims.clone().ok_or_else(|| missing("hidden_dims"))
    }

    pub fn relevance_mode(&self) -> Result<RelevanceMode> {
        match self.mode.as_deref().unwrap_or("single") {
            "single" => Ok(RelevanceMode::SingleLabel),
            "multi" => Ok(RelevanceMode::MultiLabel),
            other => Err(Error::InvalidArgument(format!(
                "mode must be single or multi, got {other:?}"
            ))),
        }
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        value.as_deref().ok_or_else(|| missing(name))
    }

    /// Checks the dataset selection without reading any file.
    pub fn data_source(&self) -> Result<DataSource> {
        let format = match self.data_format.as_deref().unwrap_or("idx") {
            "idx" => DataFormat::Idx {
                images: self.require(&self.images, "images")?.to_path_buf(),
                labels: self.require(&self.labels, "labels")?.to_path_buf(),
                classes: self.classes.unwrap_or(10),
            },
            "csv" => DataFormat::Csv {
                path: self.require(&self.csv, "csv")?.to_path_buf(),
                label_columns: self.label_columns.ok_or_else(|| missing("label_columns"))?,
            },
            other => {
                return Err(Error::InvalidArgument(format!(
                    "data_format must be idx or csv, got {other:?}"
                )))
            }
        };
        let subset = match self.subset.as_deref().unwrap_or("all") {
            "all" => Subset::All,
            "query" => Subset::Query,
            "database" => Subset::Database,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "subset must be all, query or database, got {other:?}"
                )))
            }
        };
        if self.limit == Some(0) {
            return Err(Error::InvalidArgument("limit must be at least 1".into()));
        }
        Ok(DataSource {
            format,
            subset,
            split: SplitSpec {
                queries_per_class: self.queries_per_class.unwrap_or(100),
                seed: self.seed(),
            },
            limit: self.limit,
        })
    }
}

fn missing(name: &str) -> Error {
    Error::InvalidArgument(format!("missing required setting --{}", name.replace('_', "-")))
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataFormat {
    Idx {
        images: PathBuf,
        labels: PathBuf,
        classes: usize,
    },
    Csv {
        path: PathBuf,
        label_columns: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subset {
    All,
    Query,
    Database,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSource {
    pub format: DataFormat,
    pub subset: Subset,
    pub split: SplitSpec,
    pub limit: Option<usize>,
}

impl DataSource {
    pub fn load(&self) -> Result<LabeledDataset> {
        let full = match &self.format {
            DataFormat::Idx {
                images,
                labels,
                classes,
            } => load_idx_dataset(images, labels, *classes)?,
            DataFormat::Csv { path, label_columns } => load_csv_dataset(path, *label_columns)?,
        };
        let selected = match self.subset {
            Subset::All => full,
            Subset::Query => split_query_database(&full, self.split)?.0,
            Subset::Database => split_query_database(&full, self.split)?.1,
        };
        match self.limit {
            Some(n) if n < selected.len() => selected.subset(&(0..n).collect::<Vec<_>>()),
            _ => Ok(selected),
        }
    }
}
