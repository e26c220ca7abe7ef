//! Dataset loading, label encoding, normalization and query/database splits.

mod csv;
pub mod idx;

use std::collections::BTreeSet;
use std::path::Path;

pub use self::csv::{load_csv, parse_csv_str};
pub use idx::{load_idx, write_idx, IdxData};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Unit-normalized feature columns with binary (possibly multi-hot) labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Matrix,
    ids: Vec<usize>,
}

impl LabeledDataset {
    /// Wraps already-prepared features. Feature columns must be unit length;
    /// use [`LabeledDataset::from_raw`] to normalize.
    pub fn new(features: Matrix, labels: Matrix, ids: Vec<usize>) -> Result<Self> {
        let n = features.cols();
        if labels.cols() != n || ids.len() != n {
            return Err(Error::dim(format!(
                "{n} feature columns, {} label columns, {} ids",
                labels.cols(),
                ids.len()
            )));
        }
        if n == 0 || features.rows() == 0 || labels.rows() == 0 {
            return Err(Error::InvalidArgument("dataset is empty".into()));
        }
        check_labels(&labels)?;
        for j in 0..n {
            let norm = features.col(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "feature column {j} has norm {norm}, expected unit length"
                )));
            }
        }
        Ok(LabeledDataset { features, labels, ids })
    }

    /// Normalizes raw features to unit columns and numbers samples `0..N`.
    pub fn from_raw(mut features: Matrix, labels: Matrix) -> Result<Self> {
        normalize_unit(&mut features)?;
        let ids = (0..features.cols()).collect();
        LabeledDataset::new(features, labels, ids)
    }

    /// Pixels divided by 255, then unit-normalized; labels one-hot over
    /// `classes` (at least the largest label + 1).
    pub fn from_idx(data: &IdxData, classes: usize) -> Result<Self> {
        let d = data.pixels_per_image();
        let n = data.len();
        let mut x = Matrix::zeros(d, n);
        for (j, img) in data.images.iter().enumerate() {
            for (i, &p) in img.iter().enumerate() {
                x[(i, j)] = f64::from(p) / 255.0;
            }
        }
        let labels: Vec<usize> = data.labels.iter().map(|&l| usize::from(l)).collect();
        LabeledDataset::from_raw(x, one_hot(&labels, classes)?)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &Matrix {
        &self.labels
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.features.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.rows()
    }

    pub fn sample(&self, i: usize) -> Vec<f64> {
        self.features.col(i)
    }

    pub fn label(&self, i: usize) -> Vec<f64> {
        self.labels.col(i)
    }

    /// Dataset restricted to the given positions, in that order.
    pub fn subset(&self, positions: &[usize]) -> Result<Self> {
        let n = self.len();
        if let Some(&p) = positions.iter().find(|&&p| p >= n) {
            return Err(Error::InvalidArgument(format!(
                "position {p} out of range for {n} samples"
            )));
        }
        let x_cols: Vec<Vec<f64>> = positions.iter().map(|&p| self.sample(p)).collect();
        let y_cols: Vec<Vec<f64>> = positions.iter().map(|&p| self.label(p)).collect();
        Ok(LabeledDataset {
            features: Matrix::from_columns(self.dim(), &x_cols)?,
            labels: Matrix::from_columns(self.num_classes(), &y_cols)?,
            ids: positions.iter().map(|&p| self.ids[p]).collect(),
        })
    }

    /// True when every column has exactly one positive label.
    pub fn is_single_label(&self) -> bool {
        (0..self.len()).all(|j| self.label(j).iter().filter(|&&v| v == 1.0).count() == 1)
    }
}

fn check_labels(labels: &Matrix) -> Result<()> {
    for j in 0..labels.cols() {
        let col = labels.col(j);
        if let Some(v) = col.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument(format!(
                "label entry {v} in sample {j} is not 0/1"
            )));
        }
        if !col.contains(&1.0) {
            return Err(Error::InvalidArgument(format!("sample {j} has no positive label")));
        }
    }
    Ok(())
}

/// Scales every column to unit l2 norm.
pub fn normalize_unit(x: &mut Matrix) -> Result<()> {
    let (d, n) = x.shape();
    let mut norms = vec![0.0f64; n];
    for r in 0..d {
        for (acc, v) in norms.iter_mut().zip(x.row(r)) {
            *acc += v * v;
        }
    }
    if let Some(j) = norms.iter().position(|&s| s == 0.0) {
        return Err(Error::ZeroColumn { index: j });
    }
    let inv: Vec<f64> = norms.iter().map(|s| 1.0 / s.sqrt()).collect();
    for r in 0..d {
        for (v, s) in x.row_mut(r).iter_mut().zip(&inv) {
            *v *= s;
        }
    }
    Ok(())
}

/// `C x N` indicator matrix with a single 1 per column at the label's row.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Matrix> {
    let mut y = Matrix::zeros(classes, labels.len());
    for (j, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::LabelOutOfRange { label: l, classes });
        }
        y[(l, j)] = 1.0;
    }
    Ok(y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub queries_per_class: usize,
    pub seed: u64,
}

/// Samples `queries_per_class` queries per label (ascending label order;
/// samples already picked for an earlier label are not eligible again) and
/// leaves the rest as the database, in original order.
pub fn split_query_database(dataset: &LabeledDataset, spec: SplitSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    if spec.queries_per_class == 0 {
        return Err(Error::InvalidArgument("queries_per_class must be at least 1".into()));
    }
    let mut rng = Rng::new(spec.seed);
    let mut taken = BTreeSet::new();
    let mut queries = Vec::new();
    let labels = dataset.labels();
    for c in 0..dataset.num_classes() {
        let mut candidates: Vec<usize> = (0..dataset.len())
            .filter(|&j| labels[(c, j)] == 1.0 && !taken.contains(&j))
            .collect();
        if candidates.len() <= spec.queries_per_class {
            return Err(Error::InsufficientSamples {
                class: c,
                available: candidates.len(),
                requested: spec.queries_per_class,
            });
        }
        rng.shuffle(&mut candidates);
        for &j in &candidates[..spec.queries_per_class] {
            taken.insert(j);
            queries.push(j);
        }
    }
    let database: Vec<usize> = (0..dataset.len()).filter(|j| !taken.contains(j)).collect();
    Ok((dataset.subset(&queries)?, dataset.subset(&database)?))
}

/// Loads an IDX image/label pair into a normalized one-hot dataset.
pub fn load_idx_dataset(images: &Path, labels: &Path, classes: usize) -> Result<LabeledDataset> {
    LabeledDataset::from_idx(&load_idx(images, labels)?, classes)
}

/// Loads a CSV into a normalized dataset.
pub fn load_csv_dataset(path: &Path, label_columns: usize) -> Result<LabeledDataset> {
    let (x, y) = load_csv(path, label_columns)?;
    LabeledDataset::from_raw(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        let mut x = Matrix::from_rows(&[[3.0], [4.0]]);
        normalize_unit(&mut x).unwrap();
        assert!((x[(0, 0)] - 0.6).abs() < 1e-15 && (x[(1, 0)] - 0.8).abs() < 1e-15);

        let unit = Matrix::from_rows(&[[0.6], [0.8]]);
        let mut again = unit.clone();
        normalize_unit(&mut again).unwrap();
        assert!(again.max_abs_diff(&unit) <= 1e-15);

        let mut z = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]]);
        assert!(matches!(normalize_unit(&mut z), Err(Error::ZeroColumn { index: 1 })));
    }

    #[test]
    fn one_hot_examples() {
        let y = one_hot(&[0, 2], 3).unwrap();
        assert_eq!(y.col(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(y.col(1), vec![0.0, 0.0, 1.0]);
        for j in 0..2 {
            assert_eq!(y.col(j).iter().sum::<f64>(), 1.0);
        }
        assert!(matches!(
            one_hot(&[5], 3),
            Err(Error::LabelOutOfRange { label: 5, classes: 3 })
        ));
    }

    fn balanced(classes: usize, per_class: usize) -> LabeledDataset {
        let n = classes * per_class;
        let labels: Vec<usize> = (0..n).map(|j| j % classes).collect();
        let mut x = Matrix::zeros(2, n);
        for j in 0..n {
            x[(0, j)] = 1.0 + j as f64;
            x[(1, j)] = 1.0;
        }
        LabeledDataset::from_raw(x, one_hot(&labels, classes).unwrap()).unwrap()
    }

    #[test]
    fn split_counts_and_partition() {
        let ds = balanced(10, 200);
        let spec = SplitSpec {
            queries_per_class: 100,
            seed: 5,
        };
        let (q, db) = split_query_database(&ds, spec).unwrap();
        assert_eq!(q.len(), 1000);
        assert_eq!(db.len(), 1000);
        let mut all: Vec<usize> = q.ids().iter().chain(db.ids()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..2000).collect::<Vec<_>>());

        let (q2, db2) = split_query_database(&ds, spec).unwrap();
        assert_eq!(q2.ids(), q.ids());
        assert_eq!(db2.ids(), db.ids());
    }

    #[test]
    fn split_needs_enough_samples() {
        let ds = balanced(3, 4);
        let r = split_query_database(
            &ds,
            SplitSpec {
                queries_per_class: 4,
                seed: 0,
            },
        );
        assert!(matches!(r, Err(Error::InsufficientSamples { class: 0, .. })));
    }

    #[test]
    fn multi_label_split_excludes_taken_samples() {
        // every sample carries label 0; odd samples also label 1
        let n = 12;
        let mut y = Matrix::zeros(2, n);
        let mut x = Matrix::zeros(1, n);
        for j in 0..n {
            y[(0, j)] = 1.0;
            if j % 2 == 1 {
                y[(1, j)] = 1.0;
            }
            x[(0, j)] = 1.0;
        }
        let ds = LabeledDataset::from_raw(x, y.clone()).unwrap();
        let (q, db) = split_query_database(
            &ds,
            SplitSpec {
                queries_per_class: 2,
                seed: 11,
            },
        )
        .unwrap();
        assert_eq!(q.len(), 4);
        assert_eq!(db.len(), 8);
        let uniq: BTreeSet<_> = q.ids().iter().collect();
        assert_eq!(uniq.len(), 4);
        // labels carried through bit-exactly
        for (pos, &id) in q.ids().iter().enumerate() {
            assert_eq!(q.label(pos), y.col(id));
        }
        assert!(!ds.is_single_label());
    }

    #[test]
    fn dataset_rejects_bad_labels() {
        let x = Matrix::from_rows(&[[1.0, 1.0]]);
        assert!(LabeledDataset::from_raw(x.clone(), Matrix::from_rows(&[[1.0, 0.0]])).is_err());
        assert!(LabeledDataset::from_raw(x.clone(), Matrix::from_rows(&[[1.0, 0.5]])).is_err());
        assert!(LabeledDataset::new(Matrix::from_rows(&[[2.0]]), Matrix::from_rows(&[[1.0]]), vec![0]).is_err());
    }
}
