use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::HashCodeMatrix;
use crate::numerics::Matrix;
use crate::retrieval::codes::{pack_code, PackedCodes};

/// Radii reported by [`evaluate`].
pub const RADII: [usize; 3] = [0, 1, 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelevanceMode {
    /// Relevant when the class labels are equal.
    SingleLabel,
    /// Relevant when the label sets share at least one label.
    MultiLabel,
}

/// True when two binary label vectors share a positive entry.
pub fn shares_label(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).any(|(&x, &y)| x > 0.5 && y > 0.5)
}

/// Ground-truth relevance between queries and database items.
#[derive(Clone, Debug)]
pub struct RelevanceOracle {
    mode: RelevanceMode,
    query_labels: Vec<Vec<usize>>,
    db_labels: Vec<Vec<usize>>,
    db_single: Vec<usize>,
}

fn label_sets(labels: &Matrix, what: &str, single: bool) -> Result<Vec<Vec<usize>>> {
    let mut sets = Vec::with_capacity(labels.cols());
    for j in 0..labels.cols() {
        let col = labels.col(j);
        let mut set = Vec::new();
        for (c, &v) in col.iter().enumerate() {
            if v == 1.0 {
                set.push(c);
            } else if v != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{what} label matrix entry ({c}, {j}) is {v}, expected 0 or 1"
                )));
            }
        }
        match (single, set.len()) {
            (_, 0) => {
                return Err(Error::InvalidArgument(format!("{what} item {j} has no label")));
            }
            (true, n) if n > 1 => {
                return Err(Error::InvalidArgument(format!(
                    "{what} item {j} has {n} labels in single-label mode"
                )));
            }
            _ => {}
        }
        sets.push(set);
    }
    Ok(sets)
}

impl RelevanceOracle {
    /// `query_labels` is C×Q and `db_labels` is C×N, both binary.
    pub fn new(mode: RelevanceMode, query_labels: &Matrix, db_labels: &Matrix) -> Result<Self> {
        if query_labels.rows() != db_labels.rows() {
            return Err(Error::dim(format!(
                "query labels have {} classes, database labels {}",
                query_labels.rows(),
                db_labels.rows()
            )));
        }
        let single = mode == RelevanceMode::SingleLabel;
        let query_labels = label_sets(query_labels, "query", single)?;
        let db_labels = label_sets(db_labels, "database", single)?;
        let db_single = if single {
            db_labels.iter().map(|s| s[0]).collect()
        } else {
            Vec::new()
        };
        Ok(RelevanceOracle {
            mode,
            query_labels,
            db_labels,
            db_single,
        })
    }

    pub fn mode(&self) -> RelevanceMode {
        self.mode
    }

    pub fn num_queries(&self) -> usize {
        self.query_labels.len()
    }

    pub fn num_database(&self) -> usize {
        self.db_labels.len()
    }

    pub fn is_relevant(&self, q: usize, j: usize) -> bool {
        match self.mode {
            RelevanceMode::SingleLabel => self.query_labels[q][0] == self.db_single[j],
            RelevanceMode::MultiLabel => {
                let (a, b) = (&self.query_labels[q], &self.db_labels[j]);
                // both sorted ascending
                let (mut x, mut y) = (0, 0);
                while x < a.len() && y < b.len() {
                    match a[x].cmp(&b[y]) {
                        std::cmp::Ordering::Equal => return true,
                        std::cmp::Ordering::Less => x += 1,
                        std::cmp::Ordering::Greater => y += 1,
                    }
                }
                false
            }
        }
    }

    /// Relevance flags of every database item for query `q`, in index order.
    pub fn relevance(&self, q: usize) -> Vec<bool> {
        (0..self.num_database()).map(|j| self.is_relevant(q, j)).collect()
    }
}

/// Database indices by ascending distance, ties by ascending index.
pub fn rank_database(query: &[i8], db: &HashCodeMatrix) -> Result<Vec<usize>> {
    check_width(query.len(), db.bits())?;
    let distances = PackedCodes::from_matrix(db).distances(&pack_code(query))?;
    Ok(rank_by_distance(&distances, db.bits()))
}

/// Counting sort on distances in `0..=bits`; stable in the index.
pub fn rank_by_distance(distances: &[usize], bits: usize) -> Vec<usize> {
    let mut start = vec![0usize; bits + 2];
    for &d in distances {
        start[d + 1] += 1;
    }
    for k in 1..start.len() {
        start[k] += start[k - 1];
    }
    let mut order = vec![0usize; distances.len()];
    for (j, &d) in distances.iter().enumerate() {
        order[start[d]] = j;
        start[d] += 1;
    }
    order
}

/// `(1/R) Σ_{k relevant} (relevant in the top k)/k` over ranked flags, with
/// `R = total_relevant`; zero when nothing is relevant.
pub fn average_precision(ranked_relevant: &[bool], total_relevant: usize) -> f64 {
    if total_relevant == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &rel) in ranked_relevant.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    sum / total_relevant as f64
}

/// Precision and recall of the set of items within `radius` of the query.
/// Precision is zero when nothing is retrieved; recall is zero when nothing
/// is relevant.
pub fn precision_recall_within(distances: &[usize], relevant: &[bool], radius: usize) -> (f64, f64) {
    let mut retrieved = 0usize;
    let mut hits = 0usize;
    let mut total = 0usize;
    for (&d, &rel) in distances.iter().zip(relevant) {
        total += rel as usize;
        if d <= radius {
            retrieved += 1;
            hits += rel as usize;
        }
    }
    let precision = if retrieved == 0 {
        0.0
    } else {
        hits as f64 / retrieved as f64
    };
    let recall = if total == 0 { 0.0 } else { hits as f64 / total as f64 };
    (precision, recall)
}

/// Precision and recall within `radius` for query number `q` of `oracle`.
pub fn metrics_within_radius(
    query: &[i8],
    q: usize,
    db: &HashCodeMatrix,
    oracle: &RelevanceOracle,
    radius: usize,
) -> Result<(f64, f64)> {
    check_width(query.len(), db.bits())?;
    check_oracle(oracle, None, db.len())?;
    if q >= oracle.num_queries() {
        return Err(Error::InvalidArgument(format!(
            "query {q} out of range for {} labelled queries",
            oracle.num_queries()
        )));
    }
    let distances = PackedCodes::from_matrix(db).distances(&pack_code(query))?;
    Ok(precision_recall_within(&distances, &oracle.relevance(q), radius))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub map: f64,
    pub precision_r0: f64,
    pub precision_r1: f64,
    pub precision_r2: f64,
    pub recall_r0: f64,
    pub recall_r1: f64,
    pub recall_r2: f64,
    pub num_queries: usize,
    pub num_database: usize,
    pub average_precisions: Vec<f64>,
}

impl EvalReport {
    pub fn precision(&self, radius: usize) -> Option<f64> {
        [self.precision_r0, self.precision_r1, self.precision_r2]
            .get(radius)
            .copied()
    }

    pub fn recall(&self, radius: usize) -> Option<f64> {
        [self.recall_r0, self.recall_r1, self.recall_r2].get(radius).copied()
    }
}

/// Per-query metrics, computed independently for each query.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryMetrics {
    pub average_precision: f64,
    pub precision: [f64; 3],
    pub recall: [f64; 3],
}

pub fn query_metrics(query: &[u64], q: usize, db: &PackedCodes, oracle: &RelevanceOracle) -> Result<QueryMetrics> {
    let distances = db.distances(query)?;
    let relevant = oracle.relevance(q);
    let order = rank_by_distance(&distances, db.bits());
    let ranked: Vec<bool> = order.iter().map(|&j| relevant[j]).collect();
    let total = relevant.iter().filter(|&&r| r).count();
    let mut precision = [0.0; 3];
    let mut recall = [0.0; 3];
    for (k, &r) in RADII.iter().enumerate() {
        (precision[k], recall[k]) = precision_recall_within(&distances, &relevant, r);
    }
    Ok(QueryMetrics {
        average_precision: average_precision(&ranked, total),
        precision,
        recall,
    })
}

/// MAP over full-database rankings and mean precision/recall at radii 0, 1, 2.
pub fn evaluate(queries: &HashCodeMatrix, db: &HashCodeMatrix, oracle: &RelevanceOracle) -> Result<EvalReport> {
    evaluate_packed(
        &PackedCodes::from_matrix(queries),
        &PackedCodes::from_matrix(db),
        oracle,
    )
}

pub fn evaluate_packed(queries: &PackedCodes, db: &PackedCodes, oracle: &RelevanceOracle) -> Result<EvalReport> {
    check_width(queries.bits(), db.bits())?;
    check_oracle(oracle, Some(queries.len()), db.len())?;
    if queries.is_empty() {
        return Err(Error::InvalidArgument("no queries to evaluate".into()));
    }
    let per_query = queries
        .iter()
        .enumerate()
        .map(|(q, code)| query_metrics(code, q, db, oracle))
        .collect::<Result<Vec<_>>>()?;
    let n = per_query.len() as f64;
    let mean = |f: &dyn Fn(&QueryMetrics) -> f64| per_query.iter().map(f).sum::<f64>() / n;
    Ok(EvalReport {
        map: mean(&|m| m.average_precision),
        precision_r0: mean(&|m| m.precision[0]),
        precision_r1: mean(&|m| m.precision[1]),
        precision_r2: mean(&|m| m.precision[2]),
        recall_r0: mean(&|m| m.recall[0]),
        recall_r1: mean(&|m| m.recall[1]),
        recall_r2: mean(&|m| m.recall[2]),
        num_queries: queries.len(),
        num_database: db.len(),
        average_precisions: per_query.iter().map(|m| m.average_precision).collect(),
    })
}

fn check_width(query_bits: usize, db_bits: usize) -> Result<()> {
    if query_bits != db_bits {
        return Err(Error::dim(format!(
            "query codes have {query_bits} bits, database codes {db_bits}"
        )));
    }
    Ok(())
}

fn check_oracle(oracle: &RelevanceOracle, queries: Option<usize>, db: usize) -> Result<()> {
    if oracle.num_database() != db {
        return Err(Error::dim(format!(
            "{db} database codes but {} database labels",
            oracle.num_database()
        )));
    }
    if let Some(q) = queries {
        if oracle.num_queries() != q {
            return Err(Error::dim(format!(
                "{q} query codes but {} query labels",
                oracle.num_queries()
            )));
        }
    }
    Ok(())
}
