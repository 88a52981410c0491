//! Base datasets and episodic problem sampling.
//!
//! A [`BaseDataset`] is a plain multiclass corpus. Classes are partitioned
//! into disjoint train/validation/test universes, and each elementary
//! problem slices a handful of classes into an unlabeled pool (whose labels
//! are held back by an [`Oracle`]) plus a labeled evaluation set. Sampling
//! is fully deterministic given seeds.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::{self, Stream};

// ── Base dataset ─────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct BaseDataset {
    n_features: usize,
    /// Row-major feature matrix.
    features: Vec<f64>,
    /// Class id per row (ids index `class_names`).
    labels: Vec<usize>,
    /// Original label token per class id, sorted lexicographically.
    class_names: Vec<String>,
    /// Row indices per class id, ascending.
    class_rows: Vec<Vec<usize>>,
}

impl BaseDataset {
    pub fn from_rows(n_features: usize, rows: Vec<(Vec<f64>, String)>) -> Result<Self> {
        let mut names: Vec<String> = rows.iter().map(|(_, l)| l.clone()).collect();
        names.sort_unstable();
        names.dedup();

        let mut features = Vec::with_capacity(rows.len() * n_features);
        let mut labels = Vec::with_capacity(rows.len());
        let mut class_rows = vec![Vec::new(); names.len()];
        for (i, (values, label)) in rows.into_iter().enumerate() {
            if values.len() != n_features {
                return Err(Error::ShapeMismatch {
                    context: "BaseDataset::from_rows",
                    expected: n_features,
                    got: values.len(),
                });
            }
            let class = names.binary_search(&label).expect("label collected above");
            features.extend_from_slice(&values);
            labels.push(class);
            class_rows[class].push(i);
        }
        if class_rows.iter().any(|r| r.is_empty()) {
            return Err(Error::EmptyCollection("BaseDataset: class without examples"));
        }
        Ok(BaseDataset {
            n_features,
            features,
            labels,
            class_names: names,
            class_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn class_name(&self, class: usize) -> &str {
        &self.class_names[class]
    }

    pub fn rows_of_class(&self, class: usize) -> &[usize] {
        &self.class_rows[class]
    }

    /// Per-feature z-scoring with statistics computed on the given classes'
    /// rows only, then applied to every row. Constant features are centered
    /// but not rescaled.
    pub fn standardized_on(&self, classes: &[usize]) -> BaseDataset {
        let k = self.n_features;
        let mut mean = vec![0.0; k];
        let mut count = 0usize;
        for &c in classes {
            for &r in &self.class_rows[c] {
                for (m, v) in mean.iter_mut().zip(self.row(r)) {
                    *m += v;
                }
                count += 1;
            }
        }
        if count == 0 {
            return self.clone();
        }
        for m in mean.iter_mut() {
            *m /= count as f64;
        }
        let mut var = vec![0.0; k];
        for &c in classes {
            for &r in &self.class_rows[c] {
                for ((s, v), m) in var.iter_mut().zip(self.row(r)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|s| {
                let sd = math::sqrt(s / count as f64);
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();

        let mut out = self.clone();
        for r in 0..self.n_rows() {
            let base = r * k;
            for j in 0..k {
                out.features[base + j] = (self.features[base + j] - mean[j]) * scale[j];
            }
        }
        out
    }
}

// ── Parsing ──────────────────────────────────────────────────────────

/// Parse comma-separated rows. The label sits in `label_col` (0-based);
/// every other column must be a real number.
pub fn parse_csv(text: &str, has_header: bool, label_col: usize) -> Result<BaseDataset> {
    let mut rows = Vec::new();
    let mut n_features = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || (has_header && idx == 0) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if label_col >= fields.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "label column {label_col} out of range for {} fields",
                    fields.len()
                ),
            });
        }
        let expected = fields.len() - 1;
        match n_features {
            None => n_features = Some(expected),
            Some(k) if k != expected => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {k} feature columns, found {expected}"),
                })
            }
            _ => {}
        }
        let mut values = Vec::with_capacity(expected);
        let mut label = None;
        for (col, field) in fields.iter().enumerate() {
            if col == label_col {
                label = Some(field.to_string());
            } else {
                values.push(field.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("column {col}: not a number: {field:?}"),
                })?);
            }
        }
        rows.push((values, label.expect("label column checked in range")));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no data rows".into(),
        });
    }
    BaseDataset::from_rows(rows[0].0.len(), rows)
}

/// Parse LIBSVM sparse lines: `label index:value ...` with 1-based indices.
/// The dense feature count is the maximum index seen anywhere in the file.
pub fn parse_libsvm(text: &str) -> Result<BaseDataset> {
    let mut sparse: Vec<(Vec<(usize, f64)>, String)> = Vec::new();
    let mut max_index = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label = parts
            .next()
            .ok_or_else(|| Error::Parse {
                line: line_no,
                message: "missing label".into(),
            })?
            .to_string();
        let mut pairs = Vec::new();
        for token in parts {
            let (i, v) = token.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected index:value, found {token:?}"),
            })?;
            let index: usize = i.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad feature index {i:?}"),
            })?;
            if index == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "feature indices are 1-based".into(),
                });
            }
            let value: f64 = v.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad feature value {v:?}"),
            })?;
            max_index = max_index.max(index);
            pairs.push((index - 1, value));
        }
        sparse.push((pairs, label));
    }
    if sparse.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no data rows".into(),
        });
    }
    let rows = sparse
        .into_iter()
        .map(|(pairs, label)| {
            let mut dense = vec![0.0; max_index];
            for (i, v) in pairs {
                dense[i] = v;
            }
            (dense, label)
        })
        .collect();
    BaseDataset::from_rows(max_index, rows)
}

// ── Class partition ──────────────────────────────────────────────────

/// Disjoint class universes for meta-train/validation/test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn partition_classes(
    ds: &BaseDataset,
    counts: (usize, usize, usize),
    seed: u64,
) -> Result<ClassPartition> {
    let (n_train, n_val, n_test) = counts;
    let total = n_train + n_val + n_test;
    if total > ds.n_classes() {
        return Err(Error::InsufficientClasses {
            requested: total,
            available: ds.n_classes(),
        });
    }
    let mut rng = rng::rng_from_seed(seed);
    let picked = rng::sample_indices(&mut rng, ds.n_classes(), total);
    let mut train: Vec<usize> = picked[..n_train].to_vec();
    let mut val: Vec<usize> = picked[n_train..n_train + n_val].to_vec();
    let mut test: Vec<usize> = picked[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(ClassPartition { train, val, test })
}

// ── Problems ─────────────────────────────────────────────────────────

/// Label table for a problem's pool, hidden from the selector.
#[derive(Debug, Clone)]
pub struct Oracle {
    pool_labels: Vec<usize>,
}

impl Oracle {
    pub fn new(pool_labels: Vec<usize>) -> Self {
        Oracle { pool_labels }
    }

    /// True (problem-local) labels for the given pool positions. Answers
    /// are a pure lookup, so repeat queries always agree.
    pub fn query(&self, pool_indices: &[usize]) -> Result<Vec<usize>> {
        pool_indices
            .iter()
            .map(|&i| {
                self.pool_labels
                    .get(i)
                    .copied()
                    .ok_or(Error::IndexOutOfBounds {
                        index: i,
                        len: self.pool_labels.len(),
                    })
            })
            .collect()
    }

    pub fn pool_size(&self) -> usize {
        self.pool_labels.len()
    }
}

/// One elementary classification task: `P` classes, an unlabeled pool of
/// `N` rows, and `M` labeled evaluation rows, disjoint from the pool.
/// Labels are problem-local: position in `classes`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub id: u64,
    pub seed: u64,
    /// Global class ids, in sampled order.
    pub classes: Vec<usize>,
    pub pool_rows: Vec<usize>,
    pub eval_rows: Vec<usize>,
    /// Problem-local labels of `eval_rows`.
    pub eval_labels: Vec<usize>,
    pub oracle: Oracle,
}

impl Problem {
    pub fn pool_size(&self) -> usize {
        self.pool_rows.len()
    }

    pub fn eval_size(&self) -> usize {
        self.eval_rows.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }
}

/// Sizing knobs for problem construction.
#[derive(Debug, Clone, Copy)]
pub struct ProblemSpec {
    /// Classes per problem.
    pub classes_per_problem: usize,
    /// Unlabeled pool size.
    pub pool_size: usize,
    /// Evaluation set size.
    pub eval_size: usize,
    /// Stratify the pool across the problem's classes.
    pub balanced: bool,
}

fn local_label(classes: &[usize], global: usize) -> usize {
    classes
        .iter()
        .position(|&c| c == global)
        .expect("row sampled from the problem's classes")
}

/// Sample one problem from the given class universe.
pub fn sample_problem(
    ds: &BaseDataset,
    classes: &[usize],
    spec: ProblemSpec,
    seed: u64,
    id: u64,
) -> Result<Problem> {
    let p = spec.classes_per_problem;
    if p == 0 || p > classes.len() {
        return Err(Error::InsufficientClasses {
            requested: p,
            available: classes.len(),
        });
    }
    let mut rng = rng::rng_from_seed(seed);
    let chosen_positions = rng::sample_indices(&mut rng, classes.len(), p);
    let chosen: Vec<usize> = chosen_positions.iter().map(|&i| classes[i]).collect();

    let mut union: Vec<usize> = Vec::new();
    for &c in &chosen {
        union.extend_from_slice(ds.rows_of_class(c));
    }
    let need = spec.pool_size + spec.eval_size;
    if need > union.len() {
        return Err(Error::InsufficientExamples {
            requested: need,
            available: union.len(),
        });
    }

    let (pool_rows, eval_rows) = if spec.balanced {
        sample_balanced(ds, &chosen, spec, &mut rng)?
    } else {
        let picked = rng::sample_indices(&mut rng, union.len(), need);
        let rows: Vec<usize> = picked.iter().map(|&i| union[i]).collect();
        (
            rows[..spec.pool_size].to_vec(),
            rows[spec.pool_size..].to_vec(),
        )
    };

    let pool_labels = pool_rows
        .iter()
        .map(|&r| local_label(&chosen, ds.label(r)))
        .collect();
    let eval_labels = eval_rows
        .iter()
        .map(|&r| local_label(&chosen, ds.label(r)))
        .collect();
    Ok(Problem {
        id,
        seed,
        classes: chosen,
        pool_rows,
        eval_rows,
        eval_labels,
        oracle: Oracle { pool_labels },
    })
}

/// Stratified pool: per-class quotas as even as possible (remainder classes
/// chosen at random), evaluation rows drawn uniformly from the leftovers.
fn sample_balanced(
    ds: &BaseDataset,
    chosen: &[usize],
    spec: ProblemSpec,
    rng: &mut impl RngCore,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let p = chosen.len();
    let base = spec.pool_size / p;
    let remainder = spec.pool_size % p;
    let mut order: Vec<usize> = (0..p).collect();
    rng::shuffle(rng, &mut order);

    let mut pool = Vec::with_capacity(spec.pool_size);
    let mut leftovers: Vec<usize> = Vec::new();
    for (rank, &ci) in order.iter().enumerate() {
        let quota = base + usize::from(rank < remainder);
        let rows = ds.rows_of_class(chosen[ci]);
        if quota > rows.len() {
            return Err(Error::InsufficientExamples {
                requested: quota,
                available: rows.len(),
            });
        }
        let picked = rng::sample_indices(rng, rows.len(), quota);
        let mut flags = vec![false; rows.len()];
        for &i in &picked {
            pool.push(rows[i]);
            flags[i] = true;
        }
        for (i, &row) in rows.iter().enumerate() {
            if !flags[i] {
                leftovers.push(row);
            }
        }
    }
    rng::shuffle(rng, &mut pool);
    if spec.eval_size > leftovers.len() {
        return Err(Error::InsufficientExamples {
            requested: spec.eval_size,
            available: leftovers.len(),
        });
    }
    let picked = rng::sample_indices(rng, leftovers.len(), spec.eval_size);
    let eval = picked.iter().map(|&i| leftovers[i]).collect();
    Ok((pool, eval))
}

/// The three problem collections of one experiment.
#[derive(Debug, Clone)]
pub struct ProblemSuite {
    pub train: Vec<Problem>,
    pub val: Vec<Problem>,
    pub test: Vec<Problem>,
}

/// Generate `counts` problems per split; train problems only ever see train
/// classes, and likewise for validation and test. Problem seeds derive from
/// `master_seed` by a running counter.
pub fn make_problem_suite(
    ds: &BaseDataset,
    partition: &ClassPartition,
    spec: ProblemSpec,
    counts: (usize, usize, usize),
    master_seed: u64,
) -> Result<ProblemSuite> {
    let mut counter = 0u64;
    let mut build = |classes: &[usize], n: usize| -> Result<Vec<Problem>> {
        let mut problems = Vec::with_capacity(n);
        for _ in 0..n {
            let seed = rng::child_seed(master_seed, Stream::ProblemSuite, counter);
            problems.push(sample_problem(ds, classes, spec, seed, counter)?);
            counter += 1;
        }
        Ok(problems)
    };
    Ok(ProblemSuite {
        train: build(&partition.train, counts.0)?,
        val: build(&partition.val, counts.1)?,
        test: build(&partition.test, counts.2)?,
    })
}
