//! STEP-imbalanced one-hot labels and their simplex-encoded (centered) form.
//!
//! Columns are grouped by class with the `k/2` majority classes first. Each
//! majority class holds `R * n_min` examples and each minority class `n_min`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to decide whether `R * n_min` is a whole number.
const INTEGRALITY_TOL: f64 = 1e-9;

/// A STEP-imbalance problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    /// Number of classes (even, at least 4).
    pub k: usize,
    /// Imbalance ratio between majority and minority class sizes.
    pub ratio: f64,
    /// Examples per minority class.
    pub n_min: usize,
    /// Embedding dimension of the unconstrained features.
    pub d: usize,
}

impl StepConfig {
    pub fn new(k: usize, ratio: f64, n_min: usize, d: usize) -> Result<Self> {
        let cfg = StepConfig { k, ratio, n_min, d };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Instance with `n_min = 1` and the default embedding dimension `d = 2k`.
    pub fn with_defaults(k: usize, ratio: f64) -> Result<Self> {
        Self::new(k, ratio, 1, 2 * k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 4 || !self.k.is_multiple_of(2) {
            return Err(Error::config(
                "StepConfig.k",
                format!("k must be even and ≥ 4 (got k = {})", self.k),
            ));
        }
        if !self.ratio.is_finite() || self.ratio < 1.0 {
            return Err(Error::config(
                "StepConfig.R",
                format!("R must be a finite real ≥ 1 (got R = {})", self.ratio),
            ));
        }
        if self.n_min == 0 {
            return Err(Error::config("StepConfig.n_min", "n_min must be ≥ 1"));
        }
        let maj = self.ratio * self.n_min as f64;
        if (maj - maj.round()).abs() > INTEGRALITY_TOL * maj.max(1.0) {
            return Err(Error::config(
                "StepConfig.R·n_min",
                format!(
                    "R·n_min must be an integer (got {} · {} = {maj})",
                    self.ratio, self.n_min
                ),
            ));
        }
        if self.d < self.k - 1 {
            return Err(Error::config(
                "StepConfig.d",
                format!("d must be ≥ k − 1 = {} (got d = {})", self.k - 1, self.d),
            ));
        }
        Ok(())
    }

    /// Number of majority (equivalently, minority) classes.
    pub fn half(&self) -> usize {
        self.k / 2
    }

    /// Examples per majority class, `R * n_min`.
    pub fn majority_size(&self) -> usize {
        (self.ratio * self.n_min as f64).round() as usize
    }

    /// Total number of examples `(R + 1) * (k/2) * n_min`.
    pub fn n(&self) -> usize {
        self.half() * (self.majority_size() + self.n_min)
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        (0..self.k)
            .map(|c| {
                if self.is_majority(c) {
                    self.majority_size()
                } else {
                    self.n_min
                }
            })
            .collect()
    }

    pub fn is_majority(&self, class: usize) -> bool {
        class < self.half()
    }

    /// Class index of every column, in storage order.
    pub fn labels(&self) -> Vec<usize> {
        self.class_sizes()
            .into_iter()
            .enumerate()
            .flat_map(|(c, size)| std::iter::repeat_n(c, size))
            .collect()
    }
}

/// One-hot label matrix `Y` (k × n).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    pub entries: Array2<f64>,
    pub class_sizes: Vec<usize>,
    /// Class of each column.
    pub labels: Vec<usize>,
}

impl LabelMatrix {
    pub fn k(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n(&self) -> usize {
        self.entries.ncols()
    }
}

/// Simplex-encoded label matrix `Z = (I − 11ᵀ/k) Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelMatrix {
    pub entries: Array2<f64>,
}

impl SelMatrix {
    pub fn k(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n(&self) -> usize {
        self.entries.ncols()
    }
}

pub fn build_step_onehot(cfg: &StepConfig) -> Result<LabelMatrix> {
    cfg.validate()?;
    let labels = cfg.labels();
    let mut entries = Array2::zeros((cfg.k, labels.len()));
    for (col, &class) in labels.iter().enumerate() {
        entries[[class, col]] = 1.0;
    }
    Ok(LabelMatrix {
        entries,
        class_sizes: cfg.class_sizes(),
        labels,
    })
}

/// Centers every column of a one-hot matrix.
///
/// A class-`c` column becomes `e_c − 1/k`, so the single `1` turns into
/// `(k − 1)/k` and every `0` into `−1/k`.
pub fn center_labels(y: &LabelMatrix) -> Result<SelMatrix> {
    let k = y.k();
    if y.labels.len() != y.n() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} columns",
            y.labels.len(),
            y.n()
        )));
    }
    for (col, column) in y.entries.columns().into_iter().enumerate() {
        let ones = column.iter().filter(|&&v| v == 1.0).count();
        let zeros = column.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || zeros != k - 1 || column[y.labels[col]] != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "column {col} is not a one-hot vector for class {}",
                y.labels[col]
            )));
        }
    }
    let off = -1.0 / k as f64;
    let on = (k - 1) as f64 / k as f64;
    let entries = Array2::from_shape_fn((k, y.n()), |(row, col)| {
        if y.labels[col] == row {
            on
        } else {
            off
        }
    });
    Ok(SelMatrix { entries })
}
