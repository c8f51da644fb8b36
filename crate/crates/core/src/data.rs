//! Datasets, train/val/cal/test splitting, standardization and the CSV
//! dataset format (`x0..x{p-1}`, `y0..y{d-1}` columns).

use crate::error::{Error, Result};
use crate::rng::RngStream;
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Row `i` of a standard-layout matrix as a slice.
pub fn row(matrix: &Array2<f64>, i: usize) -> &[f64] {
    let cols = matrix.ncols();
    &matrix.as_slice().expect("matrices are kept in standard layout")[i * cols..(i + 1) * cols]
}

/// Row `i` of a standard-layout view as a slice.
pub fn view_row<'a>(matrix: &ArrayView2<'a, f64>, i: usize) -> &'a [f64] {
    let cols = matrix.ncols();
    let all = matrix.to_slice().expect("views are kept in standard layout");
    &all[i * cols..(i + 1) * cols]
}

/// Paired inputs `x` (n×p) and outputs `y` (n×d).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        let feature_names = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        let target_names = (0..y.ncols()).map(|j| format!("y{j}")).collect();
        Self::with_names(x, y, feature_names, target_names)
    }

    pub fn with_names(
        x: Array2<f64>,
        y: Array2<f64>,
        feature_names: Vec<String>,
        target_names: Vec<String>,
    ) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::InvalidData(format!(
                "x has {} rows but y has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        if y.nrows() == 0 {
            return Err(Error::InvalidData("dataset is empty".into()));
        }
        if y.ncols() == 0 {
            return Err(Error::InvalidData("dataset has no targets".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("dataset contains non-finite entries".into()));
        }
        if feature_names.len() != x.ncols() || target_names.len() != y.ncols() {
            return Err(Error::InvalidData("column names do not match matrix widths".into()));
        }
        Ok(Self {
            x: x.as_standard_layout().into_owned(),
            y: y.as_standard_layout().into_owned(),
            feature_names,
            target_names,
        })
    }

    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.y.ncols()
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        row(&self.x, i)
    }

    pub fn y_row(&self, i: usize) -> &[f64] {
        row(&self.y, i)
    }

    /// The rows listed in `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidData("cannot select an empty subset".into()));
        }
        Ok(Self {
            x: self.x.select(Axis(0), indices).as_standard_layout().into_owned(),
            y: self.y.select(Axis(0), indices).as_standard_layout().into_owned(),
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
        })
    }

    /// Reads the CSV dataset format: a header row, `x*` feature columns and
    /// `y*` target columns.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let mut x_cols = Vec::new();
        let mut y_cols = Vec::new();
        for (i, name) in headers.iter().enumerate() {
            match name.trim().chars().next() {
                Some('x') => x_cols.push(i),
                Some('y') => y_cols.push(i),
                _ => {
                    return Err(Error::InvalidData(format!(
                        "column '{name}' is neither a feature (x*) nor a target (y*)"
                    )))
                }
            }
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut n = 0;
        for record in reader.records() {
            let record = record?;
            let parse = |i: usize| -> Result<f64> {
                record[i].trim().parse::<f64>().map_err(|e| {
                    Error::InvalidData(format!("row {}: column {}: {e}", n + 1, &headers[i]))
                })
            };
            for &i in &x_cols {
                xs.push(parse(i)?);
            }
            for &i in &y_cols {
                ys.push(parse(i)?);
            }
            n += 1;
        }
        let x = Array2::from_shape_vec((n, x_cols.len()), xs)
            .map_err(|e| Error::InvalidData(e.to_string()))?;
        let y = Array2::from_shape_vec((n, y_cols.len()), ys)
            .map_err(|e| Error::InvalidData(e.to_string()))?;
        let names = |cols: &[usize]| cols.iter().map(|&i| headers[i].trim().to_string()).collect();
        Self::with_names(x, y, names(&x_cols), names(&y_cols))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let header: Vec<String> = (0..self.input_dim())
            .map(|j| format!("x{j}"))
            .chain((0..self.output_dim()).map(|j| format!("y{j}")))
            .collect();
        writer.write_record(&header)?;
        for i in 0..self.len() {
            let fields: Vec<String> = self
                .x_row(i)
                .iter()
                .chain(self.y_row(i))
                .map(|v| format!("{v:?}"))
                .collect();
            writer.write_record(&fields)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Disjoint index sets for the four roles of a split-conformal experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub cal: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n`, reserves `cal_size` indices for calibration, then splits
/// the remainder into train and validation by flooring `train_frac` and
/// `val_frac` of it; what is left goes to test.
pub fn split_dataset(
    n: usize,
    cal_size: usize,
    train_frac: f64,
    val_frac: f64,
    stream: &RngStream,
) -> Result<SplitIndices> {
    if cal_size >= n {
        return Err(Error::InvalidConfig(format!(
            "calibration size {cal_size} must be smaller than the dataset size {n}"
        )));
    }
    if !(train_frac >= 0.0 && val_frac >= 0.0 && train_frac + val_frac < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train/val fractions {train_frac}/{val_frac} must be nonnegative and sum below 1"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream.rng());
    let rest = n - cal_size;
    let n_train = (rest as f64 * train_frac).floor() as usize;
    let n_val = (rest as f64 * val_frac).floor() as usize;
    let cal = order[..cal_size].to_vec();
    let train = order[cal_size..cal_size + n_train].to_vec();
    let val = order[cal_size + n_train..cal_size + n_train + n_val].to_vec();
    let test = order[cal_size + n_train + n_val..].to_vec();
    Ok(SplitIndices { train, val, cal, test })
}

/// Per-column affine map to zero mean and unit population variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fits column statistics on the rows in `indices`. Columns without
    /// spread keep scale 1.
    pub fn fit(matrix: &Array2<f64>, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidData("cannot standardize on an empty index set".into()));
        }
        let n = indices.len() as f64;
        let cols = matrix.ncols();
        let mut mean = vec![0.0; cols];
        for &i in indices {
            for (m, v) in mean.iter_mut().zip(row(matrix, i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; cols];
        for &i in indices {
            for ((s, v), m) in var.iter_mut().zip(row(matrix, i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 * m.abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    pub fn apply(&self, matrix: &Array2<f64>) -> Array2<f64> {
        let mut out = matrix.as_standard_layout().into_owned();
        for mut r in out.rows_mut() {
            for ((v, m), s) in r.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn invert(&self, matrix: &Array2<f64>) -> Array2<f64> {
        let mut out = matrix.as_standard_layout().into_owned();
        for mut r in out.rows_mut() {
            for ((v, m), s) in r.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = *v * s + m;
            }
        }
        out
    }
}
