//! Dense row-major matrix, the only linear-algebra primitive the models need.

use serde::{Deserialize, Serialize};

/// Row-major dense matrix of `f64`. A bias vector is stored as its own
/// `Vec<f64>` elsewhere; this type only covers genuinely 2-D tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    /// `out += self * x`
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, x);
        }
    }

    /// `out += self^T * y`
    pub fn matvec_transpose_add(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&yi, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += yi * w;
            }
        }
    }

    /// Rank-1 update `self += a ⊗ b`.
    pub fn outer_add(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (&ai, row) in a.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            for (w, bi) in row.iter_mut().zip(b) {
                *w += ai * bi;
            }
        }
    }
}

/// Dot product over eight independent accumulators so the loop pipelines
/// and vectorizes. The summation order is fixed, keeping results
/// deterministic run to run.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    if n < 8 {
        let mut s = 0.0;
        for i in 0..n {
            s += a[i] * b[i];
        }
        return s;
    }
    let mut acc = [0.0f64; 8];
    let chunks = n / 8;
    let (a8, a_tail) = a.split_at(chunks * 8);
    let (b8, b_tail) = b.split_at(chunks * 8);
    for (ca, cb) in a8.chunks_exact(8).zip(b8.chunks_exact(8)) {
        for lane in 0..8 {
            acc[lane] += ca[lane] * cb[lane];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in a_tail.iter().zip(b_tail) {
        s += x * y;
    }
    s
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err("matrix must have at least one row and one column".into());
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                ));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(format!("entry ({i}, {j}) is not finite"));
                }
                data.push(v);
            }
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.data.chunks_exact(m.cols).map(<[f64]>::to_vec).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_transpose() {
        let m = Matrix::try_from(vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let mut out = vec![0.0; 3];
        m.matvec_add(&[1.0, -1.0], &mut out);
        assert_eq!(out, vec![-1.0, -1.0, -1.0]);

        let mut out_t = vec![0.0; 2];
        m.matvec_transpose_add(&[1.0, 1.0, 1.0], &mut out_t);
        assert_eq!(out_t, vec![9.0, 12.0]);
    }

    #[test]
    fn outer_accumulates() {
        let mut m = Matrix::zeros(2, 3);
        m.outer_add(&[1.0, 2.0], &[1.0, 10.0, 100.0]);
        m.outer_add(&[1.0, 2.0], &[1.0, 10.0, 100.0]);
        assert_eq!(m.row(0), &[2.0, 20.0, 200.0]);
        assert_eq!(m.row(1), &[4.0, 40.0, 400.0]);
    }

    #[test]
    fn serde_round_trips_including_shape_errors() {
        let m = Matrix::from_fn(2, 2, |r, c| (r * 2 + c) as f64);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, "[[0.0,1.0],[2.0,3.0]]");
        let back: Matrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);

        let ragged: Result<Matrix, _> = serde_json::from_str("[[1.0],[2.0,3.0]]");
        assert!(ragged.is_err());
    }
}
