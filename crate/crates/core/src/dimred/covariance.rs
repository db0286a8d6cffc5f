use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows per accumulation block. Blocks are reduced in index order so the
/// result does not depend on the number of worker threads.
const BLOCK_ROWS: usize = 4096;

/// Column means of an `m x n` matrix.
pub fn column_means(rows: &DMatrix<f64>) -> DVector<f64> {
    let m = rows.nrows().max(1) as f64;
    DVector::from_iterator(rows.ncols(), rows.column_iter().map(|c| c.sum() / m))
}

/// Second-moment matrix `(1/m) sum_i r_i r_i^T` of the rows, after removing
/// the row mean when `central` is set.
pub fn covariance(rows: &DMatrix<f64>, central: bool) -> Result<DMatrix<f64>> {
    let (m, n) = rows.shape();
    let min_rows = if central { 2 } else { 1 };
    if m < min_rows {
        return Err(Error::param("rows", format!("need at least {min_rows} rows, got {m}")));
    }
    let mean = if central { Some(column_means(rows)) } else { None };
    let starts: Vec<usize> = (0..m).step_by(BLOCK_ROWS).collect();
    let partials: Vec<DMatrix<f64>> = starts
        .par_iter()
        .map(|&start| {
            let len = BLOCK_ROWS.min(m - start);
            let mut block = rows.rows(start, len).into_owned();
            if let Some(mu) = &mean {
                for (j, mut col) in block.column_iter_mut().enumerate() {
                    col.add_scalar_mut(-mu[j]);
                }
            }
            block.transpose() * &block
        })
        .collect();
    let mut acc = DMatrix::zeros(n, n);
    for p in partials {
        acc += p;
    }
    acc /= m as f64;
    // exact symmetry
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (acc[(i, j)] + acc[(j, i)]);
            acc[(i, j)] = v;
            acc[(j, i)] = v;
        }
    }
    Ok(acc)
}
