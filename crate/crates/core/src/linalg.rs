//! Small dense helpers bridging ndarray storage and nalgebra solvers.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

pub(crate) fn to_dmatrix(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_dmatrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order; eigenvectors are the columns of the returned matrix.
pub fn symmetric_eigen_desc(a: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Shape(format!("eigen solve on a {}x{} matrix", n, a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite entries in symmetric matrix".into()));
    }
    // Symmetrize to absorb rounding asymmetry.
    let m = to_dmatrix(a);
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Sample covariance of `channels x samples` data around `mean`, divided by
/// the number of samples.
pub fn covariance(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = x.ncols().max(1) as f64;
    let mean = x.mean_axis(ndarray::Axis(1)).unwrap_or_else(|| Array1::zeros(x.nrows()));
    let centered = &x - &mean.insert_axis(ndarray::Axis(1));
    centered.dot(&centered.t()) / n
}

/// Moore-Penrose pseudo-inverse via SVD.
pub fn pinv(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let m = to_dmatrix(a);
    let svd = m.svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let p = svd
        .pseudo_inverse(eps)
        .map_err(|e| Error::Rank(e.to_string()))?;
    Ok(from_dmatrix(&p))
}

/// Pearson correlation; zero when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let ma = a[..n].iter().sum::<f64>() / nf;
    let mb = b[..n].iter().sum::<f64>() / nf;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a[..n].iter().zip(&b[..n]) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let denom = (saa * sbb).sqrt();
    if denom <= f64::MIN_POSITIVE || saa <= 1e-300 || sbb <= 1e-300 {
        0.0
    } else {
        (sab / denom).clamp(-1.0, 1.0)
    }
}
