//! Pseudoinverse and column-span bases via the singular value decomposition.

use nalgebra::DMatrix;

/// Relative cutoff below which singular values count as zero.
pub const PINV_RTOL: f64 = 1e-10;

fn cutoff(singular: &[f64]) -> f64 {
    singular.iter().cloned().fold(0.0, f64::max) * PINV_RTOL
}

/// Moore-Penrose pseudoinverse.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let tol = cutoff(svd.singular_values.as_slice());
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (s, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma > tol && sigma > 0.0 {
            out += v_t.row(s).transpose() * u.column(s).transpose() / sigma;
        }
    }
    out
}

/// Orthonormal basis of the column span, one column per singular value
/// above the tolerance.
pub fn orthonormal_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.ncols() == 0 || a.nrows() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.as_ref().expect("u requested");
    let tol = cutoff(svd.singular_values.as_slice());
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&s| svd.singular_values[s] > tol && svd.singular_values[s] > 0.0)
        .collect();
    DMatrix::from_fn(a.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}
