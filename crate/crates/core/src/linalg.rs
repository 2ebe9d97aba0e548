//! Dense products against the row-major measurement matrix.

use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView1, ArrayView2};

/// `X·w`
pub fn forward(x: ArrayView2<'_, f64>, w: ArrayView1<'_, f64>) -> Array1<f64> {
    x.dot(&w)
}

/// `Xᵀ·a`, accumulated row by row so the row-major matrix is streamed once.
/// Rows with `a_μ = 0` are skipped.
pub fn adjoint(x: ArrayView2<'_, f64>, a: ArrayView1<'_, f64>) -> Array1<f64> {
    let mut out = Array1::zeros(x.ncols());
    for (row, &am) in x.rows().into_iter().zip(a.iter()) {
        if am != 0.0 {
            out.scaled_add(am, &row);
        }
    }
    out
}

/// `X·W` for a block of column vectors.
pub fn forward_block(x: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), w.ncols()));
    general_mat_mul(1.0, &x, &w, 0.0, &mut out);
    out
}

/// `Xᵀ·A` for a block of column vectors.
pub fn adjoint_block(x: ArrayView2<'_, f64>, a: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros((x.ncols(), a.ncols()));
    general_mat_mul(1.0, &x.t(), &a, 0.0, &mut out);
    out
}

#[inline]
pub fn norm2(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn products_agree_with_naive() {
        let x = array![[1.0, 2.0, 0.5], [-1.0, 0.0, 3.0]];
        let w = array![0.5, -1.0, 2.0];
        let a = array![2.0, -0.5];
        assert_eq!(forward(x.view(), w.view()), array![-0.5, 5.5]);
        assert_eq!(adjoint(x.view(), a.view()), array![2.5, 4.0, -0.5]);
        let wb = array![[0.5, 1.0], [-1.0, 0.0], [2.0, 0.0]];
        let fb = forward_block(x.view(), wb.view());
        assert_eq!(fb.column(0), array![-0.5, 5.5]);
        assert_eq!(fb.column(1), array![1.0, -1.0]);
        let ab = adjoint_block(x.view(), array![[2.0], [-0.5]].view());
        assert_eq!(ab.column(0), array![2.5, 4.0, -0.5]);
    }
}
