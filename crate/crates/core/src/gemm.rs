//! Thin safe wrapper over the `matrixmultiply` GEMM kernel.

use crate::tensor::Tensor;

/// Borrowed strided view of a tensor, possibly transposed.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    row_stride: isize,
    col_stride: isize,
}

impl<'a> MatRef<'a> {
    pub(crate) fn normal(t: &'a Tensor) -> Self {
        Self {
            data: t.data(),
            rows: t.rows(),
            cols: t.cols(),
            row_stride: t.cols() as isize,
            col_stride: 1,
        }
    }

    pub(crate) fn transposed(t: &'a Tensor) -> Self {
        Self {
            data: t.data(),
            rows: t.cols(),
            cols: t.rows(),
            row_stride: 1,
            col_stride: t.cols() as isize,
        }
    }
}

/// `out = a · b + beta · out`.
///
/// Shapes are asserted; callers validate user-facing shapes beforehand.
pub(crate) fn gemm(a: MatRef<'_>, b: MatRef<'_>, out: &mut Tensor, beta: f64) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(k, b.rows, "gemm inner dimension");
    assert_eq!(out.shape(), (m, n), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.data_mut().iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let out_cols = out.cols() as isize;
    // SAFETY: every view covers exactly rows*cols elements of its backing
    // slice under the given strides, and `out` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.row_stride,
            a.col_stride,
            b.data.as_ptr(),
            b.row_stride,
            b.col_stride,
            beta,
            out.data_mut().as_mut_ptr(),
            out_cols,
            1,
        );
    }
}
