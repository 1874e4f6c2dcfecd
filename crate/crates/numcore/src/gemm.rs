use ndarray::linalg::general_mat_mul;
use ndarray::ArrayView2;
use ndarray::ArrayViewMut2;

/// `c = op(a) * op(b) (+ c when accumulate)` on row-major buffers.
///
/// `a` is stored as `m x k` (or `k x m` when `trans_a`), `b` as `k x n`
/// (or `n x k` when `trans_b`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    let a = if trans_a {
        ArrayView2::from_shape((k, m), a).expect("lhs buffer").reversed_axes()
    } else {
        ArrayView2::from_shape((m, k), a).expect("lhs buffer")
    };
    let b = if trans_b {
        ArrayView2::from_shape((n, k), b).expect("rhs buffer").reversed_axes()
    } else {
        ArrayView2::from_shape((k, n), b).expect("rhs buffer")
    };
    let mut c = ArrayViewMut2::from_shape((m, n), c).expect("output buffer");
    let beta = if accumulate { 1.0 } else { 0.0 };
    general_mat_mul(1.0, &a, &b, beta, &mut c);
}
