/// Row/column strides of a matrix view over a flat slice.
#[derive(Clone, Copy)]
pub(crate) struct Strides {
    pub row: isize,
    pub col: isize,
}

impl Strides {
    /// Row-major `rows × cols` matrix.
    pub fn row_major(cols: usize) -> Self {
        Self { row: cols as isize, col: 1 }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn transposed(cols: usize) -> Self {
        Self { row: 1, col: cols as isize }
    }
}

/// `c ← a·b + beta·c` where `a` is `m×k`, `b` is `k×n` and `c` is a
/// row-major `m×n` block.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    sa: Strides,
    b: &[f64],
    sb: Strides,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let span = |s: Strides, rows: usize, cols: usize| {
        (rows as isize - 1) * s.row + (cols as isize - 1) * s.col + 1
    };
    assert!(span(sa, m, k) as usize <= a.len());
    assert!(span(sb, k, n) as usize <= b.len());
    // SAFETY: the asserts above bound every index matrixmultiply touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.row,
            sa.col,
            b.as_ptr(),
            sb.row,
            sb.col,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
