/// Strides of a matrix operand as (row stride, column stride).
pub(crate) type Strides = (isize, isize);

pub(crate) const ROW_MAJOR: fn(usize) -> Strides = |cols| (cols as isize, 1);
pub(crate) const TRANSPOSED: fn(usize) -> Strides = |cols| (1, cols as isize);

/// `c = a·b + beta·c` with `a` m×k, `b` k×n, `c` m×n (row-major output).
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
    assert!(a.len() >= if m * k == 0 { 0 } else { max_index(m, k, sa) + 1 });
    assert!(b.len() >= if k * n == 0 { 0 } else { max_index(k, n, sb) + 1 });
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0,
            sa.1,
            b.as_ptr(),
            sb.0,
            sb.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn max_index(rows: usize, cols: usize, s: Strides) -> usize {
    (rows - 1) * s.0 as usize + (cols - 1) * s.1 as usize
}
