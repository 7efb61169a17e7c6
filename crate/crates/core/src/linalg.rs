//! Bounds-checked GEMM over strided views.

use crate::scalar::Scalar;

/// Read-only `rows x cols` view with element `(i, j)` at `i * rs + j * cs`.
#[derive(Clone, Copy)]
pub struct MatRef<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T> MatRef<'a, T> {
    /// Row-major matrix.
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        MatRef {
            data,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        MatRef {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = (self.rows - 1) * self.rs + (self.cols - 1) * self.cs;
            assert!(last < self.data.len(), "matrix view exceeds buffer");
        }
    }
}

/// `c = alpha * a * b + beta * c` with `c` row-major.
pub fn gemm<T: Scalar>(
    alpha: T,
    a: MatRef<'_, T>,
    b: MatRef<'_, T>,
    beta: T,
    c: &mut [T],
    rows: usize,
    cols: usize,
) {
    assert_eq!(a.rows, rows);
    assert_eq!(b.cols, cols);
    assert_eq!(a.cols, b.rows);
    assert!(c.len() >= rows * cols);
    a.check();
    b.check();
    if rows == 0 || cols == 0 {
        return;
    }
    // SAFETY: views were bounds-checked above and `c` holds rows * cols.
    unsafe {
        T::gemm_raw(
            rows,
            a.cols,
            cols,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            cols as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_product_with_transposes() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 - 2.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5).collect(); // 3x4
        let mut c = vec![1.0; 8];
        gemm(
            2.0,
            MatRef::new(&a, 2, 3),
            MatRef::new(&b, 3, 4),
            1.0,
            &mut c,
            2,
            4,
        );
        for i in 0..2 {
            for j in 0..4 {
                let naive: f64 = (0..3).map(|k| a[i * 3 + k] * b[k * 4 + j]).sum();
                assert_eq!(c[i * 4 + j], 1.0 + 2.0 * naive);
            }
        }
        // (b^T a^T) = (a b)^T
        let mut ct = vec![0.0; 8];
        gemm(
            1.0,
            MatRef::new(&b, 3, 4).t(),
            MatRef::new(&a, 2, 3).t(),
            0.0,
            &mut ct,
            4,
            2,
        );
        for i in 0..2 {
            for j in 0..4 {
                assert_eq!(ct[j * 2 + i] * 2.0 + 1.0, c[i * 4 + j]);
            }
        }
    }
}
