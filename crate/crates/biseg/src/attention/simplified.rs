//! Simplified attention `Z = X X^T Y` and its closed-form gradients.
//!
//! The simplified operation drops the softmax, the re-weight maps, and the
//! concatenation, which makes the backward pass expressible in closed form.
//! Gradients come in two algebraically equal routes: the production matrix
//! form, `O(N^2 d)`, and a literal Kronecker-product/commutation-matrix
//! evaluation that materializes `(N N_X) x (N N_X)` operators and is only
//! tractable at tiny sizes. The matrix route is the one the pipeline uses;
//! the Kronecker route exists to verify it.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

fn check_rows(op: &'static str, x: &Matrix, y: &Matrix) -> Result<()> {
    if x.rows() != y.rows() {
        return Err(Error::Dimension {
            op,
            detail: format!("x has {} rows, y has {} rows", x.rows(), y.rows()),
        });
    }
    Ok(())
}

/// `Z = X X^T Y`.
pub fn simplified_forward(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    check_rows("simplified_forward", x, y)?;
    x.matmul(&x.transpose())?.matmul(y)
}

/// `dL/dX = U Y^T X + Y U^T X` where `U = dL/dZ`.
///
/// The two terms are the sensitivities of the left and right `X` factors;
/// no Kronecker product is materialized.
pub fn simplified_grad_x(x: &Matrix, y: &Matrix, upstream: &Matrix) -> Result<Matrix> {
    check_rows("simplified_grad_x", x, y)?;
    if upstream.shape() != (x.rows(), y.cols()) {
        return Err(Error::Dimension {
            op: "simplified_grad_x",
            detail: format!(
                "upstream shape {:?} does not match Z shape ({}, {})",
                upstream.shape(),
                x.rows(),
                y.cols()
            ),
        });
    }
    let term1 = upstream.matmul(&y.transpose())?.matmul(x)?;
    let term2 = y.matmul(&upstream.transpose())?.matmul(x)?;
    term1.add(&term2)
}

/// `dL/dY = X X^T U` where `U = dL/dZ`.
pub fn simplified_grad_y(x: &Matrix, y: &Matrix, upstream: &Matrix) -> Result<Matrix> {
    check_rows("simplified_grad_y", x, y)?;
    if upstream.shape() != (x.rows(), y.cols()) {
        return Err(Error::Dimension {
            op: "simplified_grad_y",
            detail: format!(
                "upstream shape {:?} does not match Z shape ({}, {})",
                upstream.shape(),
                x.rows(),
                y.cols()
            ),
        });
    }
    x.matmul(&x.transpose())?.matmul(upstream)
}

// ---------------------------------------------------------------------------
// Kronecker route. Column-major vectorization throughout, matching the
// identity vec(A M B) = (B^T kron A) vec(M).
// ---------------------------------------------------------------------------

/// Kronecker product `a kron b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for p in 0..br {
                for q in 0..bc {
                    out[(i * br + p, j * bc + q)] = aij * b[(p, q)];
                }
            }
        }
    }
    out
}

/// Commutation matrix `K(m, n)` with `K(m, n) vec(A) = vec(A^T)` for `A`
/// of shape `m x n` under column-major vec.
pub fn commutation_matrix(m: usize, n: usize) -> Matrix {
    let mut k = Matrix::zeros(m * n, m * n);
    for i in 0..m {
        for j in 0..n {
            // vec(A)[i + j m] = A[i][j]; vec(A^T)[j + i n] = A[i][j]
            k[(j + i * n, i + j * m)] = 1.0;
        }
    }
    k
}

/// Column-major vectorization as an `(rows * cols) x 1` matrix.
pub fn vec_cm(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows() * m.cols(), 1);
    let mut idx = 0;
    for c in 0..m.cols() {
        for r in 0..m.rows() {
            out[(idx, 0)] = m[(r, c)];
            idx += 1;
        }
    }
    out
}

/// Inverse of [`vec_cm`].
pub fn unvec_cm(v: &Matrix, rows: usize, cols: usize) -> Result<Matrix> {
    if v.cols() != 1 || v.rows() != rows * cols {
        return Err(Error::Dimension {
            op: "unvec_cm",
            detail: format!("vector {:?} cannot fill {rows}x{cols}", v.shape()),
        });
    }
    let mut out = Matrix::zeros(rows, cols);
    let mut idx = 0;
    for c in 0..cols {
        for r in 0..rows {
            out[(r, c)] = v[(idx, 0)];
            idx += 1;
        }
    }
    Ok(out)
}

/// `dL/dX` evaluated literally through the Kronecker identity:
/// `vec(dL/dX) = [(X^T Y) kron E_N] vec(U) + K(N_X, N) (Y kron X^T) vec(U)`.
pub fn simplified_grad_x_kronecker(x: &Matrix, y: &Matrix, upstream: &Matrix) -> Result<Matrix> {
    check_rows("simplified_grad_x_kronecker", x, y)?;
    let n = x.rows();
    let n_x = x.cols();
    let u = vec_cm(upstream);

    let xty = x.transpose().matmul(y)?;
    let term1 = kron(&xty, &Matrix::identity(n)).matmul(&u)?;
    let term2 = commutation_matrix(n_x, n)
        .matmul(&kron(y, &x.transpose()))?
        .matmul(&u)?;
    unvec_cm(&term1.add(&term2)?, n, n_x)
}

/// `dL/dY` evaluated literally: `vec(dL/dY) = (E_{N_Y} kron X X^T) vec(U)`.
pub fn simplified_grad_y_kronecker(x: &Matrix, y: &Matrix, upstream: &Matrix) -> Result<Matrix> {
    check_rows("simplified_grad_y_kronecker", x, y)?;
    let xxt = x.matmul(&x.transpose())?;
    let v = kron(&Matrix::identity(y.cols()), &xxt).matmul(&vec_cm(upstream))?;
    unvec_cm(&v, y.rows(), y.cols())
}
