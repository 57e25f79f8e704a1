//! Dense linear-algebra helpers on top of nalgebra with deterministic
//! ordering and sign conventions.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_sym<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    sym(&gaussian(n, n, rng))
}

/// Same matrix rescaled to unit Frobenius norm (zero stays zero).
pub fn unit_frobenius(m: Mat) -> Mat {
    let nrm = m.norm();
    if nrm > 0.0 {
        m / nrm
    } else {
        m
    }
}

pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn inner(a: &Mat, b: &Mat) -> f64 {
    a.dot(b)
}

/// Flip `v` so its first entry with magnitude above `1e-12 * max|v|` is positive.
fn sign_fix(col: &mut [f64]) -> bool {
    let scale = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return false;
    }
    for &x in col.iter() {
        if x.abs() > 1e-12 * scale {
            if x < 0.0 {
                col.iter_mut().for_each(|y| *y = -*y);
                return true;
            }
            return false;
        }
    }
    false
}

/// Symmetric eigendecomposition with eigenvalues in descending order and each
/// eigenvector's first nonzero entry positive.
pub fn sym_eig(s: &Mat) -> (Vector, Mat) {
    let n = s.nrows();
    let eig = nalgebra::SymmetricEigen::new(sym(s));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Mat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let mut col: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        sign_fix(&mut col);
        vectors.set_column(k, &Vector::from_vec(col));
    }
    (values, vectors)
}

pub fn sym_eigvals(s: &Mat) -> Vector {
    sym_eig(s).0
}

/// Thin SVD `A = U diag(s) Vᵀ` for `n ≥ m`: U is n×m, V is m×m, s descending.
/// Each left singular vector's first nonzero entry is positive (the paired
/// right vector is flipped with it). Zero singular values receive left vectors
/// completing an orthonormal set.
pub fn svd(a: &Mat) -> (Mat, Vector, Mat) {
    let (n, m) = a.shape();
    if n < m {
        let (u, s, v) = svd(&a.transpose());
        return (v, s, u);
    }
    let dec = nalgebra::SVD::new(a.clone(), true, true);
    let u_raw = dec.u.expect("svd u");
    let vt_raw = dec.v_t.expect("svd v_t");
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));
    let mut u = Mat::zeros(n, m);
    let mut v = Mat::zeros(m, m);
    let mut s = Vector::zeros(m);
    for (k, &i) in order.iter().enumerate() {
        s[k] = dec.singular_values[i];
        let mut ucol: Vec<f64> = u_raw.column(i).iter().copied().collect();
        let mut vcol: Vec<f64> = vt_raw.row(i).iter().copied().collect();
        if sign_fix(&mut ucol) {
            vcol.iter_mut().for_each(|y| *y = -*y);
        }
        u.set_column(k, &Vector::from_vec(ucol));
        v.set_column(k, &Vector::from_vec(vcol));
    }
    (u, s, v)
}

pub fn singular_values(a: &Mat) -> Vector {
    let mut s = a.singular_values();
    s.as_mut_slice().sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn trace_norm(a: &Mat) -> f64 {
    a.singular_values().sum()
}

/// Orthogonal polar factor `U Vᵀ` of a tall matrix.
pub fn polar(a: &Mat) -> Mat {
    let (u, _, v) = svd(a);
    u * v.transpose()
}

/// Q factor of a thin QR decomposition normalized so that R has a
/// nonnegative diagonal.
pub fn qf(a: &Mat) -> Mat {
    let qr = a.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    qf(&gaussian(n, n, rng))
}

pub fn random_stiefel<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Mat {
    qf(&gaussian(n, m, rng))
}

/// Leading `m` eigenvectors (columns) of a symmetric matrix.
pub fn top_eigvecs(s: &Mat, m: usize) -> Mat {
    let (_, v) = sym_eig(s);
    v.columns(0, m).into_owned()
}

/// Orthonormal basis of the orthogonal complement of the column span of `q`
/// (assumed orthonormal), as an n×(n−m) matrix.
pub fn complement_basis(q: &Mat) -> Mat {
    let n = q.nrows();
    let m = q.ncols();
    let p = Mat::identity(n, n) - q * q.transpose();
    top_eigvecs(&p, n - m)
}

pub fn cross3(a: &Vector, b: &Vector) -> Vector {
    Vector::from_vec(vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}

pub fn diag(values: &[f64]) -> Mat {
    Mat::from_diagonal(&Vector::from_column_slice(values))
}

pub fn from_rows(rows: &[Vec<f64>]) -> Mat {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    Mat::from_fn(r, c, |i, j| rows[i][j])
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Least-squares solution of `a x ≈ b` and the residual norm.
pub fn lstsq(a: &Mat, b: &Vector) -> (Vector, f64) {
    let dec = nalgebra::SVD::new(a.clone(), true, true);
    let x = dec
        .solve(b, 1e-14 * dec.singular_values.max().max(1e-300))
        .expect("svd solve");
    let r = (a * &x - b).norm();
    (x, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eig_sorted_and_reconstructs() {
        let mut r = rng(3);
        let s = gaussian_sym(5, &mut r);
        let (vals, vecs) = sym_eig(&s);
        for i in 1..5 {
            assert!(vals[i - 1] >= vals[i]);
        }
        let rec = &vecs * Mat::from_diagonal(&vals) * vecs.transpose();
        assert!((rec - &s).norm() < 1e-12);
        for j in 0..5 {
            let first = vecs.column(j).iter().find(|x| x.abs() > 1e-12).copied().unwrap();
            assert!(first > 0.0);
        }
    }

    #[test]
    fn svd_thin_sorted() {
        let mut r = rng(5);
        let a = gaussian(5, 3, &mut r);
        let (u, s, v) = svd(&a);
        assert_eq!(u.shape(), (5, 3));
        assert!(s[0] >= s[1] && s[1] >= s[2]);
        assert!((&u * Mat::from_diagonal(&s) * v.transpose() - &a).norm() < 1e-12);
        assert!((u.transpose() * &u - Mat::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn svd_wide_input() {
        let mut r = rng(6);
        let a = gaussian(2, 4, &mut r);
        let (u, s, v) = svd(&a);
        assert!((&u * Mat::from_diagonal(&s) * v.transpose() - &a).norm() < 1e-12);
    }

    #[test]
    fn qf_positive_diagonal() {
        let mut r = rng(1);
        let a = gaussian(4, 2, &mut r);
        let q = qf(&a);
        let rr = q.transpose() * &a;
        assert!(rr[(0, 0)] > 0.0 && rr[(1, 1)] > 0.0);
        assert!((q.transpose() * &q - Mat::identity(2, 2)).norm() < 1e-13);
    }

    #[test]
    fn cross_is_orthogonal() {
        let a = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let b = Vector::from_vec(vec![-1.0, 0.5, 2.0]);
        let c = cross3(&a, &b);
        assert!(c.dot(&a).abs() < 1e-14 && c.dot(&b).abs() < 1e-14);
    }

    #[test]
    fn complement_spans_rest() {
        let mut r = rng(2);
        let q = random_stiefel(5, 2, &mut r);
        let c = complement_basis(&q);
        assert!((q.transpose() * &c).norm() < 1e-12);
        assert!((c.transpose() * &c - Mat::identity(3, 3)).norm() < 1e-12);
    }
}
