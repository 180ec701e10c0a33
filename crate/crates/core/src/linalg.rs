//! Small dense complex-matrix helpers shared by the quantum modules.

use nalgebra::{Complex, Matrix2, Matrix4, SymmetricEigen, Vector2, Vector4};

pub type C64 = Complex<f64>;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;
pub type Ket2 = Vector2<C64>;
pub type Ket4 = Vector4<C64>;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Kronecker product of two single-qubit operators; the first factor is the
/// signal (most significant index).
pub fn kron2(a: &Mat2, b: &Mat2) -> Mat4 {
    Mat4::from_fn(|i, j| a[(i / 2, j / 2)] * b[(i % 2, j % 2)])
}

pub fn kron_ket(a: &Ket2, b: &Ket2) -> Ket4 {
    Ket4::from_fn(|i, _| a[i / 2] * b[i % 2])
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &Mat4) -> (Vec<f64>, Mat4) {
    let sym = hermitize(m);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = Mat4::from_fn(|i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// `(m + m†) / 2`.
pub fn hermitize(m: &Mat4) -> Mat4 {
    (m + m.adjoint()) * r(0.5)
}

/// Principal square root of a positive semidefinite Hermitian matrix;
/// negative eigenvalues from round-off are clipped to zero.
pub fn psd_sqrt(m: &Mat4) -> Mat4 {
    let (vals, vecs) = hermitian_eigen(m);
    let d = Mat4::from_diagonal(&Vector4::from_fn(|i, _| r(vals[i].max(0.0).sqrt())));
    vecs * d * vecs.adjoint()
}

/// Frobenius distance `‖a − b‖`.
pub fn distance(a: &Mat4, b: &Mat4) -> f64 {
    (a - b).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
