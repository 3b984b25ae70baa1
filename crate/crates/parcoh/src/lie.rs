//! Matrix Lie group backends and Lie-algebra operations.
//!
//! Three backends are supported: SU(2) (compact, positive-definite form),
//! SL(2,R) (noncompact, indefinite form) and U(1)^k (abelian). Group and
//! algebra elements are stored as small complex matrices; the algebra also
//! has a fixed basis so that operators (Ad, ad, the dexp series) can be
//! expressed as real d x d matrices in basis coordinates.
//!
//! Conventions:
//! - the invariant form is trace-based per backend: -tr(XY) for su2,
//!   tr(XY) for sl2r, and the coordinate dot product for u1k (which equals
//!   -Re tr(XY) on imaginary diagonals);
//! - the Cartan 3-form is normalized as
//!   lambda_g(u,v,w) = 1/2 * triple(g^-1 u, g^-1 v, g^-1 w);
//! - the 1-form theta is realized as
//!   theta(X)_a(v) = 1/2 * X . (v a^-1 + a^-1 v).
//!
//! The last two scales are conventions validated by the verification suites
//! in `conjclass` and `moduli` rather than imposed externally.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tol;

/// Errors produced by the exponential-map machinery.
#[derive(Debug, Error)]
pub enum LieError {
    /// The Newton iteration for the logarithm failed to converge, or the
    /// solution fails the regularity test for the exponential map.
    #[error("not in the regular set of the exponential map: {reason}")]
    NotInRegularSet { reason: String },
}

/// Identifies one of the supported matrix groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BackendId {
    /// SU(2): unitary 2x2 with determinant 1.
    Su2,
    /// SL(2,R): real 2x2 with determinant 1.
    Sl2r,
    /// U(1)^k: unimodular diagonal k x k.
    U1(usize),
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendId::Su2 => write!(f, "su2"),
            BackendId::Sl2r => write!(f, "sl2r"),
            BackendId::U1(1) => write!(f, "u1"),
            BackendId::U1(k) => write!(f, "u1x{k}"),
        }
    }
}

impl FromStr for BackendId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "su2" => Ok(BackendId::Su2),
            "sl2r" => Ok(BackendId::Sl2r),
            "u1" => Ok(BackendId::U1(1)),
            other => {
                if let Some(k) = other.strip_prefix("u1x") {
                    let k: usize = k
                        .parse()
                        .map_err(|_| format!("invalid torus rank in backend `{other}`"))?;
                    if k == 0 {
                        return Err("torus rank must be at least 1".to_string());
                    }
                    Ok(BackendId::U1(k))
                } else {
                    Err(format!(
                        "unknown backend `{other}` (expected su2, sl2r, u1 or u1x<k>)"
                    ))
                }
            }
        }
    }
}

/// The invariant symmetric bilinear form of a backend.
///
/// Evaluation is trace-based: X . Y = sign * Re tr(XY). The sign is -1 for
/// su2 (making the form positive definite) and for u1k (where it reduces to
/// the coordinate dot product), +1 for sl2r (indefinite, nondegenerate).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearForm {
    pub backend: BackendId,
    pub sign: f64,
}

impl BilinearForm {
    pub fn for_backend(id: BackendId) -> Self {
        let sign = match id {
            BackendId::Su2 | BackendId::U1(_) => -1.0,
            BackendId::Sl2r => 1.0,
        };
        BilinearForm { backend: id, sign }
    }

    /// X . Y on algebra elements.
    pub fn eval(&self, x: &AlgebraElement, y: &AlgebraElement) -> f64 {
        self.eval_raw(&x.m, &y.m)
    }

    /// Trace-rule evaluation on raw ambient matrices. Useful when one
    /// argument is a tangent expression that lies in the algebra but has
    /// not been wrapped.
    pub fn eval_raw(&self, x: &DMatrix<Complex64>, y: &DMatrix<Complex64>) -> f64 {
        let n = x.nrows();
        let mut tr = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                tr += x[(i, j)] * y[(j, i)];
            }
        }
        self.sign * tr.re
    }

    /// Gram matrix of the form on the canonical basis.
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let backend = Backend::from_id(self.backend);
        let basis = backend.basis();
        let d = basis.len();
        DMatrix::from_fn(d, d, |i, j| self.eval(&basis[i], &basis[j]))
    }

    /// Whether the Gram matrix has full numerical rank.
    pub fn is_nondegenerate(&self) -> bool {
        let sigma = crate::linalg::singular_values(&self.gram_matrix());
        let max = sigma.max();
        sigma.iter().all(|s| *s > tol::RANK_RELATIVE * max)
    }
}

/// A matrix Lie group backend: identity of the group, ambient matrix size,
/// algebra dimension and default invariant form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Backend {
    pub id: BackendId,
    pub matrix_size: usize,
    pub dim: usize,
    pub form: BilinearForm,
}

impl Backend {
    pub fn su2() -> Self {
        Backend::from_id(BackendId::Su2)
    }

    pub fn sl2r() -> Self {
        Backend::from_id(BackendId::Sl2r)
    }

    pub fn u1(k: usize) -> Self {
        assert!(k >= 1, "torus rank must be at least 1");
        Backend::from_id(BackendId::U1(k))
    }

    pub fn from_id(id: BackendId) -> Self {
        let (matrix_size, dim) = match id {
            BackendId::Su2 | BackendId::Sl2r => (2, 3),
            BackendId::U1(k) => (k, k),
        };
        Backend {
            id,
            matrix_size,
            dim,
            form: BilinearForm::for_backend(id),
        }
    }

    /// The identity group element.
    pub fn identity(&self) -> GroupElement {
        GroupElement {
            backend: self.id,
            m: DMatrix::identity(self.matrix_size, self.matrix_size),
        }
    }

    /// The zero algebra element.
    pub fn zero(&self) -> AlgebraElement {
        AlgebraElement {
            backend: self.id,
            m: DMatrix::zeros(self.matrix_size, self.matrix_size),
        }
    }

    /// Fixed basis of the algebra.
    ///
    /// su2: e_k = -(i/2) sigma_k, so that [e1,e2] = e3 cyclically and
    /// e_k . e_k = 1/2 under -tr. sl2r: b1 = diag(1,-1), b2 = [[0,1],[1,0]],
    /// b3 = [[0,1],[-1,0]] with Gram diag(2,2,-2) under tr. u1k: i times the
    /// m-th diagonal unit.
    pub fn basis(&self) -> Vec<AlgebraElement> {
        let i = Complex64::new(0.0, 1.0);
        let half = Complex64::new(0.5, 0.0);
        match self.id {
            BackendId::Su2 => {
                let e1 = DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        Complex64::new(0.0, 0.0),
                        -i * half,
                        -i * half,
                        Complex64::new(0.0, 0.0),
                    ],
                );
                let e2 = DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        Complex64::new(0.0, 0.0),
                        Complex64::new(-0.5, 0.0),
                        Complex64::new(0.5, 0.0),
                        Complex64::new(0.0, 0.0),
                    ],
                );
                let e3 = DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        -i * half,
                        Complex64::new(0.0, 0.0),
                        Complex64::new(0.0, 0.0),
                        i * half,
                    ],
                );
                [e1, e2, e3]
                    .into_iter()
                    .map(|m| AlgebraElement { backend: self.id, m })
                    .collect()
            }
            BackendId::Sl2r => {
                let b1 = DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        Complex64::new(1.0, 0.0),
                        Complex64::new(0.0, 0.0),
                        Complex64::new(0.0, 0.0),
                        Complex64::new(-1.0, 0.0),
                    ],
                );
                let b2 = DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        Complex64::new(0.0, 0.0),
                        Complex64::new(1.0, 0.0),
                        Complex64::new(1.0, 0.0),
                        Complex64::new(0.0, 0.0),
                    ],
                );
                let b3 = DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        Complex64::new(0.0, 0.0),
                        Complex64::new(1.0, 0.0),
                        Complex64::new(-1.0, 0.0),
                        Complex64::new(0.0, 0.0),
                    ],
                );
                [b1, b2, b3]
                    .into_iter()
                    .map(|m| AlgebraElement { backend: self.id, m })
                    .collect()
            }
            BackendId::U1(k) => (0..k)
                .map(|m| {
                    let mut e = DMatrix::zeros(k, k);
                    e[(m, m)] = i;
                    AlgebraElement { backend: self.id, m: e }
                })
                .collect(),
        }
    }

    /// Coordinates of an algebra element in the canonical basis.
    pub fn coords(&self, x: &AlgebraElement) -> DVector<f64> {
        assert_eq!(self.id, x.backend, "backend mismatch");
        match self.id {
            BackendId::Su2 => DVector::from_vec(vec![
                -2.0 * x.m[(0, 1)].im,
                -2.0 * x.m[(0, 1)].re,
                -2.0 * x.m[(0, 0)].im,
            ]),
            BackendId::Sl2r => DVector::from_vec(vec![
                x.m[(0, 0)].re,
                0.5 * (x.m[(0, 1)].re + x.m[(1, 0)].re),
                0.5 * (x.m[(0, 1)].re - x.m[(1, 0)].re),
            ]),
            BackendId::U1(k) => DVector::from_fn(k, |m, _| x.m[(m, m)].im),
        }
    }

    /// Algebra element with the given coordinates.
    pub fn from_coords(&self, v: &DVector<f64>) -> AlgebraElement {
        assert_eq!(v.len(), self.dim, "coordinate length mismatch");
        let basis = self.basis();
        let mut m = DMatrix::zeros(self.matrix_size, self.matrix_size);
        for (i, e) in basis.iter().enumerate() {
            m += &e.m * Complex64::new(v[i], 0.0);
        }
        AlgebraElement { backend: self.id, m }
    }

    /// Whether a raw matrix satisfies the group's defining relations.
    pub fn is_group_member(&self, m: &DMatrix<Complex64>) -> bool {
        if m.nrows() != self.matrix_size || m.ncols() != self.matrix_size {
            return false;
        }
        let t = tol::MEMBERSHIP;
        match self.id {
            BackendId::Su2 => {
                let unitary = (m.adjoint() * m
                    - DMatrix::<Complex64>::identity(2, 2))
                .norm();
                let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
                unitary <= t && (det - Complex64::new(1.0, 0.0)).norm() <= t
            }
            BackendId::Sl2r => {
                let imag = m.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
                let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
                imag <= t && (det - Complex64::new(1.0, 0.0)).norm() <= t
            }
            BackendId::U1(k) => {
                let mut off = 0.0;
                let mut diag = 0.0f64;
                for i in 0..k {
                    for j in 0..k {
                        if i != j {
                            off += m[(i, j)].norm_sqr();
                        }
                    }
                    diag = diag.max((m[(i, i)].norm() - 1.0).abs());
                }
                off.sqrt() <= t && diag <= t
            }
        }
    }

    /// Whether a raw matrix satisfies the algebra's tangent condition.
    pub fn is_algebra_member(&self, m: &DMatrix<Complex64>) -> bool {
        if m.nrows() != self.matrix_size || m.ncols() != self.matrix_size {
            return false;
        }
        let t = tol::MEMBERSHIP;
        match self.id {
            BackendId::Su2 => {
                let skew = (m + m.adjoint()).norm();
                skew <= t && m.trace().norm() <= t
            }
            BackendId::Sl2r => {
                let imag = m.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
                imag <= t && m.trace().norm() <= t
            }
            BackendId::U1(k) => {
                let mut off = 0.0;
                let mut re = 0.0f64;
                for i in 0..k {
                    for j in 0..k {
                        if i != j {
                            off += m[(i, j)].norm_sqr();
                        }
                    }
                    re = re.max(m[(i, i)].re.abs());
                }
                off.sqrt() <= t && re <= t
            }
        }
    }

    /// Orthogonal projection of a raw matrix onto the algebra (used to clean
    /// tangent expressions before coordinate extraction).
    pub fn project_to_algebra(&self, m: &DMatrix<Complex64>) -> AlgebraElement {
        let n = self.matrix_size;
        let m = match self.id {
            BackendId::Su2 => {
                let skew = (m - m.adjoint()) * Complex64::new(0.5, 0.0);
                let tr = skew.trace() / Complex64::new(n as f64, 0.0);
                skew - DMatrix::identity(n, n) * tr
            }
            BackendId::Sl2r => {
                let real = m.map(|z| Complex64::new(z.re, 0.0));
                let tr = real.trace() / Complex64::new(n as f64, 0.0);
                real - DMatrix::identity(n, n) * tr
            }
            BackendId::U1(k) => {
                DMatrix::from_fn(k, k, |i, j| {
                    if i == j {
                        Complex64::new(0.0, m[(i, i)].im)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
            }
        };
        AlgebraElement { backend: self.id, m }
    }

    /// Random algebra element with normal coordinates of the given scale.
    pub fn random_algebra<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> AlgebraElement {
        let v = DVector::from_fn(self.dim, |_, _| {
            let g: f64 = StandardNormal.sample(rng);
            scale * g
        });
        self.from_coords(&v)
    }

    /// Random group element: Haar-uniform for su2 (normalized quaternion),
    /// bounded-normal exponential coordinates for sl2r, uniform angles for
    /// u1k.
    pub fn random_group<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        match self.id {
            BackendId::Su2 => {
                let mut q = [0.0f64; 4];
                loop {
                    for qi in q.iter_mut() {
                        *qi = StandardNormal.sample(rng);
                    }
                    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if n > 1e-6 {
                        for qi in q.iter_mut() {
                            *qi /= n;
                        }
                        break;
                    }
                }
                let (a, b, c, d) = (q[0], q[1], q[2], q[3]);
                let m = DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        Complex64::new(a, b),
                        Complex64::new(c, d),
                        Complex64::new(-c, d),
                        Complex64::new(a, -b),
                    ],
                );
                GroupElement { backend: self.id, m }
            }
            BackendId::Sl2r => {
                let mut x = self.random_algebra(rng, 0.6);
                let n = x.norm();
                if n > 1.5 {
                    x = x.scale(1.5 / n);
                }
                exp(&x)
            }
            BackendId::U1(k) => {
                let m = DMatrix::from_fn(k, k, |i, j| {
                    if i == j {
                        let theta: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                        Complex64::new(theta.cos(), theta.sin())
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                });
                GroupElement { backend: self.id, m }
            }
        }
    }
}

/// A point of the group, stored as its ambient matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    pub backend: BackendId,
    pub m: DMatrix<Complex64>,
}

impl GroupElement {
    /// Wraps a raw matrix after checking the backend's membership test.
    pub fn new(backend: BackendId, m: DMatrix<Complex64>) -> Self {
        debug_assert!(
            Backend::from_id(backend).is_group_member(&m),
            "matrix fails {backend} group membership"
        );
        GroupElement { backend, m }
    }

    pub fn mul(&self, other: &GroupElement) -> GroupElement {
        assert_eq!(self.backend, other.backend, "backend mismatch");
        GroupElement {
            backend: self.backend,
            m: &self.m * &other.m,
        }
    }

    /// Group inverse, computed exactly per backend (conjugate transpose for
    /// su2, adjugate for sl2r, conjugate diagonal for u1k).
    pub fn inverse(&self) -> GroupElement {
        let m = match self.backend {
            BackendId::Su2 => self.m.adjoint(),
            BackendId::Sl2r => DMatrix::from_row_slice(
                2,
                2,
                &[self.m[(1, 1)], -self.m[(0, 1)], -self.m[(1, 0)], self.m[(0, 0)]],
            ),
            BackendId::U1(k) => DMatrix::from_fn(k, k, |i, j| {
                if i == j {
                    self.m[(i, i)].conj()
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }),
        };
        GroupElement { backend: self.backend, m }
    }

    /// q g q^-1.
    pub fn conjugated_by(&self, q: &GroupElement) -> GroupElement {
        q.mul(self).mul(&q.inverse())
    }

    pub fn is_identity(&self, tolerance: f64) -> bool {
        let n = self.m.nrows();
        (&self.m - DMatrix::<Complex64>::identity(n, n)).norm() <= tolerance
    }

    /// Distance to another element in the ambient Frobenius norm.
    pub fn distance(&self, other: &GroupElement) -> f64 {
        (&self.m - &other.m).norm()
    }

    /// Ad(g)X = g X g^-1; exactly the identity on abelian backends.
    pub fn adjoint_action(&self, x: &AlgebraElement) -> AlgebraElement {
        assert_eq!(self.backend, x.backend, "backend mismatch");
        if matches!(self.backend, BackendId::U1(_)) {
            return x.clone();
        }
        AlgebraElement {
            backend: self.backend,
            m: &self.m * &x.m * self.inverse().m,
        }
    }

    /// The matrix of Ad(g) in the canonical basis coordinates.
    pub fn adjoint_matrix(&self) -> DMatrix<f64> {
        let backend = Backend::from_id(self.backend);
        if matches!(self.backend, BackendId::U1(_)) {
            return DMatrix::identity(backend.dim, backend.dim);
        }
        let basis = backend.basis();
        let d = backend.dim;
        let mut m = DMatrix::zeros(d, d);
        for (j, e) in basis.iter().enumerate() {
            let col = backend.coords(&self.adjoint_action(e));
            m.set_column(j, &col);
        }
        m
    }
}

/// A point of the Lie algebra, stored as its ambient matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement {
    pub backend: BackendId,
    pub m: DMatrix<Complex64>,
}

impl AlgebraElement {
    /// Wraps a raw matrix after checking the backend's tangent condition.
    pub fn new(backend: BackendId, m: DMatrix<Complex64>) -> Self {
        debug_assert!(
            Backend::from_id(backend).is_algebra_member(&m),
            "matrix fails {backend} algebra membership"
        );
        AlgebraElement { backend, m }
    }

    pub fn add(&self, other: &AlgebraElement) -> AlgebraElement {
        assert_eq!(self.backend, other.backend, "backend mismatch");
        AlgebraElement {
            backend: self.backend,
            m: &self.m + &other.m,
        }
    }

    pub fn sub(&self, other: &AlgebraElement) -> AlgebraElement {
        assert_eq!(self.backend, other.backend, "backend mismatch");
        AlgebraElement {
            backend: self.backend,
            m: &self.m - &other.m,
        }
    }

    pub fn scale(&self, s: f64) -> AlgebraElement {
        AlgebraElement {
            backend: self.backend,
            m: &self.m * Complex64::new(s, 0.0),
        }
    }

    /// [X, Y] = XY - YX.
    pub fn bracket(&self, other: &AlgebraElement) -> AlgebraElement {
        assert_eq!(self.backend, other.backend, "backend mismatch");
        AlgebraElement {
            backend: self.backend,
            m: &self.m * &other.m - &other.m * &self.m,
        }
    }

    /// The matrix of ad(X) = [X, -] in the canonical basis coordinates.
    pub fn ad_matrix(&self) -> DMatrix<f64> {
        let backend = Backend::from_id(self.backend);
        let basis = backend.basis();
        let d = backend.dim;
        let mut m = DMatrix::zeros(d, d);
        for (j, e) in basis.iter().enumerate() {
            let col = backend.coords(&self.bracket(e));
            m.set_column(j, &col);
        }
        m
    }

    pub fn norm(&self) -> f64 {
        self.m.norm()
    }
}

/// ad(X)Y = [X, Y].
pub fn ad(x: &AlgebraElement, y: &AlgebraElement) -> AlgebraElement {
    x.bracket(y)
}

/// Triple product A . [B, C].
pub fn triple(a: &AlgebraElement, b: &AlgebraElement, c: &AlgebraElement) -> f64 {
    let form = BilinearForm::for_backend(a.backend);
    form.eval(a, &b.bracket(c))
}

/// Matrix exponential, total on the algebra.
///
/// Diagonal backends exponentiate entrywise; otherwise scaling and squaring
/// with a Taylor series summed to machine precision.
pub fn exp(z: &AlgebraElement) -> GroupElement {
    let m = match z.backend {
        BackendId::U1(k) => DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                z.m[(i, i)].exp()
            } else {
                Complex64::new(0.0, 0.0)
            }
        }),
        _ => exp_series(&z.m),
    };
    GroupElement { backend: z.backend, m }
}

fn exp_series(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = m.nrows();
    let norm = m.norm();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let a = m / Complex64::new(2f64.powi(squarings as i32), 0.0);
    let mut sum = DMatrix::<Complex64>::identity(n, n);
    let mut term = DMatrix::<Complex64>::identity(n, n);
    for k in 1..64 {
        term = &term * &a / Complex64::new(k as f64, 0.0);
        sum += &term;
        if term.norm() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// The operator S(ad Z) = (1 - e^{-ad Z})/ad Z as a real matrix in basis
/// coordinates. dexp_Z = d(left translation by exp Z) composed with this.
pub fn s_operator_matrix(z: &AlgebraElement) -> DMatrix<f64> {
    let d = Backend::from_id(z.backend).dim;
    let a = z.ad_matrix();
    let mut sum = DMatrix::<f64>::identity(d, d);
    let mut term = DMatrix::<f64>::identity(d, d);
    for k in 1..200 {
        term = &term * &a * (-1.0 / (k as f64 + 1.0));
        sum += &term;
        if term.norm() < tol::SERIES_TRUNCATION {
            break;
        }
    }
    sum
}

/// Smallest singular value of S(ad Z); the regularity measure for the
/// exponential map at Z.
pub fn regularity_sigma_min(z: &AlgebraElement) -> f64 {
    let sigma = crate::linalg::singular_values(&s_operator_matrix(z));
    sigma.min()
}

/// The series S(ad Z)V = sum_k (-ad Z)^k V / (k+1)!, truncated when the
/// term norm drops below the series tolerance.
pub fn dexp_body(z: &AlgebraElement, v: &AlgebraElement) -> AlgebraElement {
    assert_eq!(z.backend, v.backend, "backend mismatch");
    let mut sum = v.clone();
    let mut term = v.clone();
    for k in 1..200 {
        term = z.bracket(&term).scale(-1.0 / (k as f64 + 1.0));
        sum = sum.add(&term);
        if term.norm() < tol::SERIES_TRUNCATION {
            break;
        }
    }
    sum
}

/// Derivative of exp at Z in direction V, as the ambient matrix of a tangent
/// vector at exp(Z): the left translate by exp(Z) of S(ad Z)V.
pub fn dexp(z: &AlgebraElement, v: &AlgebraElement) -> DMatrix<Complex64> {
    let g = exp(z);
    &g.m * dexp_body(z, v).m
}

/// Inverts the dexp body operator: solves S(ad Z) V = W for V.
pub fn dexp_body_inv(z: &AlgebraElement, w: &AlgebraElement) -> Result<AlgebraElement, LieError> {
    let backend = Backend::from_id(z.backend);
    let s = s_operator_matrix(z);
    let rhs = backend.coords(w);
    let lu = s.lu();
    match lu.solve(&rhs) {
        Some(v) => Ok(backend.from_coords(&v)),
        None => Err(LieError::NotInRegularSet {
            reason: "dexp operator is singular".to_string(),
        }),
    }
}

/// Principal-branch logarithm where a closed form exists; used to seed the
/// Newton iteration. Returns None outside the principal branch (e.g. for
/// sl2r elements with trace <= -2 other than -I, which have no real
/// logarithm nearby).
pub fn principal_log(g: &GroupElement) -> Option<AlgebraElement> {
    let backend = Backend::from_id(g.backend);
    match g.backend {
        BackendId::Su2 => {
            let cos_t = 0.5 * (g.m[(0, 0)] + g.m[(1, 1)]).re;
            let cos_t = cos_t.clamp(-1.0, 1.0);
            let t = cos_t.acos();
            if t.sin().abs() < 1e-12 {
                if cos_t > 0.0 {
                    // Near the identity: first order is exact enough as a seed.
                    return Some(
                        backend
                            .project_to_algebra(&(&g.m - DMatrix::<Complex64>::identity(2, 2))),
                    );
                }
                // Near -I the logarithm is not regular.
                return None;
            }
            let id2 = DMatrix::<Complex64>::identity(2, 2);
            let n = (&g.m - id2 * Complex64::new(cos_t, 0.0)) / Complex64::new(t.sin(), 0.0);
            Some(backend.project_to_algebra(&(n * Complex64::new(t, 0.0))))
        }
        BackendId::Sl2r => {
            let half_tr = 0.5 * (g.m[(0, 0)] + g.m[(1, 1)]).re;
            let id2 = DMatrix::<Complex64>::identity(2, 2);
            if half_tr > 1.0 + 1e-12 {
                let t = half_tr.acosh();
                let n = (&g.m - id2 * Complex64::new(half_tr, 0.0))
                    / Complex64::new(t.sinh(), 0.0);
                Some(backend.project_to_algebra(&(n * Complex64::new(t, 0.0))))
            } else if half_tr.abs() <= 1.0 - 1e-12 {
                let t = half_tr.acos();
                let n = (&g.m - id2 * Complex64::new(half_tr, 0.0))
                    / Complex64::new(t.sin(), 0.0);
                Some(backend.project_to_algebra(&(n * Complex64::new(t, 0.0))))
            } else if half_tr > 0.0 {
                // Unipotent or identity: g - I is nilpotent, log is exact.
                Some(backend.project_to_algebra(&(&g.m - id2)))
            } else {
                None
            }
        }
        BackendId::U1(k) => {
            let m = DMatrix::from_fn(k, k, |i, j| {
                if i == j {
                    Complex64::new(0.0, g.m[(i, i)].arg())
                } else {
                    Complex64::new(0.0, 0.0)
                }
            });
            Some(AlgebraElement { backend: g.backend, m })
        }
    }
}

/// Logarithm on the regular branch nearest to the hint.
///
/// Newton iteration on the algebra with the dexp operator as the linear
/// solve. Returns Z with exp(Z) = g (to the logarithm convergence
/// tolerance) and with S(ad Z) invertible.
///
/// # Errors
///
/// `NotInRegularSet` when the iteration fails to converge within the
/// iteration cap or the solution fails the regularity test.
pub fn log_regular(g: &GroupElement, hint: &AlgebraElement) -> Result<AlgebraElement, LieError> {
    assert_eq!(g.backend, hint.backend, "backend mismatch");
    let backend = Backend::from_id(g.backend);
    let mut z = hint.clone();
    for _ in 0..tol::LOG_NEWTON_MAX_ITERS {
        let e = exp(&z);
        let residual = (&g.m - &e.m).norm();
        if residual <= tol::LOG_CONVERGENCE {
            let sigma = regularity_sigma_min(&z);
            if sigma <= tol::EXP_REGULARITY_SIGMA {
                return Err(LieError::NotInRegularSet {
                    reason: format!(
                        "converged but regularity sigma_min = {sigma:.3e} is below threshold"
                    ),
                });
            }
            return Ok(z);
        }
        let e_inv_g = e.inverse().m * &g.m;
        let n = e_inv_g.nrows();
        let w = backend.project_to_algebra(&(e_inv_g - DMatrix::<Complex64>::identity(n, n)));
        let step = dexp_body_inv(&z, &w)?;
        z = z.add(&step);
    }
    let residual = (&g.m - exp(&z).m).norm();
    Err(LieError::NotInRegularSet {
        reason: format!(
            "Newton did not converge in {} iterations (residual {residual:.3e})",
            tol::LOG_NEWTON_MAX_ITERS
        ),
    })
}

/// The Cartan 3-form at g on ambient tangent vectors u, v, w at g:
/// lambda_g(u,v,w) = 1/2 * triple(g^-1 u, g^-1 v, g^-1 w).
pub fn cartan3(
    g: &GroupElement,
    u: &DMatrix<Complex64>,
    v: &DMatrix<Complex64>,
    w: &DMatrix<Complex64>,
) -> f64 {
    let backend = Backend::from_id(g.backend);
    let gi = g.inverse();
    let tu = backend.project_to_algebra(&(&gi.m * u));
    let tv = backend.project_to_algebra(&(&gi.m * v));
    let tw = backend.project_to_algebra(&(&gi.m * w));
    0.5 * triple(&tu, &tv, &tw)
}

fn gauss_legendre_01() -> &'static Vec<(f64, f64)> {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = tol::QUADRATURE_NODES;
        let mut nodes = Vec::with_capacity(n);
        for i in 1..=n {
            // Newton on the Legendre polynomial P_n from the Chebyshev guess.
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0f64, x);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (mut p0, mut p1) = (1.0f64, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // Map from [-1, 1] to [0, 1].
            nodes.push((0.5 * (x + 1.0), 0.5 * w));
        }
        nodes
    })
}

/// The radial homotopy operator on forms on the algebra:
/// (h omega)_Z(v_1, ..., v_{p-1}) = integral over [0,1] of
/// t^{p-1} * omega_{tZ}(Z, v_1, ..., v_{p-1}) dt,
/// by Gauss-Legendre quadrature.
///
/// The form is supplied as an evaluation callback taking the base point and
/// the full argument list (whose first entry will be Z).
pub fn homotopy_h<F>(
    degree: usize,
    form: F,
    z: &AlgebraElement,
    vectors: &[AlgebraElement],
) -> f64
where
    F: Fn(&AlgebraElement, &[AlgebraElement]) -> f64,
{
    assert_eq!(
        vectors.len(),
        degree - 1,
        "a degree-{degree} form needs {} contraction vectors",
        degree - 1
    );
    let mut args = Vec::with_capacity(degree);
    args.push(z.clone());
    args.extend_from_slice(vectors);
    let mut total = 0.0;
    for &(t, w) in gauss_legendre_01() {
        let point = z.scale(t);
        total += w * t.powi(degree as i32 - 1) * form(&point, &args);
    }
    total
}

/// The 1-form theta: theta(X)_a(v) = 1/2 * X . (v a^-1 + a^-1 v), where v is
/// an ambient tangent vector at a. Both summands lie in the algebra, so the
/// trace rule of the invariant form applies directly.
pub fn theta_oneform(x: &AlgebraElement, a: &GroupElement, v: &DMatrix<Complex64>) -> f64 {
    assert_eq!(x.backend, a.backend, "backend mismatch");
    let ai = a.inverse();
    let sum = v * &ai.m + &ai.m * v;
    let form = BilinearForm::for_backend(x.backend);
    0.5 * form.eval_raw(&x.m, &sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_backends() -> Vec<Backend> {
        vec![Backend::su2(), Backend::sl2r(), Backend::u1(1), Backend::u1(3)]
    }

    #[test]
    fn exp_of_zero_is_identity() {
        for b in all_backends() {
            let g = exp(&b.zero());
            assert!(g.is_identity(1e-15));
        }
    }

    #[test]
    fn exp_su2_diagonal_case() {
        let b = Backend::su2();
        let t = 0.3;
        let z = AlgebraElement::new(
            b.id,
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    Complex64::new(0.0, t),
                    Complex64::new(0.0, 0.0),
                    Complex64::new(0.0, 0.0),
                    Complex64::new(0.0, -t),
                ],
            ),
        );
        let g = exp(&z);
        assert_abs_diff_eq!(g.m[(0, 0)].re, t.cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(g.m[(0, 0)].im, t.sin(), epsilon = 1e-14);
        assert_abs_diff_eq!(g.m[(1, 1)].re, t.cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(g.m[(1, 1)].im, -t.sin(), epsilon = 1e-14);
    }

    #[test]
    fn exp_sl2r_nilpotent_terminates() {
        let b = Backend::sl2r();
        let z = AlgebraElement::new(
            b.id,
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    Complex64::new(0.0, 0.0),
                    Complex64::new(1.0, 0.0),
                    Complex64::new(0.0, 0.0),
                    Complex64::new(0.0, 0.0),
                ],
            ),
        );
        let g = exp(&z);
        assert_abs_diff_eq!(g.m[(0, 0)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.m[(0, 1)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.m[(1, 0)].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.m[(1, 1)].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn su2_basis_brackets_are_cyclic() {
        let b = Backend::su2();
        let e = b.basis();
        for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
            let bracket = e[i].bracket(&e[j]);
            assert!((&bracket.m - &e[k].m).norm() < 1e-15);
        }
    }

    #[test]
    fn triple_frozen_value_su2() {
        let b = Backend::su2();
        let e = b.basis();
        assert_abs_diff_eq!(triple(&e[2], &e[0], &e[1]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn triple_vanishes_on_u1() {
        let b = Backend::u1(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let x = b.random_algebra(&mut rng, 1.0);
            let y = b.random_algebra(&mut rng, 1.0);
            let z = b.random_algebra(&mut rng, 1.0);
            assert_eq!(triple(&x, &y, &z), 0.0);
        }
    }

    #[test]
    fn cartan3_frozen_value_at_identity() {
        let b = Backend::su2();
        let e = b.basis();
        let g = b.identity();
        let val = cartan3(&g, &e[0].m, &e[1].m, &e[2].m);
        assert_abs_diff_eq!(val, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn cartan3_alternates_and_is_left_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for b in [Backend::su2(), Backend::sl2r()] {
            let g = b.random_group(&mut rng);
            let u = b.random_algebra(&mut rng, 1.0);
            let v = b.random_algebra(&mut rng, 1.0);
            let w = b.random_algebra(&mut rng, 1.0);
            // Tangents at g via left translation.
            let (gu, gv, gw) = (&g.m * &u.m, &g.m * &v.m, &g.m * &w.m);
            assert_abs_diff_eq!(cartan3(&g, &gu, &gu, &gw), 0.0, epsilon = 1e-13);
            // Left invariance: translate by a random h.
            let h = b.random_group(&mut rng);
            let (hu, hv, hw) = (&h.m * &gu, &h.m * &gv, &h.m * &gw);
            let hg = h.mul(&g);
            assert_abs_diff_eq!(
                cartan3(&g, &gu, &gv, &gw),
                cartan3(&hg, &hu, &hv, &hw),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn dexp_at_zero_and_radially() {
        let b = Backend::su2();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = b.random_algebra(&mut rng, 1.0);
        let d = dexp(&b.zero(), &v);
        assert!((d - &v.m).norm() < 1e-14);

        let z = b.random_algebra(&mut rng, 1.0);
        let radial = dexp(&z, &z);
        let expected = exp(&z).m * &z.m;
        assert!((radial - expected).norm() < 1e-13);
    }

    #[test]
    fn dexp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 1e-5;
        for b in [Backend::su2(), Backend::sl2r()] {
            for _ in 0..20 {
                let z = b.random_algebra(&mut rng, 0.8);
                let v = b.random_algebra(&mut rng, 1.0);
                let analytic = dexp(&z, &v);
                let plus = exp(&z.add(&v.scale(h)));
                let minus = exp(&z.add(&v.scale(-h)));
                let fd = (&plus.m - &minus.m) / Complex64::new(2.0 * h, 0.0);
                assert!(
                    (&analytic - fd).norm() < 1e-8,
                    "dexp finite-difference mismatch on {}",
                    b.id
                );
            }
        }
    }

    #[test]
    fn log_regular_identity_and_diagonal() {
        let b = Backend::su2();
        let z = log_regular(&b.identity(), &b.zero()).unwrap();
        assert!(z.norm() < 1e-12);

        let t = 0.3f64;
        let g = GroupElement::new(
            b.id,
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    Complex64::new(t.cos(), t.sin()),
                    Complex64::new(0.0, 0.0),
                    Complex64::new(0.0, 0.0),
                    Complex64::new(t.cos(), -t.sin()),
                ],
            ),
        );
        let z = log_regular(&g, &b.zero()).unwrap();
        assert_abs_diff_eq!(z.m[(0, 0)].im, t, epsilon = 1e-12);
        assert_abs_diff_eq!(z.m[(1, 1)].im, -t, epsilon = 1e-12);
    }

    #[test]
    fn log_regular_recovers_from_noisy_hint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for b in [Backend::su2(), Backend::sl2r(), Backend::u1(2)] {
            for _ in 0..20 {
                let z = b.random_algebra(&mut rng, 0.45);
                let g = exp(&z);
                let hint = z.add(&b.random_algebra(&mut rng, 1e-2));
                let recovered = log_regular(&g, &hint).unwrap();
                assert!(
                    recovered.sub(&z).norm() < 1e-9,
                    "round trip failed on {}",
                    b.id
                );
            }
        }
    }

    #[test]
    fn log_regular_rejects_antipode() {
        let b = Backend::su2();
        let e3 = &b.basis()[2];
        // exp(2 pi e3) = -I lies outside the regular set.
        let hint = e3.scale(2.0 * std::f64::consts::PI);
        let minus_i = GroupElement::new(
            b.id,
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    Complex64::new(-1.0, 0.0),
                    Complex64::new(0.0, 0.0),
                    Complex64::new(0.0, 0.0),
                    Complex64::new(-1.0, 0.0),
                ],
            ),
        );
        assert!(matches!(
            log_regular(&minus_i, &hint),
            Err(LieError::NotInRegularSet { .. })
        ));
    }

    #[test]
    fn principal_log_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for b in [Backend::su2(), Backend::sl2r(), Backend::u1(2)] {
            for _ in 0..20 {
                let g = b.random_group(&mut rng);
                if let Some(z) = principal_log(&g) {
                    // The principal log is a seed, so only require that one
                    // Newton pass from it converges.
                    let exact = log_regular(&g, &z);
                    if let Ok(exact) = exact {
                        assert!(exp(&exact).distance(&g) < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn homotopy_of_zero_point_vanishes() {
        let b = Backend::su2();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = b.random_algebra(&mut rng, 1.0);
        let form = |p: &AlgebraElement, args: &[AlgebraElement]| {
            // Arbitrary smooth 2-form for the test.
            triple(p, &args[0], &args[1])
        };
        let val = homotopy_h(2, form, &b.zero(), &[v]);
        assert_eq!(val, 0.0);
    }

    #[test]
    fn homotopy_of_exact_linear_form() {
        let b = Backend::sl2r();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xi = b.random_algebra(&mut rng, 1.0);
        let z = b.random_algebra(&mut rng, 1.0);
        // The exact 1-form d(xi . X) is constant: its value on a tangent
        // vector v is xi . v. Its radial homotopy at Z is xi . Z.
        let form = |_p: &AlgebraElement, args: &[AlgebraElement]| b.form.eval(&xi, &args[0]);
        let val = homotopy_h(1, form, &z, &[]);
        assert_abs_diff_eq!(val, b.form.eval(&xi, &z), epsilon = 1e-12);
    }

    #[test]
    fn theta_trivial_cases() {
        let b = Backend::su2();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = b.random_algebra(&mut rng, 1.0);
        let w = b.random_algebra(&mut rng, 1.0);
        let a = b.random_group(&mut rng);
        let zero = DMatrix::<Complex64>::zeros(2, 2);
        assert_eq!(theta_oneform(&x, &a, &zero), 0.0);
        assert_abs_diff_eq!(
            theta_oneform(&x, &b.identity(), &w.m),
            b.form.eval(&x, &w),
            epsilon = 1e-14
        );
    }

    #[test]
    fn memberships_hold_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for b in all_backends() {
            for _ in 0..25 {
                let g = b.random_group(&mut rng);
                assert!(b.is_group_member(&g.m), "group membership failed on {}", b.id);
                let x = b.random_algebra(&mut rng, 1.0);
                assert!(
                    b.is_algebra_member(&x.m),
                    "algebra membership failed on {}",
                    b.id
                );
                assert!(b.is_group_member(&exp(&x).m));
                let roundtrip = b.from_coords(&b.coords(&x));
                assert!(roundtrip.sub(&x).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn form_gram_matrices() {
        assert!(BilinearForm::for_backend(BackendId::Su2).is_nondegenerate());
        assert!(BilinearForm::for_backend(BackendId::Sl2r).is_nondegenerate());
        assert!(BilinearForm::for_backend(BackendId::U1(4)).is_nondegenerate());
        let gram = BilinearForm::for_backend(BackendId::Sl2r).gram_matrix();
        assert_abs_diff_eq!(gram[(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gram[(1, 1)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gram[(2, 2)], -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gram[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn backend_id_string_round_trip() {
        for id in [BackendId::Su2, BackendId::Sl2r, BackendId::U1(1), BackendId::U1(5)] {
            let s = id.to_string();
            assert_eq!(s.parse::<BackendId>().unwrap(), id);
        }
        assert!("u1x0".parse::<BackendId>().is_err());
        assert!("so3".parse::<BackendId>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ad_is_a_form_isometry(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for b in [Backend::su2(), Backend::sl2r(), Backend::u1(2)] {
                let g = b.random_group(&mut rng);
                let x = b.random_algebra(&mut rng, 1.0);
                let y = b.random_algebra(&mut rng, 1.0);
                let lhs = b.form.eval(&g.adjoint_action(&x), &g.adjoint_action(&y));
                let rhs = b.form.eval(&x, &y);
                prop_assert!((lhs - rhs).abs() <= tol::FORM_INVARIANCE);
            }
        }

        #[test]
        fn triple_is_fully_alternating(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for b in [Backend::su2(), Backend::sl2r()] {
                let x = b.random_algebra(&mut rng, 1.0);
                let y = b.random_algebra(&mut rng, 1.0);
                let z = b.random_algebra(&mut rng, 1.0);
                let t = triple(&x, &y, &z);
                prop_assert!((t + triple(&y, &x, &z)).abs() <= tol::TRIPLE_ALTERNATING);
                prop_assert!((t + triple(&x, &z, &y)).abs() <= tol::TRIPLE_ALTERNATING);
                prop_assert!((t - triple(&z, &x, &y)).abs() <= tol::TRIPLE_ALTERNATING);
            }
        }

        #[test]
        fn exp_log_round_trip(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for b in [Backend::su2(), Backend::sl2r(), Backend::u1(3)] {
                let mut z = b.random_algebra(&mut rng, 0.5);
                if z.norm() > 1.0 {
                    z = z.scale(1.0 / z.norm());
                }
                let recovered = log_regular(&exp(&z), &z).unwrap();
                prop_assert!(recovered.sub(&z).norm() <= tol::EXP_LOG_ROUNDTRIP);
            }
        }
    }
}
