//! Conjugacy classes and adjoint orbits: membership with real-form class
//! tags, class tangent spaces, the Kirillov orbit form, the tau 2-form on a
//! class, the closed form of the orbit 2-form beta, and the numerical
//! verification reports tying them together.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohomology::column_space_basis;
use crate::lie::{
    cartan3, dexp, dexp_body, exp, log_regular, principal_log, theta_oneform, triple,
    AlgebraElement, Backend, BackendId, GroupElement, LieError,
};
use crate::tol;

#[derive(Debug, Error)]
pub enum ConjError {
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("bad class config: {0}")]
    BadConfig(String),
    /// The proposed orbit point exponentiates outside the class.
    #[error("exp(Z) is {distance:.3e} away from the class fingerprint")]
    NotInClass { distance: f64 },
    /// The class has no preimage usable as an adjoint orbit: either the
    /// representative is outside the image of exp, or the class is
    /// unipotent (excluded from orbit sampling).
    #[error("class has no usable exponential preimage: {0}")]
    UnsupportedOrbit(String),
    /// The finite-difference chart left the class, so the step is too
    /// large for the available precision.
    #[error("finite-difference chart left the class at step {step:.3e}")]
    ChartTooSmall { step: f64 },
}

/// Discrete conjugacy-type tag for the real backend, where the trace alone
/// does not separate classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RealClassType {
    Central,
    EllipticPositive,
    EllipticNegative,
    Hyperbolic,
    UnipotentPositive,
    UnipotentNegative,
}

/// External form of a class description: a backend name plus one
/// parameter. The parameter is an angle for su2, a type tag with a real
/// value for sl2r, and a vector of angles for u1 backends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassConfig {
    pub backend: String,
    pub parameter: ClassParameter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassParameter {
    Angle(f64),
    Real {
        #[serde(rename = "type")]
        kind: RealClassType,
        value: f64,
    },
    Point(Vec<f64>),
}

/// A conjugacy class, held as a representative plus conjugation
/// invariants: the characteristic-polynomial coefficients and, for the
/// real backend, the discrete class type.
#[derive(Clone, Debug)]
pub struct ConjugacyClassSpec {
    pub backend: Backend,
    pub representative: GroupElement,
    /// Characteristic-polynomial coefficients (real, imaginary), highest
    /// degree first after the leading 1.
    pub fingerprint: Vec<(f64, f64)>,
    /// Discrete class tag; None outside the real backend.
    pub real_type: Option<RealClassType>,
    config: ClassConfig,
}

fn char_poly_fingerprint(backend: Backend, g: &GroupElement) -> Vec<(f64, f64)> {
    match backend.id {
        BackendId::Su2 | BackendId::Sl2r => {
            let tr = g.m[(0, 0)] + g.m[(1, 1)];
            let det = g.m[(0, 0)] * g.m[(1, 1)] - g.m[(0, 1)] * g.m[(1, 0)];
            vec![(-tr.re, -tr.im), (det.re, det.im)]
        }
        BackendId::U1(k) => {
            // Coefficients of prod_m (lambda - d_m), expanded sequentially.
            let mut coeffs = vec![Complex64::new(1.0, 0.0)];
            for m in 0..k {
                let d = g.m[(m, m)];
                let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
                for (i, &c) in coeffs.iter().enumerate() {
                    next[i] += c * (-d);
                    next[i + 1] += c;
                }
                coeffs = next;
            }
            coeffs.pop();
            coeffs.reverse();
            coeffs.iter().map(|c| (c.re, c.im)).collect()
        }
    }
}

fn fingerprint_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&(ar, ai), &(br, bi))| ((ar - br).powi(2) + (ai - bi).powi(2)).sqrt())
        .fold(0.0, f64::max)
}

/// The conjugation-invariant rotation-sense coefficient of the traceless
/// part N = g - (tr g / 2) I: half the difference of the off-diagonal
/// entries. Its sign separates the two elliptic (and the two unipotent)
/// classes sharing a trace.
fn traceless_sense(g: &GroupElement) -> f64 {
    0.5 * (g.m[(0, 1)].re - g.m[(1, 0)].re)
}

/// Classifies a real group element by conjugacy type, with a tolerance
/// band of width `tol::CLASS_TRACE_BAND` around trace +-2.
pub fn classify_real(g: &GroupElement) -> RealClassType {
    let n = g.m.nrows();
    let id = DMatrix::<Complex64>::identity(n, n);
    if (&g.m - &id).norm() <= tol::CLASS_FINGERPRINT
        || (&g.m + &id).norm() <= tol::CLASS_FINGERPRINT
    {
        return RealClassType::Central;
    }
    let tr = (g.m[(0, 0)] + g.m[(1, 1)]).re;
    if tr.abs() > 2.0 + tol::CLASS_TRACE_BAND {
        RealClassType::Hyperbolic
    } else if tr.abs() < 2.0 - tol::CLASS_TRACE_BAND {
        if traceless_sense(g) > 0.0 {
            RealClassType::EllipticPositive
        } else {
            RealClassType::EllipticNegative
        }
    } else if traceless_sense(g) > 0.0 {
        RealClassType::UnipotentPositive
    } else {
        RealClassType::UnipotentNegative
    }
}

impl ConjugacyClassSpec {
    /// Builds the class of the given element, synthesizing a canonical
    /// config from its invariants.
    pub fn new(representative: GroupElement) -> Self {
        let backend = Backend::from_id(representative.backend);
        let fingerprint = char_poly_fingerprint(backend, &representative);
        let (real_type, parameter) = match backend.id {
            BackendId::Su2 => {
                let half_tr =
                    0.5 * (representative.m[(0, 0)] + representative.m[(1, 1)]).re;
                (None, ClassParameter::Angle(half_tr.clamp(-1.0, 1.0).acos()))
            }
            BackendId::Sl2r => {
                let kind = classify_real(&representative);
                let tr =
                    (representative.m[(0, 0)] + representative.m[(1, 1)]).re;
                let value = match kind {
                    RealClassType::Central => 0.5 * tr,
                    RealClassType::EllipticPositive | RealClassType::EllipticNegative => {
                        (0.5 * tr).clamp(-1.0, 1.0).acos()
                    }
                    RealClassType::Hyperbolic => {
                        let t = (0.5 * tr.abs()).acosh();
                        if tr > 0.0 {
                            t
                        } else {
                            -t
                        }
                    }
                    RealClassType::UnipotentPositive | RealClassType::UnipotentNegative => {
                        let eps = if tr > 0.0 { 1.0 } else { -1.0 };
                        eps * 2.0 * traceless_sense(&representative).abs()
                    }
                };
                (Some(kind), ClassParameter::Real { kind, value })
            }
            BackendId::U1(k) => {
                let angles = (0..k)
                    .map(|m| representative.m[(m, m)].arg())
                    .collect();
                (None, ClassParameter::Point(angles))
            }
        };
        let config = ClassConfig {
            backend: backend.id.to_string(),
            parameter,
        };
        ConjugacyClassSpec {
            backend,
            representative,
            fingerprint,
            real_type,
            config,
        }
    }

    /// Builds the class from an external config, keeping the config
    /// verbatim for round-trip serialization.
    ///
    /// # Errors
    ///
    /// `BadConfig` on an unknown backend name, a parameter shape that does
    /// not fit the backend, or a parameter value outside its range.
    pub fn from_config(config: &ClassConfig) -> Result<Self, ConjError> {
        let id: BackendId = config
            .backend
            .parse()
            .map_err(|e: String| ConjError::BadConfig(e))?;
        let backend = Backend::from_id(id);
        let representative = match (id, &config.parameter) {
            (BackendId::Su2, ClassParameter::Angle(theta)) => {
                if !(0.0..=std::f64::consts::PI).contains(theta) {
                    return Err(ConjError::BadConfig(format!(
                        "su2 class angle must lie in [0, pi], got {theta}"
                    )));
                }
                let m = DMatrix::from_diagonal(&DVector::from_vec(vec![
                    Complex64::new(theta.cos(), theta.sin()),
                    Complex64::new(theta.cos(), -theta.sin()),
                ]));
                GroupElement::new(id, m)
            }
            (BackendId::Sl2r, ClassParameter::Real { kind, value }) => {
                let v = *value;
                let m = match kind {
                    RealClassType::Central => {
                        if v != 1.0 && v != -1.0 {
                            return Err(ConjError::BadConfig(format!(
                                "central class value must be 1 or -1, got {v}"
                            )));
                        }
                        DMatrix::<Complex64>::identity(2, 2) * Complex64::new(v, 0.0)
                    }
                    RealClassType::EllipticPositive | RealClassType::EllipticNegative => {
                        if !(v > 0.0 && v < std::f64::consts::PI) {
                            return Err(ConjError::BadConfig(format!(
                                "elliptic class angle must lie in (0, pi), got {v}"
                            )));
                        }
                        let s = if *kind == RealClassType::EllipticPositive {
                            v
                        } else {
                            -v
                        };
                        DMatrix::from_row_slice(
                            2,
                            2,
                            &[s.cos(), s.sin(), -s.sin(), s.cos()],
                        )
                        .map(|x| Complex64::new(x, 0.0))
                    }
                    RealClassType::Hyperbolic => {
                        if v == 0.0 {
                            return Err(ConjError::BadConfig(
                                "hyperbolic class value must be nonzero".to_string(),
                            ));
                        }
                        let sign = if v > 0.0 { 1.0 } else { -1.0 };
                        let t = v.abs();
                        DMatrix::from_row_slice(
                            2,
                            2,
                            &[sign * t.exp(), 0.0, 0.0, sign * (-t).exp()],
                        )
                        .map(|x| Complex64::new(x, 0.0))
                    }
                    RealClassType::UnipotentPositive | RealClassType::UnipotentNegative => {
                        if v == 0.0 {
                            return Err(ConjError::BadConfig(
                                "unipotent class value must be nonzero".to_string(),
                            ));
                        }
                        // Sign of the value selects the central component;
                        // the kind selects the nilpotent sense.
                        let eps = if v > 0.0 { 1.0 } else { -1.0 };
                        let sense = if *kind == RealClassType::UnipotentPositive {
                            1.0
                        } else {
                            -1.0
                        };
                        DMatrix::from_row_slice(
                            2,
                            2,
                            &[eps, sense * v.abs(), 0.0, eps],
                        )
                        .map(|x| Complex64::new(x, 0.0))
                    }
                };
                GroupElement::new(id, m)
            }
            (BackendId::U1(k), ClassParameter::Point(angles)) => {
                if angles.len() != k {
                    return Err(ConjError::BadConfig(format!(
                        "u1x{k} class point needs {k} angles, got {}",
                        angles.len()
                    )));
                }
                let m = DMatrix::from_fn(k, k, |i, j| {
                    if i == j {
                        Complex64::new(angles[i].cos(), angles[i].sin())
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                });
                GroupElement::new(id, m)
            }
            _ => {
                return Err(ConjError::BadConfig(format!(
                    "parameter shape does not fit backend {}",
                    config.backend
                )))
            }
        };
        let fingerprint = char_poly_fingerprint(backend, &representative);
        let real_type = match id {
            BackendId::Sl2r => Some(classify_real(&representative)),
            _ => None,
        };
        Ok(ConjugacyClassSpec {
            backend,
            representative,
            fingerprint,
            real_type,
            config: config.clone(),
        })
    }

    pub fn to_config(&self) -> ClassConfig {
        self.config.clone()
    }

    /// A random point of the class: a conjugate of the representative.
    pub fn random_point<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        if matches!(self.backend.id, BackendId::U1(_)) {
            // Conjugation is trivial on the torus; keep the point exact
            // instead of multiplying roundoff through q g q^-1.
            return self.representative.clone();
        }
        let g = self.backend.random_group(rng);
        self.representative.conjugated_by(&g)
    }

    pub fn is_central(&self) -> bool {
        match self.backend.id {
            BackendId::U1(_) => true,
            BackendId::Sl2r => self.real_type == Some(RealClassType::Central),
            BackendId::Su2 => {
                let n = self.backend.matrix_size;
                let id = DMatrix::<Complex64>::identity(n, n);
                (&self.representative.m - &id).norm() <= tol::CLASS_FINGERPRINT
                    || (&self.representative.m + &id).norm() <= tol::CLASS_FINGERPRINT
            }
        }
    }
}

/// Membership by conjugation invariants: fingerprint distance, plus the
/// discrete tag on the real backend. The abelian backends compare points
/// directly since conjugation is trivial there.
pub fn class_membership(g: &GroupElement, class: &ConjugacyClassSpec) -> bool {
    assert_eq!(g.backend, class.backend.id, "backend mismatch");
    match class.backend.id {
        BackendId::U1(_) => g.distance(&class.representative) <= tol::CLASS_FINGERPRINT,
        BackendId::Su2 => {
            let fp = char_poly_fingerprint(class.backend, g);
            fingerprint_distance(&fp, &class.fingerprint) <= tol::CLASS_FINGERPRINT
        }
        BackendId::Sl2r => {
            let fp = char_poly_fingerprint(class.backend, g);
            fingerprint_distance(&fp, &class.fingerprint) <= tol::CLASS_FINGERPRINT
                && Some(classify_real(g)) == class.real_type
        }
    }
}

/// An ambient-matrix basis of the tangent space of the conjugacy class at
/// p: the image of X |-> Xp - pX = (X - Ad(p)X)p, of dimension
/// rank(Ad(p) - I).
pub fn class_tangent(p: &GroupElement) -> Vec<DMatrix<Complex64>> {
    let backend = Backend::from_id(p.backend);
    let d = backend.dim;
    let a = p.adjoint_matrix() - DMatrix::<f64>::identity(d, d);
    let cols = column_space_basis(&a, tol::RANK_RELATIVE);
    (0..cols.ncols())
        .map(|i| {
            let w = backend.from_coords(&DVector::from(cols.column(i).clone_owned()));
            &w.m * &p.m
        })
        .collect()
}

/// A point Z on an adjoint orbit that exponentiates into a given class.
#[derive(Clone, Debug)]
pub struct OrbitPoint {
    pub z: AlgebraElement,
}

impl OrbitPoint {
    /// Wraps a proposed orbit point after checking that exp(Z) belongs to
    /// the class.
    ///
    /// # Errors
    ///
    /// `NotInClass` when exp(Z) misses the class fingerprint.
    pub fn new(z: AlgebraElement, class: &ConjugacyClassSpec) -> Result<Self, ConjError> {
        let p = exp(&z);
        let fp = char_poly_fingerprint(class.backend, &p);
        let distance = fingerprint_distance(&fp, &class.fingerprint);
        if distance > tol::ORBIT_EXP || !class_membership(&p, class) {
            return Err(ConjError::NotInClass { distance });
        }
        Ok(OrbitPoint { z })
    }

    /// The canonical orbit point over the class representative, from the
    /// principal logarithm refined by the regular-set Newton solve.
    ///
    /// # Errors
    ///
    /// `UnsupportedOrbit` for unipotent classes and for representatives
    /// outside the image of exp; `Lie` when the logarithm lands outside
    /// the regular set.
    pub fn from_class(class: &ConjugacyClassSpec) -> Result<Self, ConjError> {
        if matches!(
            class.real_type,
            Some(RealClassType::UnipotentPositive) | Some(RealClassType::UnipotentNegative)
        ) {
            return Err(ConjError::UnsupportedOrbit(
                "unipotent classes are excluded from orbit sampling".to_string(),
            ));
        }
        let hint = principal_log(&class.representative).ok_or_else(|| {
            ConjError::UnsupportedOrbit(
                "representative has no principal logarithm".to_string(),
            )
        })?;
        let z = log_regular(&class.representative, &hint)?;
        OrbitPoint::new(z, class)
    }

    /// A random point of the orbit: the adjoint image of this point under
    /// a random group element.
    pub fn random_conjugate<R: rand::Rng + ?Sized>(
        &self,
        rng: &mut R,
    ) -> OrbitPoint {
        let backend = Backend::from_id(self.z.backend);
        let g = backend.random_group(rng);
        OrbitPoint {
            z: g.adjoint_action(&self.z),
        }
    }
}

/// The Kirillov orbit form at Z on the tangent vectors generated by X and
/// Y: omega_Z([X,Z], [Y,Z]) = [X,Y] . Z.
pub fn kirillov(z: &OrbitPoint, x: &AlgebraElement, y: &AlgebraElement) -> f64 {
    triple(&z.z, x, y)
}

/// The tau 2-form on a conjugacy class at p, on the tangent vectors
/// Xp - pX, Yp - pY: (1/2)(X . Ad(p)Y - Y . Ad(p)X).
pub fn tau(p: &GroupElement, x: &AlgebraElement, y: &AlgebraElement) -> f64 {
    let backend = Backend::from_id(p.backend);
    0.5 * (backend.form.eval(x, &p.adjoint_action(y))
        - backend.form.eval(y, &p.adjoint_action(x)))
}

/// The closed form of the orbit 2-form beta at Z on the tangent vectors
/// generated by X, Y: [Z,X] . Y + tau(exp Z, X, Y).
pub fn beta_closed(z: &OrbitPoint, x: &AlgebraElement, y: &AlgebraElement) -> f64 {
    let backend = Backend::from_id(z.z.backend);
    let p = exp(&z.z);
    backend.form.eval(&z.z.bracket(x), y) + tau(&p, x, y)
}

/// The defining quadrature for beta: the radial homotopy operator applied
/// to the pullback of the bi-invariant 3-form along exp, evaluated at Z on
/// the orbit tangent vectors [X,Z], [Y,Z].
pub fn beta_quadrature(z: &OrbitPoint, x: &AlgebraElement, y: &AlgebraElement) -> f64 {
    let v = x.bracket(&z.z);
    let w = y.bracket(&z.z);
    let pullback = |base: &AlgebraElement, args: &[AlgebraElement]| -> f64 {
        let g = exp(base);
        cartan3(
            &g,
            &dexp(base, &args[0]),
            &dexp(base, &args[1]),
            &dexp(base, &args[2]),
        )
    };
    crate::lie::homotopy_h(3, pullback, &z.z, &[v, w])
}

/// Residual report for the pullback identity exp* tau = beta - omega and
/// the closed form of beta, over random tangent generator pairs at one
/// orbit point.
#[derive(Clone, Debug, Serialize)]
pub struct OrbitFormReport {
    pub backend: String,
    pub trials: usize,
    /// max |tau(exp Z; X, Y) - (beta_quadrature - kirillov)|
    pub max_pullback_residual: f64,
    /// max |beta_closed - beta_quadrature|
    pub max_beta_gap: f64,
    /// max ambient distance between dexp([X,Z]) and (X - Ad(p)X)p
    pub max_dexp_image_residual: f64,
}

pub fn verify_orbit_two_form<R: rand::Rng + ?Sized>(
    z: &OrbitPoint,
    trials: usize,
    rng: &mut R,
) -> OrbitFormReport {
    let backend = Backend::from_id(z.z.backend);
    let p = exp(&z.z);
    let mut max_pullback = 0.0f64;
    let mut max_gap = 0.0f64;
    let mut max_image = 0.0f64;
    for _ in 0..trials {
        let x = backend.random_algebra(rng, 1.0);
        let y = backend.random_algebra(rng, 1.0);
        let t = tau(&p, &x, &y);
        let k = kirillov(z, &x, &y);
        let bq = beta_quadrature(z, &x, &y);
        let bc = beta_closed(z, &x, &y);
        max_pullback = max_pullback.max((t - (bq - k)).abs());
        max_gap = max_gap.max((bc - bq).abs());
        let image = dexp(&z.z, &x.bracket(&z.z));
        let direct = &x.m * &p.m - &p.m * &x.m;
        max_image = max_image.max((image - direct).norm());
    }
    OrbitFormReport {
        backend: backend.id.to_string(),
        trials,
        max_pullback_residual: max_pullback,
        max_beta_gap: max_gap,
        max_dexp_image_residual: max_image,
    }
}

/// Residual report for the exterior-derivative identity d tau = lambda
/// (tested by second-order finite differences in a conjugation chart) and
/// the contraction identity -i_{X_C} tau = theta.
#[derive(Clone, Debug, Serialize)]
pub struct FormDifferentialReport {
    pub backend: String,
    pub tangent_dim: usize,
    pub trials: usize,
    /// max |FD d tau - lambda| at step h
    pub dtau_residual_coarse: f64,
    /// the same at step h/2
    pub dtau_residual_fine: f64,
    /// coarse/fine; None when the class is a point or the fine residual
    /// sits at roundoff
    pub ratio: Option<f64>,
    /// max |lambda| on the chart direction triple (zero on 2-dimensional
    /// classes since three tangents are dependent)
    pub max_lambda: f64,
    /// max |theta(X)(v) + tau(a; X, Y)| over random points and directions
    pub max_theta_residual: f64,
}

impl FormDifferentialReport {
    /// Whether the finite-difference residual decays at second order (or
    /// the test is vacuous because the class is a point or the residual
    /// reached roundoff).
    pub fn ratio_ok(&self) -> bool {
        self.tangent_dim == 0 || self.ratio.is_none_or(|r| r >= tol::FD_RATIO)
    }
}

fn chart_tau_components(
    class: &ConjugacyClassSpec,
    p0: &GroupElement,
    dirs: &[AlgebraElement; 3],
    t: [f64; 3],
    h: f64,
) -> Result<[f64; 3], ConjError> {
    let xi = dirs[0]
        .scale(t[0])
        .add(&dirs[1].scale(t[1]))
        .add(&dirs[2].scale(t[2]));
    let g = exp(&xi);
    let pt = p0.conjugated_by(&g);
    if !class_membership(&pt, class) {
        return Err(ConjError::ChartTooSmall { step: h });
    }
    let w: Vec<AlgebraElement> = dirs
        .iter()
        .map(|x| g.adjoint_action(&dexp_body(&xi, x)))
        .collect();
    Ok([
        tau(&pt, &w[1], &w[2]),
        tau(&pt, &w[0], &w[2]),
        tau(&pt, &w[0], &w[1]),
    ])
}

/// Central-difference exterior derivative of the pulled-back tau on the
/// chart directions, d(psi* tau)(e1, e2, e3) at the origin.
fn fd_dtau(
    class: &ConjugacyClassSpec,
    p0: &GroupElement,
    dirs: &[AlgebraElement; 3],
    h: f64,
) -> Result<f64, ConjError> {
    let mut value = 0.0;
    for i in 0..3 {
        let mut tp = [0.0; 3];
        tp[i] = h;
        let mut tm = [0.0; 3];
        tm[i] = -h;
        let plus = chart_tau_components(class, p0, dirs, tp, h)?;
        let minus = chart_tau_components(class, p0, dirs, tm, h)?;
        let partial = (plus[i] - minus[i]) / (2.0 * h);
        let sign = if i == 1 { -1.0 } else { 1.0 };
        value += sign * partial;
    }
    Ok(value)
}

pub fn verify_form_differential<R: rand::Rng + ?Sized>(
    class: &ConjugacyClassSpec,
    trials: usize,
    rng: &mut R,
) -> Result<FormDifferentialReport, ConjError> {
    let backend = class.backend;
    let p0 = class.representative.clone();
    let tangent_dim = class_tangent(&p0).len();
    if tangent_dim == 0 {
        return Ok(FormDifferentialReport {
            backend: backend.id.to_string(),
            tangent_dim,
            trials,
            dtau_residual_coarse: 0.0,
            dtau_residual_fine: 0.0,
            ratio: None,
            max_lambda: 0.0,
            max_theta_residual: 0.0,
        });
    }

    let triples = trials.clamp(1, 3);
    let mut coarse = 0.0f64;
    let mut fine = 0.0f64;
    let mut max_lambda = 0.0f64;
    for _ in 0..triples {
        let dirs = [
            backend.random_algebra(rng, 1.0),
            backend.random_algebra(rng, 1.0),
            backend.random_algebra(rng, 1.0),
        ];
        let ambient: Vec<DMatrix<Complex64>> = dirs
            .iter()
            .map(|x| &x.m * &p0.m - &p0.m * &x.m)
            .collect();
        let lambda = cartan3(&p0, &ambient[0], &ambient[1], &ambient[2]);
        max_lambda = max_lambda.max(lambda.abs());
        let h = tol::FD_STEP;
        coarse = coarse.max((fd_dtau(class, &p0, &dirs, h)? - lambda).abs());
        fine = fine.max((fd_dtau(class, &p0, &dirs, 0.5 * h)? - lambda).abs());
    }
    let ratio = if fine > 1e-14 {
        Some(coarse / fine)
    } else {
        None
    };

    let mut max_theta = 0.0f64;
    for _ in 0..trials {
        let a = class.random_point(rng);
        let x = backend.random_algebra(rng, 1.0);
        let y = backend.random_algebra(rng, 1.0);
        let v = &y.m * &a.m - &a.m * &y.m;
        let theta = theta_oneform(&x, &a, &v);
        max_theta = max_theta.max((theta + tau(&a, &x, &y)).abs());
    }

    Ok(FormDifferentialReport {
        backend: backend.id.to_string(),
        tangent_dim,
        trials,
        dtau_residual_coarse: coarse,
        dtau_residual_fine: fine,
        ratio,
        max_lambda,
        max_theta_residual: max_theta,
    })
}
