//! Points of the class-constrained representation variety and its extended
//! counterpart, groupoid representation points with the gauge action, the
//! symplectic 2-forms on the extended space, the momentum map, and the
//! finite-difference verification reports for closedness, the momentum
//! identity, and the equivalence with the chain-level pairing.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bar::{build_c, cup_eval, BarError, PairingContext, WordCocycle};
use crate::cohomology::{
    build_parabolic, coboundary, h1_representatives, least_squares_min_norm,
    null_space_basis, numerical_rank, solve_parabolic_data, Cochain1, CohomologyError,
};
use crate::conjclass::{class_membership, tau, ConjError, ConjugacyClassSpec};
use crate::fox::{
    fox_derivative, relator, word_eval, FoxError, GeneratorAssignment, GeneratorSymbol,
    SurfaceData,
};
use crate::lie::{
    cartan3, dexp, dexp_body, dexp_body_inv, exp, homotopy_h, log_regular, principal_log,
    AlgebraElement, Backend, GroupElement, LieError,
};
use crate::tol;

#[derive(Debug, Error)]
pub enum ModuliError {
    #[error(transparent)]
    Fox(#[from] FoxError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Cohomology(#[from] CohomologyError),
    #[error(transparent)]
    Conj(#[from] ConjError),
    #[error(transparent)]
    Bar(#[from] BarError),
    #[error("bad input: {0}")]
    BadInput(String),
    /// The relator-level projection ran out of iterations or stalled with
    /// a usable differential.
    #[error("relator projection did not converge, residual {residual:.3e}")]
    NoConvergence { residual: f64 },
    /// The projection stalled because the constrained differential cannot
    /// reach the target: the class tuple obstructs the level set.
    #[error(
        "relator projection obstructed: differential rank {rank} of {needed}, residual {residual:.3e}"
    )]
    ObstructedClasses {
        residual: f64,
        rank: usize,
        needed: usize,
    },
    /// A finite-difference chart step could not be completed (branch or
    /// tangency failure at the displaced point).
    #[error("finite-difference chart failed at step {step:.3e}")]
    ChartTooSmall { step: f64 },
}

/// A point of the class-constrained representation variety of the free
/// group: one group element per presentation generator, with the relator
/// value cached and per-circle class membership flags.
#[derive(Clone, Debug)]
pub struct RepresentationPoint {
    pub surface: SurfaceData,
    pub backend: Backend,
    values: Vec<GroupElement>,
    pub relator_value: GroupElement,
    /// Membership flags per boundary circle; empty when the point was
    /// built without class data.
    pub class_flags: Vec<bool>,
}

impl RepresentationPoint {
    /// Builds a point from generator values in slot order
    /// (x1, y1, ..., xl, yl, z1, ..., zn), caching the relator value.
    ///
    /// # Errors
    ///
    /// `BadInput` when the value count does not match the surface.
    pub fn from_values(
        surface: SurfaceData,
        backend: Backend,
        values: Vec<GroupElement>,
    ) -> Result<Self, ModuliError> {
        let expected = 2 * surface.genus + surface.boundary;
        if values.len() != expected {
            return Err(ModuliError::BadInput(format!(
                "expected {expected} generator values, got {}",
                values.len()
            )));
        }
        let mut point = RepresentationPoint {
            surface,
            backend,
            values,
            relator_value: backend.identity(),
            class_flags: Vec::new(),
        };
        point.relator_value = word_eval(&relator(&surface), &point)?;
        Ok(point)
    }

    /// Attaches class data, recording one membership flag per circle.
    pub fn with_classes(mut self, classes: &[ConjugacyClassSpec]) -> Self {
        self.class_flags = self
            .surface
            .z_generators()
            .iter()
            .zip(classes)
            .map(|(&z, class)| class_membership(&self.values[Cochain1::slot_index(&self.surface, z)], class))
            .collect();
        self
    }

    pub fn values(&self) -> &[GroupElement] {
        &self.values
    }

    pub fn value_at(&self, sym: GeneratorSymbol) -> &GroupElement {
        &self.values[Cochain1::slot_index(&self.surface, sym)]
    }

    /// Replaces one slot value and refreshes the relator cache. Class
    /// flags are kept (callers replacing z-values must preserve classes,
    /// as the conjugation moves used here do).
    pub fn replace_slot(&self, slot: usize, g: GroupElement) -> Result<Self, ModuliError> {
        let mut values = self.values.clone();
        values[slot] = g;
        let flags = self.class_flags.clone();
        let mut point = Self::from_values(self.surface, self.backend, values)?;
        point.class_flags = flags;
        Ok(point)
    }

    pub fn relator_residual_to(&self, target: &GroupElement) -> f64 {
        self.relator_value.distance(target)
    }

    pub fn is_relator_level(&self) -> bool {
        self.relator_value.is_identity(tol::RELATOR_LEVEL)
    }
}

impl GeneratorAssignment for RepresentationPoint {
    fn backend(&self) -> Backend {
        self.backend
    }

    fn value(&self, sym: GeneratorSymbol) -> Option<GroupElement> {
        let gens = self.surface.group_generators();
        if gens.contains(&sym) {
            Some(self.values[Cochain1::slot_index(&self.surface, sym)].clone())
        } else {
            None
        }
    }
}

/// A homomorphism from the free groupoid of the one-vertex-per-circle
/// presentation: values on x, y, a, gamma generators.
#[derive(Clone, Debug)]
pub struct GroupoidRepPoint {
    pub surface: SurfaceData,
    pub backend: Backend,
    values: BTreeMap<GeneratorSymbol, GroupElement>,
}

impl GroupoidRepPoint {
    pub fn value_at(&self, sym: GeneratorSymbol) -> &GroupElement {
        &self.values[&sym]
    }
}

impl GeneratorAssignment for GroupoidRepPoint {
    fn backend(&self) -> Backend {
        self.backend
    }

    fn value(&self, sym: GeneratorSymbol) -> Option<GroupElement> {
        self.values.get(&sym).cloned()
    }
}

/// The corestriction of a group representation to the groupoid: boundary
/// loops take the z-values, connecting paths go to the identity.
pub fn corestrict(phi: &RepresentationPoint) -> GroupoidRepPoint {
    let mut values = BTreeMap::new();
    for sym in phi.surface.xy_generators() {
        values.insert(sym, phi.value_at(sym).clone());
    }
    for j in 1..=phi.surface.boundary {
        values.insert(
            GeneratorSymbol::a(j),
            phi.value_at(GeneratorSymbol::z(j)).clone(),
        );
        values.insert(GeneratorSymbol::gamma(j), phi.backend.identity());
    }
    GroupoidRepPoint {
        surface: phi.surface,
        backend: phi.backend,
        values,
    }
}

/// The restriction of a groupoid representation to the group:
/// z_j = chi(gamma_j) chi(a_j) chi(gamma_j)^-1.
///
/// # Errors
///
/// `BadInput` via `from_values` length checks (cannot occur for points
/// built by this module).
pub fn restrict(chi: &GroupoidRepPoint) -> Result<RepresentationPoint, ModuliError> {
    let mut values = Vec::new();
    for sym in chi.surface.xy_generators() {
        values.push(chi.value_at(sym).clone());
    }
    for j in 1..=chi.surface.boundary {
        let gamma = chi.value_at(GeneratorSymbol::gamma(j));
        let a = chi.value_at(GeneratorSymbol::a(j));
        values.push(a.conjugated_by(gamma));
    }
    RepresentationPoint::from_values(chi.surface, chi.backend, values)
}

/// The gauge action of a vertex function theta (one group element per
/// object: index 0 is the base point, index j the j-th circle vertex):
/// each generator w maps to theta(target) chi(w) theta(source)^-1.
pub fn gauge_act(theta: &[GroupElement], chi: &GroupoidRepPoint) -> GroupoidRepPoint {
    assert_eq!(
        theta.len(),
        chi.surface.boundary + 1,
        "need one vertex element per object"
    );
    let mut values = BTreeMap::new();
    let base = &theta[0];
    for sym in chi.surface.xy_generators() {
        values.insert(sym, chi.value_at(sym).conjugated_by(base));
    }
    for (j, vertex) in theta.iter().enumerate().skip(1) {
        values.insert(
            GeneratorSymbol::a(j),
            chi.value_at(GeneratorSymbol::a(j)).conjugated_by(vertex),
        );
        let gamma = chi.value_at(GeneratorSymbol::gamma(j));
        values.insert(
            GeneratorSymbol::gamma(j),
            base.mul(gamma).mul(&vertex.inverse()),
        );
    }
    GroupoidRepPoint {
        surface: chi.surface,
        backend: chi.backend,
        values,
    }
}

/// A right-translated tangent vector to the class-constrained variety: a
/// cochain whose z-blocks lie in the boundary subspaces, carrying the
/// solved correction data.
#[derive(Clone, Debug)]
pub struct TangentVector {
    pub u: Cochain1,
}

impl TangentVector {
    /// Validates tangency by solving the boundary correction equations
    /// and stores the solutions on the cochain.
    ///
    /// # Errors
    ///
    /// `Cohomology(NotParabolic)` when some z-block leaves its boundary
    /// subspace.
    pub fn new(u: Cochain1, phi: &RepresentationPoint) -> Result<Self, ModuliError> {
        let u = solve_parabolic_data(&u, phi)?;
        Ok(TangentVector { u })
    }

    /// A random tangent vector: free xy-blocks, z-blocks of the form
    /// (I - Ad(z_j)) W_j which lie in the boundary subspaces by
    /// construction.
    pub fn random<R: Rng + ?Sized>(
        phi: &RepresentationPoint,
        rng: &mut R,
    ) -> Result<Self, ModuliError> {
        let backend = phi.backend;
        let mut u = Cochain1::zero(phi.surface, backend);
        for sym in phi.surface.xy_generators() {
            u.set_value(sym, backend.random_algebra(rng, 1.0));
        }
        for &z in &phi.surface.z_generators() {
            let w = backend.random_algebra(rng, 1.0);
            let g = phi.value_at(z);
            u.set_value(z, w.sub(&g.adjoint_action(&w)));
        }
        Self::new(u, phi)
    }

    pub fn zero(phi: &RepresentationPoint) -> Self {
        let mut u = Cochain1::zero(phi.surface, phi.backend);
        u.boundary_data = Some(vec![phi.backend.zero(); phi.surface.boundary]);
        TangentVector { u }
    }

    pub fn scale(&self, s: f64) -> TangentVector {
        let mut u = self.u.scale(s);
        u.boundary_data = self
            .u
            .boundary_data
            .as_ref()
            .map(|d| d.iter().map(|x| x.scale(s)).collect());
        TangentVector { u }
    }
}

/// A deterministic sample of the class-constrained variety: random handle
/// values, boundary values conjugated into their classes.
///
/// # Errors
///
/// `BadInput` when the class count or backends do not match.
pub fn sample_hom_fc(
    surface: SurfaceData,
    classes: &[ConjugacyClassSpec],
    seed: u64,
) -> Result<RepresentationPoint, ModuliError> {
    if classes.len() != surface.boundary {
        return Err(ModuliError::BadInput(format!(
            "need {} classes, got {}",
            surface.boundary,
            classes.len()
        )));
    }
    let backend = match classes.first() {
        Some(c) => c.backend,
        None => {
            return Err(ModuliError::BadInput(
                "closed-surface sampling needs an explicit backend; use sample_closed"
                    .to_string(),
            ))
        }
    };
    if classes.iter().any(|c| c.backend.id != backend.id) {
        return Err(ModuliError::BadInput(
            "classes use mixed backends".to_string(),
        ));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::new();
    for _ in 0..2 * surface.genus {
        values.push(backend.random_group(&mut rng));
    }
    for class in classes {
        values.push(class.random_point(&mut rng));
    }
    Ok(RepresentationPoint::from_values(surface, backend, values)?.with_classes(classes))
}

/// A deterministic sample for a closed surface (no class constraints).
pub fn sample_closed(
    surface: SurfaceData,
    backend: Backend,
    seed: u64,
) -> Result<RepresentationPoint, ModuliError> {
    if surface.boundary != 0 {
        return Err(ModuliError::BadInput(
            "sample_closed expects a closed surface".to_string(),
        ));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let values = (0..2 * surface.genus)
        .map(|_| backend.random_group(&mut rng))
        .collect();
    RepresentationPoint::from_values(surface, backend, values)
}

use rand::SeedableRng;

fn stack_real_imag(m: &DMatrix<num_complex::Complex64>) -> DVector<f64> {
    let mut v = DVector::zeros(2 * m.len());
    for (i, c) in m.iter().enumerate() {
        v[2 * i] = c.re;
        v[2 * i + 1] = c.im;
    }
    v
}

/// The algebra-level differential of the relator under a right-translated
/// perturbation cochain u: the element D with d/dt r(phi_t) = D r(phi).
pub fn relator_differential(
    phi: &RepresentationPoint,
    u: &Cochain1,
) -> Result<AlgebraElement, ModuliError> {
    let r = relator(&phi.surface);
    let backend = phi.backend;
    let mut total = DVector::zeros(backend.dim);
    for sym in phi.surface.group_generators() {
        let block = crate::fox::eval_ring(&fox_derivative(&r, sym), phi)?;
        total += block * backend.coords(u.value(sym));
    }
    Ok(backend.from_coords(&total))
}

/// Moves a representation point toward the level set r(phi) = target by
/// damped Gauss-Newton with Armijo backtracking, keeping the z-values
/// inside their conjugacy classes (they move by conjugation only).
///
/// # Errors
///
/// `ObstructedClasses` when the iteration stalls and the constrained
/// differential is rank-deficient; `NoConvergence` otherwise on stall or
/// iteration exhaustion.
pub fn project_to_relator_level(
    phi: &RepresentationPoint,
    target: &GroupElement,
) -> Result<RepresentationPoint, ModuliError> {
    let backend = phi.backend;
    let d = backend.dim;
    let surface = phi.surface;
    let r = relator(&surface);
    let xy = surface.xy_generators();
    let zs = surface.z_generators();
    let params = d * (xy.len() + zs.len());

    let mut current = phi.clone();
    for _ in 0..tol::RELATOR_NEWTON_MAX_ITERS {
        let residual = current.relator_residual_to(target);
        if residual <= tol::RELATOR_LEVEL {
            return Ok(current);
        }

        // Algebra-level Jacobian: columns are the coordinates of the
        // relator differential per unit generator motion. Handle slots
        // move freely; boundary slots move by conjugation, contributing
        // the (I - Ad(z_j)) factor.
        let mut a = DMatrix::<f64>::zeros(d, params);
        let mut col = 0;
        for &sym in &xy {
            let block = crate::fox::eval_ring(&fox_derivative(&r, sym), &current)?;
            a.view_mut((0, col), (d, d)).copy_from(&block);
            col += d;
        }
        for &sym in &zs {
            let block = crate::fox::eval_ring(&fox_derivative(&r, sym), &current)?;
            let g = current.value_at(sym);
            let factor = DMatrix::<f64>::identity(d, d) - g.adjoint_matrix();
            a.view_mut((0, col), (d, d)).copy_from(&(block * factor));
            col += d;
        }

        // Ambient Gauss-Newton system on the stacked real residual.
        let rv = &current.relator_value;
        let f = stack_real_imag(&(&rv.m - &target.m));
        let mut jac = DMatrix::<f64>::zeros(f.len(), params);
        for p in 0..params {
            let alg = backend.from_coords(&a.column(p).into_owned());
            jac.set_column(p, &stack_real_imag(&(&alg.m * &rv.m)));
        }
        let step = least_squares_min_norm(&jac, &(-&f), tol::RANK_RELATIVE);

        // Armijo backtracking on the squared ambient residual.
        let f0 = residual * residual;
        let mut s = 1.0;
        let mut accepted = None;
        while s > 1e-8 {
            let trial = apply_motion(&current, &xy, &zs, &step, s)?;
            let f1 = trial.relator_residual_to(target).powi(2);
            if f1 <= f0 * (1.0 - 1e-4 * s) {
                accepted = Some(trial);
                break;
            }
            s *= 0.5;
        }
        match accepted {
            Some(next) => current = next,
            None => {
                let (rank, _) = numerical_rank(&a, tol::RANK_RELATIVE)?;
                if rank < d {
                    return Err(ModuliError::ObstructedClasses {
                        residual,
                        rank,
                        needed: d,
                    });
                }
                return Err(ModuliError::NoConvergence { residual });
            }
        }
    }
    let residual = current.relator_residual_to(target);
    if residual <= tol::RELATOR_LEVEL {
        Ok(current)
    } else {
        Err(ModuliError::NoConvergence { residual })
    }
}

fn apply_motion(
    phi: &RepresentationPoint,
    xy: &[GeneratorSymbol],
    zs: &[GeneratorSymbol],
    step: &DVector<f64>,
    scale: f64,
) -> Result<RepresentationPoint, ModuliError> {
    let backend = phi.backend;
    let d = backend.dim;
    let mut values = phi.values().to_vec();
    let mut col = 0;
    for &sym in xy {
        let v = backend.from_coords(&step.rows(col, d).map(|x| x * scale));
        let slot = Cochain1::slot_index(&phi.surface, sym);
        values[slot] = exp(&v).mul(&values[slot]);
        col += d;
    }
    for &sym in zs {
        let w = backend.from_coords(&step.rows(col, d).map(|x| x * scale));
        let slot = Cochain1::slot_index(&phi.surface, sym);
        let q = exp(&w);
        values[slot] = values[slot].conjugated_by(&q);
        col += d;
    }
    let flags = phi.class_flags.clone();
    let mut out = RepresentationPoint::from_values(phi.surface, backend, values)?;
    out.class_flags = flags;
    Ok(out)
}

/// A point of the extended space: a representation point together with a
/// logarithm of its relator value.
#[derive(Clone, Debug)]
pub struct ExtendedPoint {
    pub phi: RepresentationPoint,
    pub lambda: AlgebraElement,
}

/// Solves exp(Lambda) = r(phi) on the regular branch near the hint.
///
/// # Errors
///
/// `Lie(NotInRegularSet)` when the Newton solve fails or lands outside
/// the regular set.
pub fn extend(
    phi: &RepresentationPoint,
    hint: &AlgebraElement,
) -> Result<ExtendedPoint, ModuliError> {
    let lambda = log_regular(&phi.relator_value, hint)?;
    debug_assert!(exp(&lambda).distance(&phi.relator_value) <= tol::EXTENDED_POINT);
    Ok(ExtendedPoint {
        phi: phi.clone(),
        lambda,
    })
}

/// Extends using the principal logarithm of the relator value as the
/// branch hint.
///
/// # Errors
///
/// `Lie(NotInRegularSet)` when the relator value has no principal
/// logarithm or the refinement fails.
pub fn extend_auto(phi: &RepresentationPoint) -> Result<ExtendedPoint, ModuliError> {
    let hint = principal_log(&phi.relator_value).ok_or(LieError::NotInRegularSet {
        reason: "relator value has no principal logarithm".to_string(),
    })?;
    extend(phi, &hint)
}

/// The chain 2-form on the representation variety: the antisymmetrized
/// cup evaluation against the standard 2-chain.
///
/// # Errors
///
/// `Fox(UnboundGenerator)` when the cochains reference unassigned slots.
pub fn omega_c(
    phi: &RepresentationPoint,
    u: &TangentVector,
    v: &TangentVector,
) -> Result<f64, ModuliError> {
    let c = build_c(&phi.surface);
    let wu = WordCocycle::from_cochain(phi, &u.u);
    let wv = WordCocycle::from_cochain(phi, &v.u);
    Ok(0.5 * (cup_eval(&c, &wu, &wv)? - cup_eval(&c, &wv, &wu)?))
}

/// The induced motion of the logarithm coordinate for a tangent vector:
/// solves dexp(Lambda) Lambda-dot = d(r)(u), transported to the left.
///
/// # Errors
///
/// `Lie(NotInRegularSet)` when the dexp operator is singular.
pub fn lambda_dot(
    p: &ExtendedPoint,
    u: &TangentVector,
) -> Result<AlgebraElement, ModuliError> {
    let dr = relator_differential(&p.phi, &u.u)?;
    let transported = p.phi.relator_value.inverse().adjoint_action(&dr);
    Ok(dexp_body_inv(&p.lambda, &transported)?)
}

/// The 2-form beta = h(exp* lambda) on the algebra, evaluated honestly by
/// quadrature on arbitrary vectors.
fn beta_on_vectors(z: &AlgebraElement, v: &AlgebraElement, w: &AlgebraElement) -> f64 {
    let pullback = |base: &AlgebraElement, args: &[AlgebraElement]| -> f64 {
        let g = exp(base);
        cartan3(
            &g,
            &dexp(base, &args[0]),
            &dexp(base, &args[1]),
            &dexp(base, &args[2]),
        )
    };
    homotopy_h(3, pullback, z, &[v.clone(), w.clone()])
}

/// The extended 2-form: the chain form, minus the orbit form pulled back
/// through the logarithm coordinate, plus one class form per boundary
/// circle.
///
/// # Errors
///
/// `Lie(NotInRegularSet)` when the logarithm motion cannot be solved.
pub fn omega_ext(
    p: &ExtendedPoint,
    u: &TangentVector,
    v: &TangentVector,
) -> Result<f64, ModuliError> {
    let base = omega_c(&p.phi, u, v)?;
    let lu = lambda_dot(p, u)?;
    let lv = lambda_dot(p, v)?;
    let beta_term = beta_on_vectors(&p.lambda, &lu, &lv);
    let xs = u.u.boundary_data.as_ref().expect("tangent carries data");
    let ys = v.u.boundary_data.as_ref().expect("tangent carries data");
    let mut tau_term = 0.0;
    for (j, &z) in p.phi.surface.z_generators().iter().enumerate() {
        tau_term += tau(p.phi.value_at(z), &xs[j], &ys[j]);
    }
    Ok(base - beta_term + tau_term)
}

/// The momentum map as a dual vector: coordinates of the pairing of
/// Lambda against the algebra basis.
pub fn mu(p: &ExtendedPoint) -> DVector<f64> {
    let backend = p.phi.backend;
    DVector::from_iterator(
        backend.dim,
        backend
            .basis()
            .iter()
            .map(|e| backend.form.eval(&p.lambda, e)),
    )
}

pub fn mu_pair(p: &ExtendedPoint, x: &AlgebraElement) -> f64 {
    p.phi.backend.form.eval(&p.lambda, x)
}

/// Simultaneous conjugation of a representation point.
pub fn conjugate_point(
    phi: &RepresentationPoint,
    g: &GroupElement,
) -> Result<RepresentationPoint, ModuliError> {
    let values = phi.values().iter().map(|v| v.conjugated_by(g)).collect();
    let flags = phi.class_flags.clone();
    let mut out = RepresentationPoint::from_values(phi.surface, phi.backend, values)?;
    out.class_flags = flags;
    Ok(out)
}

/// Simultaneous conjugation of an extended point (the logarithm moves by
/// the adjoint action).
pub fn conjugate_extended(
    p: &ExtendedPoint,
    g: &GroupElement,
) -> Result<ExtendedPoint, ModuliError> {
    Ok(ExtendedPoint {
        phi: conjugate_point(&p.phi, g)?,
        lambda: g.adjoint_action(&p.lambda),
    })
}

/// The adjoint image of a tangent vector under simultaneous conjugation.
pub fn conjugate_tangent(u: &TangentVector, g: &GroupElement) -> TangentVector {
    let mut out = u.u.clone();
    for sym in u.u.surface.group_generators() {
        out.set_value(sym, g.adjoint_action(u.u.value(sym)));
    }
    out.boundary_data = u
        .u
        .boundary_data
        .as_ref()
        .map(|d| d.iter().map(|x| g.adjoint_action(x)).collect());
    TangentVector { u: out }
}

/// Dimension of the simultaneous Ad-fixed subspace of the generator
/// values: zero exactly at the irreducible points of the compact backend.
pub fn stabilizer_dimension(phi: &RepresentationPoint) -> usize {
    let d = phi.backend.dim;
    let n = phi.values().len();
    let mut stacked = DMatrix::<f64>::zeros(d * n, d);
    for (i, g) in phi.values().iter().enumerate() {
        let block = g.adjoint_matrix() - DMatrix::<f64>::identity(d, d);
        stacked.view_mut((d * i, 0), (d, d)).copy_from(&block);
    }
    null_space_basis(&stacked, tol::RANK_RELATIVE).ncols()
}

/// Per-direction retraction generators: one free algebra element per
/// handle slot, one conjugation generator per boundary slot.
struct SlotGenerators {
    xy: Vec<AlgebraElement>,
    z: Vec<AlgebraElement>,
}

fn chart_directions(
    phi: &RepresentationPoint,
    u: &TangentVector,
) -> Result<SlotGenerators, ModuliError> {
    let xy = phi
        .surface
        .xy_generators()
        .iter()
        .map(|&sym| u.u.value(sym).clone())
        .collect();
    // The boundary motion is conjugation by exp(W) with
    // (I - Ad(z_j)) W = u(z_j); W = -X_j for the stored correction data.
    let z = u
        .u
        .boundary_data
        .as_ref()
        .expect("tangent carries data")
        .iter()
        .map(|x| x.scale(-1.0))
        .collect();
    Ok(SlotGenerators { xy, z })
}

/// Evaluates the retraction at chart parameter t and pushes each chart
/// direction forward to an exact tangent vector at the displaced point.
fn chart_point(
    phi: &RepresentationPoint,
    dirs: &[SlotGenerators],
    t: &[f64],
) -> Result<(RepresentationPoint, Vec<TangentVector>), ModuliError> {
    assert_eq!(dirs.len(), t.len());
    let backend = phi.backend;
    let surface = phi.surface;
    let mut values = phi.values().to_vec();
    let xy = surface.xy_generators();
    let zs = surface.z_generators();

    let mut theta = vec![backend.zero(); xy.len()];
    let mut conj = vec![backend.zero(); zs.len()];
    for (d, &ti) in dirs.iter().zip(t) {
        for (slot, v) in d.xy.iter().enumerate() {
            theta[slot] = theta[slot].add(&v.scale(ti));
        }
        for (slot, w) in d.z.iter().enumerate() {
            conj[slot] = conj[slot].add(&w.scale(ti));
        }
    }
    let theta_exp: Vec<GroupElement> = theta.iter().map(exp).collect();
    let conj_exp: Vec<GroupElement> = conj.iter().map(exp).collect();
    for (slot, &sym) in xy.iter().enumerate() {
        let idx = Cochain1::slot_index(&surface, sym);
        values[idx] = theta_exp[slot].mul(&values[idx]);
    }
    for (slot, &sym) in zs.iter().enumerate() {
        let idx = Cochain1::slot_index(&surface, sym);
        values[idx] = values[idx].conjugated_by(&conj_exp[slot]);
    }
    let flags = phi.class_flags.clone();
    let mut point = RepresentationPoint::from_values(surface, backend, values)?;
    point.class_flags = flags;

    let mut pushed = Vec::with_capacity(dirs.len());
    for d in dirs {
        let mut u = Cochain1::zero(surface, backend);
        for (slot, &sym) in xy.iter().enumerate() {
            let body = dexp_body(&theta[slot], &d.xy[slot]);
            u.set_value(sym, theta_exp[slot].adjoint_action(&body));
        }
        for (slot, &sym) in zs.iter().enumerate() {
            let idx = Cochain1::slot_index(&surface, sym);
            let body = conj_exp[slot].adjoint_action(&dexp_body(&conj[slot], &d.z[slot]));
            let moved = &point.values()[idx];
            u.set_value(sym, body.sub(&moved.adjoint_action(&body)));
        }
        pushed.push(TangentVector::new(u, &point)?);
    }
    Ok((point, pushed))
}

/// Finite-difference verification report for the closedness of the
/// extended 2-form and the momentum identity.
#[derive(Clone, Debug, Serialize)]
pub struct ClosednessMomentumReport {
    pub backend: String,
    pub trials: usize,
    pub step: f64,
    /// max |FD d omega| over direction triples at the given step
    pub closedness_coarse: f64,
    /// the same at half the step
    pub closedness_fine: f64,
    /// coarse/fine; None when the fine residual sits at roundoff
    pub ratio: Option<f64>,
    /// max |omega(X_H, V) + d(mu_X)(V)| over random pairs
    pub momentum_residual: f64,
}

impl ClosednessMomentumReport {
    pub fn ratio_ok(&self) -> bool {
        self.ratio.is_none_or(|r| r >= tol::FD_RATIO)
    }
}

fn extend_at(
    phi: &RepresentationPoint,
    hint: &AlgebraElement,
    step: f64,
) -> Result<ExtendedPoint, ModuliError> {
    extend(phi, hint).map_err(|e| match e {
        ModuliError::Lie(LieError::NotInRegularSet { .. }) => {
            ModuliError::ChartTooSmall { step }
        }
        other => other,
    })
}

fn fd_domega(
    p: &ExtendedPoint,
    dirs: &[SlotGenerators],
    h: f64,
) -> Result<f64, ModuliError> {
    let mut value = 0.0;
    for i in 0..3 {
        let mut tp = [0.0; 3];
        tp[i] = h;
        let mut tm = [0.0; 3];
        tm[i] = -h;
        let component = |t: [f64; 3]| -> Result<f64, ModuliError> {
            let (point, pushed) = chart_point(&p.phi, dirs, &t)?;
            let ext = extend_at(&point, &p.lambda, h)?;
            let (j, k) = match i {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            omega_ext(&ext, &pushed[j], &pushed[k])
        };
        let partial = (component(tp)? - component(tm)?) / (2.0 * h);
        let sign = if i == 1 { -1.0 } else { 1.0 };
        value += sign * partial;
    }
    Ok(value)
}

/// Verifies, at one extended point, that the extended 2-form is closed
/// (second-order finite differences in the graph chart) and that the
/// conjugation action satisfies the momentum identity
/// omega(X_H, V) + d(mu_X)(V) = 0.
///
/// # Errors
///
/// `ChartTooSmall` when a displaced point loses the logarithm branch.
pub fn verify_closedness_and_momentum<R: Rng + ?Sized>(
    p: &ExtendedPoint,
    trials: usize,
    h: f64,
    rng: &mut R,
) -> Result<ClosednessMomentumReport, ModuliError> {
    let backend = p.phi.backend;
    let triples = trials.clamp(1, 3);
    let mut coarse = 0.0f64;
    let mut fine = 0.0f64;
    for _ in 0..triples {
        let dirs: Vec<SlotGenerators> = (0..3)
            .map(|_| {
                let u = TangentVector::random(&p.phi, rng)?;
                chart_directions(&p.phi, &u)
            })
            .collect::<Result<_, _>>()?;
        coarse = coarse.max(fd_domega(p, &dirs, h)?.abs());
        fine = fine.max(fd_domega(p, &dirs, 0.5 * h)?.abs());
    }
    let ratio = if fine > 1e-12 {
        Some(coarse / fine)
    } else {
        None
    };

    let mut momentum = 0.0f64;
    for _ in 0..trials {
        let x = backend.random_algebra(rng, 1.0);
        let ux = TangentVector::new(coboundary(&p.phi.surface, &p.phi, &x)?, &p.phi)?;
        let v = TangentVector::random(&p.phi, rng)?;
        let lhs = omega_ext(p, &ux, &v)?;
        let vdirs = [chart_directions(&p.phi, &v)?];
        let mu_at = |t: f64| -> Result<f64, ModuliError> {
            let (point, _) = chart_point(&p.phi, &vdirs, &[t])?;
            let ext = extend_at(&point, &p.lambda, h)?;
            Ok(mu_pair(&ext, &x))
        };
        // Fourth-order stencil at step h: the truncation term of the
        // plain central difference is visible against the tolerance on
        // the noncompact backend.
        let dmu = (mu_at(-2.0 * h)? - 8.0 * mu_at(-h)? + 8.0 * mu_at(h)?
            - mu_at(2.0 * h)?)
            / (12.0 * h);
        momentum = momentum.max((lhs + dmu).abs());
    }

    Ok(ClosednessMomentumReport {
        backend: backend.id.to_string(),
        trials,
        step: h,
        closedness_coarse: coarse,
        closedness_fine: fine,
        ratio,
        momentum_residual: momentum,
    })
}

/// A random kernel element of the parabolic degree-1 map, as a tangent
/// vector with correction data.
///
/// # Errors
///
/// `BadInput` when the kernel is zero-dimensional.
pub fn random_parabolic_cocycle<R: Rng + ?Sized>(
    phi: &RepresentationPoint,
    rng: &mut R,
) -> Result<TangentVector, ModuliError> {
    let cpar = build_parabolic(&phi.surface, phi)?;
    let kernel = null_space_basis(&cpar.d1, tol::RANK_RELATIVE);
    if kernel.ncols() == 0 {
        return Err(ModuliError::BadInput(
            "parabolic kernel is zero-dimensional".to_string(),
        ));
    }
    let coeffs = DVector::from_fn(kernel.ncols(), |_, _| rng.random_range(-1.0..1.0));
    let full = cpar.embedding.as_ref().expect("parabolic embedding") * (kernel * coeffs);
    let u = Cochain1::from_vector(phi.surface, phi.backend, &full);
    TangentVector::new(u, phi)
}

/// Basis of parabolic first cohomology at a relator-level point, with the
/// Gram matrix of the extended 2-form on it.
#[derive(Clone, Debug)]
pub struct ParabolicBasis {
    pub cochains: Vec<TangentVector>,
    pub gram: DMatrix<f64>,
    pub rank: usize,
    pub smallest_singular: f64,
    pub largest_singular: f64,
}

/// Computes representatives of parabolic first cohomology and the Gram
/// matrix of the pairing on them.
///
/// # Errors
///
/// `BadInput` off the relator level set; `Cohomology(IllConditioned)`
/// when the Gram rank sits inside the tolerance band.
pub fn parabolic_h1_basis(
    phi: &RepresentationPoint,
) -> Result<ParabolicBasis, ModuliError> {
    if !phi.is_relator_level() {
        return Err(ModuliError::BadInput(
            "parabolic cohomology basis needs a relator-level point".to_string(),
        ));
    }
    let cpar = build_parabolic(&phi.surface, phi)?;
    let embedding = cpar.embedding.as_ref().expect("parabolic embedding");
    let reps = h1_representatives(&cpar);
    let cochains: Vec<TangentVector> = reps
        .iter()
        .map(|v| {
            let full = embedding * v;
            TangentVector::new(Cochain1::from_vector(phi.surface, phi.backend, &full), phi)
        })
        .collect::<Result<_, _>>()?;
    let m = cochains.len();
    let ext = extend(phi, &phi.backend.zero())?;
    let mut gram = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            gram[(i, j)] = omega_ext(&ext, &cochains[i], &cochains[j])?;
        }
    }
    let (rank, smallest, largest) = if m == 0 {
        (0, 0.0, 0.0)
    } else {
        let (rank, _) = numerical_rank(&gram, tol::RANK_RELATIVE)?;
        let sigma = crate::linalg::singular_values(&gram);
        (rank, sigma.min(), sigma.max())
    };
    Ok(ParabolicBasis {
        cochains,
        gram,
        rank,
        smallest_singular: smallest,
        largest_singular: largest,
    })
}

/// Dual-path verification report: the extended form against the
/// chain-level pairing at a relator-level point.
#[derive(Clone, Debug, Serialize)]
pub struct PairingAgreementReport {
    pub backend: String,
    pub trials: usize,
    pub dim: usize,
    pub rank: usize,
    pub stabilizer_dim: usize,
    /// max |omega_ext - pairing| over random kernel cocycle pairs
    pub max_pointwise_gap: f64,
    /// max entrywise difference of the two Gram matrices
    pub max_gram_gap: f64,
    pub smallest_singular: f64,
    pub largest_singular: f64,
}

/// Compares the extended 2-form against the chain-level pairing on random
/// parabolic cocycles and on a cohomology basis.
///
/// # Errors
///
/// `BadInput` off the relator level or on a closed surface (the
/// chain-level pairing needs boundary circles).
pub fn verify_pairing_agreement<R: Rng + ?Sized>(
    phi: &RepresentationPoint,
    trials: usize,
    rng: &mut R,
) -> Result<PairingAgreementReport, ModuliError> {
    if phi.surface.boundary == 0 {
        return Err(ModuliError::BadInput(
            "the chain-level comparison needs at least one boundary circle".to_string(),
        ));
    }
    if !phi.is_relator_level() {
        return Err(ModuliError::BadInput(
            "the comparison runs at relator-level points".to_string(),
        ));
    }
    let ext = extend(phi, &phi.backend.zero())?;
    let ctx = PairingContext::new(phi.surface, phi.clone())?;
    let mut max_gap = 0.0f64;
    for _ in 0..trials {
        let u = random_parabolic_cocycle(phi, rng)?;
        let v = random_parabolic_cocycle(phi, rng)?;
        let lhs = omega_ext(&ext, &u, &v)?;
        let rhs = ctx.pairing_closed_form(&u.u, &v.u)?;
        max_gap = max_gap.max((lhs - rhs).abs());
    }
    let basis = parabolic_h1_basis(phi)?;
    let m = basis.cochains.len();
    let mut gram_gap = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            let rhs = ctx.pairing_closed_form(&basis.cochains[i].u, &basis.cochains[j].u)?;
            gram_gap = gram_gap.max((basis.gram[(i, j)] - rhs).abs());
        }
    }
    Ok(PairingAgreementReport {
        backend: phi.backend.id.to_string(),
        trials,
        dim: m,
        rank: basis.rank,
        stabilizer_dim: stabilizer_dimension(phi),
        max_pointwise_gap: max_gap,
        max_gram_gap: gram_gap,
        smallest_singular: basis.smallest_singular,
        largest_singular: basis.largest_singular,
    })
}

/// The explicit one-handle one-circle solution: x and y exponentials of
/// the first two basis vectors, the boundary value back-solved from the
/// commutator so the relator holds exactly.
pub fn fixture_su2_commutator_l1n1() -> (RepresentationPoint, Vec<ConjugacyClassSpec>) {
    let backend = Backend::su2();
    let surface = SurfaceData::new(1, 1).expect("valid surface");
    let basis = backend.basis();
    let x = exp(&basis[0].scale(1.1));
    let y = exp(&basis[1].scale(0.9));
    let commutator = x.mul(&y).mul(&x.inverse()).mul(&y.inverse());
    let z = commutator.inverse();
    let class = ConjugacyClassSpec::new(z.clone());
    let phi = RepresentationPoint::from_values(surface, backend, vec![x, y, z])
        .expect("fixture point")
        .with_classes(std::slice::from_ref(&class));
    (phi, vec![class])
}
