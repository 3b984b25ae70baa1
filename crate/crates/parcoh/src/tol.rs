//! Central tolerance table.
//!
//! Every numerical threshold used by the crate lives here so that library
//! code, tests and the CLI agree on one set of defaults. Verification
//! drivers accept a scale factor that multiplies residual tolerances (never
//! structural ones such as rank thresholds).

/// Group/algebra membership: defining relations of a backend must hold to
/// this Frobenius-norm accuracy (unitarity, determinant, realness, ...).
pub const MEMBERSHIP: f64 = 1e-10;

/// Ad-invariance of the bilinear form on random samples.
pub const FORM_INVARIANCE: f64 = 1e-9;

/// Truncation threshold for the dexp operator series: terms are added until
/// their norm drops below this value.
pub const SERIES_TRUNCATION: f64 = 1e-14;

/// Regularity of the exponential map at Z: the smallest singular value of
/// the operator (1 - e^{-ad Z})/ad Z must exceed this.
pub const EXP_REGULARITY_SIGMA: f64 = 1e-8;

/// Newton iteration cap for the regular-branch logarithm.
pub const LOG_NEWTON_MAX_ITERS: usize = 64;

/// Convergence target for the regular-branch logarithm: ||exp(Z) - g||.
pub const LOG_CONVERGENCE: f64 = 1e-12;

/// exp/log round-trip accuracy for ||Z|| <= 1.
pub const EXP_LOG_ROUNDTRIP: f64 = 1e-9;

/// dexp against central finite differences of exp at h = 1e-5.
pub const DEXP_FINITE_DIFFERENCE: f64 = 1e-7;

/// Full antisymmetry of the triple product on random samples.
pub const TRIPLE_ALTERNATING: f64 = 1e-12;

/// Number of Gauss-Legendre nodes for the radial homotopy operator; gives
/// well below 1e-12 quadrature error for analytic integrands at ||Z|| <= 2.
pub const QUADRATURE_NODES: usize = 32;

/// Relative singular-value threshold for numerical rank decisions.
pub const RANK_RELATIVE: f64 = 1e-8;

/// Absolute floor under which a matrix counts as zero for rank purposes.
/// All rank-bearing matrices in this crate are built from adjoint blocks
/// of unit scale, so anything this small is roundoff residue (for example
/// Ad(g) - I at a numerically central g).
pub const ZERO_MATRIX: f64 = 1e-12;

/// Complex contract ||D1 * D0|| at points on the relator level set.
pub const COMPLEX_CONTRACT: f64 = 1e-9;

/// Idempotency of the parabolic slot projectors.
pub const PROJECTOR_IDEMPOTENT: f64 = 1e-10;

/// Residual for parabolic cocycle data: ||u(z_j) - (Ad(phi(z_j)) - I)X_j||.
pub const PARABOLIC_RESIDUAL: f64 = 1e-8;

/// The comparison map must commute with the differentials to this accuracy.
pub const COMPARISON_COMMUTES: f64 = 1e-9;

/// Dual-path agreement of the two pairing computations, class invariance,
/// choice-of-representative invariance, and chain-choice independence.
pub const PAIRING_DUAL_PATH: f64 = 1e-10;

/// Normalized groupoid cocycles must vanish on the boundary loops.
pub const NORMALIZATION_RESIDUAL: f64 = 1e-8;

/// Closed form of beta against its quadrature definition, and the
/// pulled-back identity exp*tau = beta - omega.
pub const BETA_CLOSED_FORM: f64 = 1e-8;

/// Pointwise identity between the contraction of tau and the 1-form theta.
pub const THETA_CONTRACTION: f64 = 1e-10;

/// Default step for finite-difference exterior derivatives.
pub const FD_STEP: f64 = 1e-4;

/// Second-order convergence: halving the step must shrink the residual by
/// at least this factor (4 in exact arithmetic).
pub const FD_RATIO: f64 = 3.5;

/// Finite-difference exterior-derivative residual for dtau = lambda.
pub const DTAU_RESIDUAL: f64 = 1e-5;

/// Momentum identity residual at FD_STEP.
pub const MOMENTUM_RESIDUAL: f64 = 1e-6;

/// Relator-level convergence for the Newton projection ||r(phi) - target||.
pub const RELATOR_LEVEL: f64 = 1e-10;

/// Iteration cap for the Newton projection onto the relator level set.
pub const RELATOR_NEWTON_MAX_ITERS: usize = 200;

/// Cached relator values on a representation point must match a fresh
/// evaluation to this accuracy.
pub const RELATOR_CACHE: f64 = 1e-12;

/// Conjugacy-class membership: fingerprint distance.
pub const CLASS_FINGERPRINT: f64 = 1e-8;

/// Half-width of the band around trace +-2 inside which a noncentral real
/// element is tagged unipotent rather than elliptic or hyperbolic.
pub const CLASS_TRACE_BAND: f64 = 1e-6;

/// Orbit points: exp(Z) must land in the class to this accuracy.
pub const ORBIT_EXP: f64 = 1e-9;

/// Extended points: ||exp(Lambda) - r(phi)||.
pub const EXTENDED_POINT: f64 = 1e-9;

/// Gram-matrix agreement between the restricted 2-form on the tangent
/// kernel and the cohomology pairing.
pub const GRAM_AGREEMENT: f64 = 1e-9;

/// Equivariance and G-invariance identities on random samples.
pub const EQUIVARIANCE: f64 = 1e-10;

/// Gauge-conjugacy compatibility and restriction/corestriction identities.
pub const GAUGE_IDENTITY: f64 = 1e-12;

/// Exact abelian oracle: intersection-form entries.
pub const INTERSECTION_EXACT: f64 = 1e-12;

/// Nondegeneracy: smallest/largest singular value of a pairing Gram matrix
/// at irreducible points with generic classes must exceed this.
pub const NONDEGENERACY: f64 = 1e-6;
