//! Parabolic group cohomology of surface group systems and the induced
//! symplectic pairing on representation-variety moduli spaces.
//!
//! The library is organized bottom-up:
//!
//! - [`linalg`]: the one-sided Jacobi singular value decomposition behind
//!   every rank, subspace and least-squares decision.
//! - [`lie`]: matrix Lie group backends (SU(2), SL(2,R), U(1)^k) with the
//!   invariant bilinear form, exponential/logarithm machinery, the Cartan
//!   3-form and the radial homotopy operator.
//! - [`fox`]: words in the free group and groupoid generators of a surface
//!   with boundary, the surface relators, Fox derivatives, and evaluation of
//!   group-ring elements through a representation.
//! - [`cohomology`]: twisted cochain complexes at a representation point
//!   (absolute, relative, parabolic, trivial-coefficient variants), numerical
//!   rank reports, the comparison map, and parabolic cocycle data.
//! - [`bar`]: degree-2 bar chains, the 2-chain `c` with boundary
//!   `[r] − Σ[z_j]`, its groupoid lift, cup products, and the two independent
//!   computations of the symplectic pairing.
//! - [`conjclass`]: conjugacy classes and adjoint orbits: the Kirillov form,
//!   the equivariant 2-form τ, the closed form of β, and their numerical
//!   verification reports.
//! - [`moduli`]: representation points, the extended space over the relator
//!   map, the closed equivariant 2-form and momentum map, finite-difference
//!   verification, and groupoid restriction/corestriction.
//! - [`tol`]: every numerical tolerance used by the crate, in one table.
//!
//! All values are immutable after construction and all operations are pure
//! functions, so everything is safe to use from parallel workers.

pub mod bar;
pub mod cohomology;
pub mod conjclass;
pub mod fox;
pub mod lie;
pub mod linalg;
pub mod moduli;
pub mod tol;
