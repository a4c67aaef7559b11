//! Fast multiplication schemes for structured matrices: random-walk search,
//! exact lifting, and recursive complexity analysis.
//!
//! A bilinear scheme of rank `r` for a matrix product `C = A * B` is a list of
//! `r` products `m_q = (Σ_i u_qi a_i)(Σ_j v_qj b_j)` together with output
//! combinations `c_k = Σ_q w_qk m_q`. The scheme is valid when the rank-one
//! terms sum to the multiplication tensor of the chosen matrix format:
//! `Σ_q u_q ⊗ v_q ⊗ w_q = T`. Because correctness never commutes the factors,
//! a valid scheme applies verbatim to block matrices, which is what makes
//! low-rank schemes fast: recurse on blocks.
//!
//! The crate covers the whole pipeline:
//!
//! * [`tensor`] builds multiplication tensors for products of general,
//!   triangular, symmetric, skew-symmetric and related matrix formats,
//!   including products against a transposed operand.
//! * [`gf`] provides the packed GF(2)/GF(3) arithmetic underneath everything.
//! * [`scheme`] defines schemes over prime fields and over Z/Q, verification,
//!   addition counts, and a plain-text file format.
//! * [`flip`] searches for low-rank schemes by a random walk over the flip
//!   graph of a tensor's decompositions.
//! * [`lift`] turns a mod-p scheme into an exact scheme over the integers or
//!   rationals via Hensel lifting and rational reconstruction.
//! * [`analysis`] classifies a scheme's recursive structure and computes the
//!   constant γ in its `γ n^ω + O(n²)` multiplication count, plus the
//!   closed-form operation counts used to compare against baselines.
//! * [`cli`] implements the `stmm` command-line tool on top of the library.

pub mod analysis;
pub mod cli;
pub mod flip;
pub mod gf;
pub mod lift;
pub mod scheme;
pub mod tensor;

pub use analysis::{classify_terms, gamma, AnalysisConfig, Criterion, GammaValue, RecursionProfile};
pub use gf::{EchelonForm, GFMatrix, PackedVec, RowOp};
pub use lift::{lift_to_exact, LiftError, PadicScheme};
pub use scheme::{ExactScheme, Scheme, SchemeHeader};
pub use tensor::{FormatPair, StructureTag, Tensor};
