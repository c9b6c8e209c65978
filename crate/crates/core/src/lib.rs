//! Stark–Heegner cycles attached to Bianchi modular forms.
//!
//! This crate computes, in exact finite-precision p-adic arithmetic:
//!
//! * overconvergent lifts of Bianchi modular eigensymbols of parallel even
//!   weight (k, k) and squarefree level N = p·M over the five Euclidean
//!   imaginary quadratic fields,
//! * the spreading of the lift over the Bruhat–Tits tree of PGL₂(F_p) into
//!   the system of distributions μ_f{r−s} on P¹(F_p),
//! * the `log` and `ord` double integrals against these distributions and the
//!   cohomological L-invariants they determine,
//! * optimal embeddings of relative quadratic orders, Stark–Heegner cycles,
//!   the analytic monodromy module, and p-adic Abel–Jacobi images.
//!
//! The modules mirror the mathematical layers: [`padic`] (scalars), [`numfield`]
//! (the base field F and the CM field K), [`tree`] (Bruhat–Tits tree),
//! [`eigendata`] (Hecke eigen-data), [`modsym`] (classical Bianchi modular
//! symbols), [`overconv`] (distribution coefficients, lifting, spreading),
//! [`integrals`] (double integrals and L-invariants), [`cycles`] (embeddings,
//! cycles, Abel–Jacobi), and [`cli`] (orchestration and caching).

pub mod cycles;
pub mod eigendata;
pub mod errors;
pub mod integrals;
pub mod linalg;
pub mod modsym;
pub mod numfield;
pub mod overconv;
pub mod padic;
pub mod tree;

/// Binary entry point; see the `cli` module for the subcommands.
pub fn cli_main() {
    std::process::exit(0);
}
