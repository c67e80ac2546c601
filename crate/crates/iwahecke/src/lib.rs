//! Exact-arithmetic Iwahori-Hecke operators for GL2 of a p-adic field,
//! acting on compactly induced characters over the Bruhat-Tits tree, with
//! machine verification suites for kernel characterizations, reduction
//! identities, and pro-p Iwahori invariant bases at finite tree depth.
//!
//! Everything is exact: coefficients live in F_q, matrix entries in the
//! truncated valuation ring O/pi^N in Teichmuller digits, and linear algebra
//! is Gaussian elimination over F_q. There are no tolerances anywhere.
//!
//! Modules, bottom up:
//!
//! * [`gf`] -- F_q arithmetic, base-p digits, Lucas binomials.
//! * [`localring`] -- the truncated ring O/pi^N and its carry polynomial.
//! * [`tree`] -- canonical cosets of G/IZ, the induced-module action, the
//!   distinguished sphere sums, and pro-p Iwahori generator sets.
//! * [`exactla`] -- exact RREF, nullspaces, and subspace arithmetic over F_q,
//!   with a component-split elimination for the fan-structured matrices the
//!   Hecke operators produce.
//! * [`hecke`] -- the two Iwahori-Hecke operators, finite-depth kernels,
//!   predicted kernel generators, quotient normal forms, and bounded image
//!   search.
//! * [`verify`] -- orchestrated verification suites with machine-readable
//!   reports; this is what the CLI drives.

pub mod error;
pub mod exactla;
pub mod gf;
pub mod hecke;
pub mod localring;
pub mod par;
pub mod tree;
pub mod verify;

mod wring;

pub use error::{Error, Result};
