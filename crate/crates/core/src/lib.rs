//! Chart-local computational toolkit for precontact structures.
//!
//! The crate works with explicit coordinate charts throughout: differential
//! forms and vector fields carry symbolic coefficient expressions, while all
//! verification questions (ranks, kernels, subspace comparisons) are settled
//! numerically at seeded sample points.
//!
//! Module map:
//! - [`expr`] — symbolic scalar expressions on a chart (parse, differentiate,
//!   evaluate).
//! - [`exterior`] — differential forms, vector fields, smooth maps, and the
//!   exterior calculus (d, wedge, interior product, Lie derivative, pullback).
//! - [`pointlin`] — pointwise numeric linear algebra: SVD ranks, kernels,
//!   restricted bilinear forms, affine solves, subspace comparisons.
//! - [`sample`] — seeded deterministic point sampling and the data-parallel
//!   map over sample sets.
//! - [`precontact`] — hyperplane fields, the rank criteria that certify a
//!   precontact structure, characteristic subspaces, Darboux models.
//! - [`cover`] — the scaling cover `M × R^×` with its homogeneous
//!   (pre)symplectic form, Liouville potential, and Euler field.
//! - [`dynamics`] — Reeb and contact Hamiltonian fields, homogeneous
//!   Hamiltonian fields on the cover, the contact Jacobi bracket, and a
//!   fixed-step RK4 integrator.
//! - [`reduction`] — constraint submanifolds, submanifold classification,
//!   moment maps for strict actions, and numeric verification of reductions.

pub mod cover;
pub mod dynamics;
pub mod error;
pub mod exterior;
pub mod expr;
pub mod pointlin;
pub mod precontact;
pub mod reduction;
pub mod sample;

pub use error::{Error, Result};
