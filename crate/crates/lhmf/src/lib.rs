//! Locally harmonic Maass forms built from indefinite integral binary
//! quadratic forms: truncated-series evaluators for the forms f_{k,D},
//! g_{k+1,D} and their negative-weight lifts, a Wirtinger-jet calculus for
//! the raising/Bol/shadow/flipping operators, Eichler integrals with
//! numerically extracted Fourier coefficients, and a verification suite for
//! the identities tying all of these together.

pub mod eichler;
pub mod jets;
pub mod kahan;
pub mod qforms;
pub mod series;
pub mod specfun;
pub mod verify;

pub use jets::{bol, bol_order, flip, iterate_raise, laplacian, raise, rd_closed_form, slash, xi, Jet, Weight};
pub use qforms::{
    e_d_proximity, enumerate_forms, support_set, Discriminant, Geodesic, Point, QForm,
};
