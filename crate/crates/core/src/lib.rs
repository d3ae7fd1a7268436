//! Fourier-Galerkin spectral toolkit for periodic Helmholtz problems on a
//! strip: cell resolvents, their poles as eigenvalues of a quadratic
//! pencil, pole continuation in the second quasimomentum, contour assembly
//! of the strip Fredholm family and its decay.

pub mod a_family;
pub mod cell_operator;
pub mod cli;
pub mod config;
pub mod floquet;
pub mod io;
pub mod linalg;
pub mod medium;
pub mod pipeline;
pub mod pole_tracker;
pub mod symbol;
