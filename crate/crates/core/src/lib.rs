//! Spectral analysis of one-dimensional Schrödinger operators `-u'' + q'(x) u`
//! whose potential `q'` is a signed measure: a piecewise-constant density
//! plus point atoms.
//!
//! The operator is handled through the quasi-derivative `u^[1] = u' - q u`,
//! which stays continuous across atoms, so eigenvalue problems reduce to an
//! ordinary Prüfer-angle shooting problem with no distributional jump
//! conditions.
//!
//! * [`measure`]: potentials, exact interval masses and Stieltjes pairings.
//! * [`criteria`]: the lower mass constant `C`, the bound `-2C²` and window
//!   profiles that indicate discreteness of the spectrum.
//! * [`quasi_ode`]: Prüfer propagation of `(u, u^[1])`.
//! * [`spectral`]: Dirichlet eigenvalues, eigenfunctions, truncation sweeps.
//! * [`forms`]: the quadratic form and the improper potential energy.
//! * [`lab`]: randomized checks of the underlying inequalities.

// `!(a < b)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;
pub mod forms;
pub mod lab;
pub mod measure;
pub mod quasi_ode;
pub mod spectral;

pub use criteria::{brinck_constant, lower_bound_estimate, BrinckReport, MolchanovProfile, Verdict};
pub use measure::{Atom, BvPotential, GridFunction, Interval, PotentialSpec, Side};
pub use quasi_ode::PrueferState;
pub use spectral::{SpectrumReport, Tolerances};

#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}
