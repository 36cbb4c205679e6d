//! Reduced dynamics of a ball rolling without sliding on a uniformly rotating,
//! possibly tilted surface of revolution.
//!
//! Lengths are measured in ball radii. The surface is described by
//! [`profile::Profile`], the physical constants by [`dynamics::SystemParams`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atlas;
pub mod conserved;
pub mod dynamics;
pub mod equilibria;
pub mod integrator;
pub mod linearization;
pub mod output;
pub mod profile;
pub mod verify;

pub use dynamics::{FullState, ReducedState, StateDerivative, SystemParams};
pub use profile::{FJet, Profile, ProfileKind, ProfileSpec, PsiJet};
