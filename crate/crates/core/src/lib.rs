//! Learned generating functions for Poisson integrators on so*(3).
//!
//! The crate trains a small neural generating function `S(t, p; W)` to
//! satisfy a Hamilton-Jacobi equation posed on the cotangent groupoid of
//! SO(3), then realizes the induced one-step map for the rigid body on the
//! dual algebra. The point of the construction is a division of labor:
//!
//! * structure preservation (Casimir conservation, i.e. staying on the
//!   momentum sphere) is exact by construction, for any network weights,
//!   because each step factors through the groupoid's source and target
//!   momentum maps;
//! * accuracy (tracking the true flow, conserving the Hamiltonian) is what
//!   training buys, by driving the equation residual to zero at collocation
//!   points.
//!
//! Module layout: [`lie_poisson`] holds the so(3) chart primitives, the
//! rigid-body system, and the RK4 reference; [`groupoid`] the source/target
//! momentum maps and their Poisson certification; [`net`] the tanh MLP with
//! forward-mode input derivatives and reverse-mode weight gradients;
//! [`train`] collocation sampling, the HJ residual, and the Adam loop;
//! [`integrator`] the implicit one-step map and its diagnostics; [`io`]
//! plain-text serialization of training histories and trajectories.

pub mod error;
pub mod groupoid;
pub mod integrator;
pub mod io;
pub mod lie_poisson;
pub mod net;
pub mod train;

pub use error::{Error, Result};
pub use net::CollocationPoint;
