//! Optimal inflow control for transport networks with nonlinear damping and
//! stochastic demand.
//!
//! A tree network carries a density `z` on each arc with linear flux
//! `λ(t) z` and separable damping `μ(t) ĝ(z)`. Demand at each leaf follows a
//! Jacobi process. The inflow that minimises the expected squared mismatch
//! between supply and demand is obtained by tracking conditional mean demand
//! backwards along characteristics ([`control`]), and is checked by forward
//! simulation of the network ([`pde`]) and Monte Carlo experiments
//! ([`experiment`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod damping;
pub mod demand;
pub mod experiment;
pub mod network;
pub mod output;
pub mod pde;
pub mod rng;
pub mod scenario;
pub mod timefuncs;
