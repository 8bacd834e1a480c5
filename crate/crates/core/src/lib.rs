//! Planning and simulation core for quadrotor perching on inclined surfaces.
//!
//! The crate covers the full pipeline from target pose to tracked flight:
//! minimum-snap piecewise polynomials solved as quadratic programs
//! ([`qp`], [`trajectory`]), algebraic thrust-bound certificates built on
//! Sturm sequences ([`polyalg`]), the perching constraint set and
//! time-scaling loop ([`perch`]), differential-flatness reference outputs
//! ([`flatness`]), and an SE(3) geometric-controller rigid-body simulator
//! ([`sim`]).
//!
//! `no_std` compatible with `alloc` when built without the `std` feature;
//! file IO and the command-line front end live in the companion crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod flatness;
pub mod perch;
pub mod polyalg;
pub mod qp;
pub mod sim;
pub mod trajectory;

/// Standard gravity used throughout, m/s^2.
pub const GRAVITY: f64 = 9.81;
