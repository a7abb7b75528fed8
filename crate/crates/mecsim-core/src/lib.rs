//! Core simulation and learning machinery for a UAV-assisted mobile-edge
//! computing system.
//!
//! The crate models a square service area shared by a set of mobile users,
//! a grid of base stations wired to an edge cloud, and a single UAV that
//! executes offloaded tasks in interfering virtual machines. Time advances
//! in fixed decision epochs; each epoch every user picks where its queued
//! tasks run (local CPU, cloud via a base station, or the UAV).
//!
//! Modules:
//! - [`config`]: all system parameters, validation, and the text format.
//! - [`mobility`]: UAV smooth-turn and user Gauss-Markov motion plus the
//!   location grid.
//! - [`radio`]: link gains and Shannon rates.
//! - [`env`]: the per-epoch state transition (queues, transfers, VM
//!   interference, delays, energies, utilities).
//! - [`policies`]: the four baseline schedulers.
//! - [`sim`]: seeded simulation assembly and the [`sim::Environment`] trait.
//! - [`tabular`]: exact value iteration and tabular Q-learning on small
//!   enumerable instances.
//! - [`micro`]: a tiny, exactly-enumerable instance of the system used as a
//!   correctness oracle for the learning stack.
//! - [`neural`]: dense tensors, reverse-mode autodiff, LSTM, Adam.
//! - [`drqn`]: the recurrent Q-network agent, replay memory, and the
//!   offline digital-twin trainer.
//!
//! The crate is `no_std`-compatible (with `alloc`); file IO, the CLI, and
//! the experiment runner live in the companion `mecsim` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod config;
pub mod drqn;
pub mod env;
pub(crate) mod math;
pub mod micro;
pub mod mobility;
pub mod neural;
pub mod policies;
pub mod radio;
pub mod sim;
pub mod tabular;
