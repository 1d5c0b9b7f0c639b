//! Optimal stopping games with ghost players under geometric Brownian motion.
//!
//! Each player faces an opponent that is real with some probability and a
//! ghost otherwise. The crate computes the single-player benchmark values,
//! the equilibrium boundary and randomised strategies, and checks them by
//! Monte Carlo.

pub mod boundary;
pub mod equilibrium;
pub mod model;
pub mod quad;
pub mod sim;
pub mod single;
pub mod strategy;

pub use boundary::{
    asym_boundary, boundary_inverse, find_touch_point, martingale_boundary, ode_boundary,
    ode_residual, Boundary, BoundaryError, BoundaryMode, EquilibriumValues,
};
pub use model::{
    characteristic_roots, validate, GameSpec, ModelError, ModelParams, Payoff, Player,
    PlayerSpec, Roots,
};
pub use single::{
    call_value, lattice_oracle, put_value, value_at, value_function, zero_value, LatticeError,
    LatticeOracle, ValueFunction,
};
pub use equilibrium::{Equilibrium, EquilibriumError};
pub use strategy::{
    belief_path, gamma1_asym, gamma1_sym, gamma2_from_boundary, randomized_stop, BeliefPath,
    ControlPath, HoldRule, StrategyError,
};
