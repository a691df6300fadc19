//! Classical multipolar spin dynamics from SU(N) coherent states, N = 2..5.

pub mod algebra;
pub mod coherent;
pub mod generators;
pub mod dynamics;
pub mod observables;
pub mod quantum;
pub mod cli;
