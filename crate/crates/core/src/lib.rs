//! Suprema of canonical Bernoulli and Gaussian processes over finite index
//! sets: moment-norm decompositions, chaining bounds on admissible partition
//! trees, contraction-condition checks, Bernoulli decompositions and
//! weak/strong moment comparisons, each paired with an exact brute-force
//! oracle at small scale.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chaining;
pub mod cli;
pub mod contraction;
pub mod decomposition;
pub mod domain;
pub mod error;
pub mod moments;
pub mod oleszkiewicz;
pub mod report;
pub mod rng;
pub mod suprema;
pub mod suite;

pub use domain::{center_at_zero, generate_set, load_set, save_set, FiniteSet, Point, ProcessKind, Seed, SetKind};
pub use error::{Error, Result};
