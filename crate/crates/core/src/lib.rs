//! Maximum-entropy estimation for hidden Markov models from the empirical
//! law of contiguous observation pairs.
//!
//! The crate is `no_std` (it needs `alloc`). IO, configuration files and
//! the command line live in the `hmm-mee` companion crate.
#![no_std]

extern crate alloc;

pub mod asymptotics;
pub mod empirical;
pub mod error;
pub mod estimator;
pub mod hypotest;
pub mod linalg;
pub mod markov;
pub mod model;
pub mod pairdist;
pub mod quadrature;
pub mod simulate;

pub use error::{MeeError, Result};
pub use model::{HmmModel, ParameterDomain, SignalFamily, StateOrder, ThetaVector};
