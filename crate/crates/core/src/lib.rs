pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod io;
pub mod model;
pub mod optim;
pub mod quadrature;
pub mod rng;
pub mod simulator;
pub mod skellam;
