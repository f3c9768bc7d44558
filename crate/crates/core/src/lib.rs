pub mod baseline;
pub mod cli;
pub mod ensemble;
pub mod harness;
pub mod linalg;
pub mod losscalc;
pub mod policy;
pub mod regress;
pub mod rng;
pub mod subset;
