pub mod baselines;
pub mod bench;
pub mod curve;
pub mod experiment;
pub mod history;
pub mod linalg;
pub mod scheduler;
pub mod space;
pub mod surrogate;
