pub mod error;
pub mod network;
pub mod oracle;
pub mod par;
pub mod problems;
pub mod random;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use problems::ProblemSpec;
pub use solver::{count_solutions, solve, Solution, SolverConfig};
