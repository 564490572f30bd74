pub mod channel;
pub mod dimred;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod protocol;
pub mod quadrature;
pub mod search;
pub mod solver;

pub use error::{Error, Result};
