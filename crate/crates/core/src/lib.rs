pub mod density;
pub mod dual;
pub mod error;
pub mod grid;
pub mod lp;
pub mod mechanisms;
pub mod myerson;
pub mod orders;
pub mod plan;
pub mod pwl;
pub mod reduced;
pub mod quadrature;

pub use error::{Error, LpError, Result};
