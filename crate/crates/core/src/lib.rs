//! Learning-augmented online solvers for concave packing and convex covering,
//! with the offline oracles and certificate checks used to test them.

pub mod applications;
pub mod covering;
pub mod error;
pub mod harness;
pub mod io;
pub mod lq;
pub mod model;
pub mod objective;
pub mod oracles;
pub mod packing;

pub use error::{PdlaError, Result};
