//! Low-lying zeros of primitive cubic Dirichlet L-functions.

pub mod characters;
pub mod cli;
pub mod cubic_symbol;
pub mod density;
pub mod eisenstein;
pub mod error;
pub mod lfunction;
pub mod prediction;
pub mod prime_sums;
pub mod primes;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result};
