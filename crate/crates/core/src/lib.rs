//! Compile quantum verifier circuits into 3-local clock Hamiltonians, check their
//! spectra, turn low-energy states back into accepted witnesses, and evaluate the
//! majority-vote amplification and Gibbs-temperature bounds that go with them.

pub mod amplify;
pub mod circuit;
pub mod clockham;
pub mod error;
pub mod qcore;
pub mod seeding;
pub mod spectral;
pub mod thermal;
pub mod witness;

pub use error::{Error, Result};
