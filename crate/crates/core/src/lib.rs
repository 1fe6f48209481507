//! Range characterization and inversion of the attenuated Doppler and X-ray
//! transforms on the unit disk, via A-analytic sequence-valued maps.

pub mod aanalytic;
pub mod attenuation;
pub mod config;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod io;
pub mod quadrature;
pub mod reconstruct;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
