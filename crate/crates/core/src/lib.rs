//! Fourier-mode analysis of Vekua-type operators `Pu = Lu - q·u - p·ū` on
//! tori, the 3-sphere, and their products.
//!
//! Everything lives in coefficient space: a field is a finite map from
//! representation classes to square complex matrices, and every operator
//! acts mode by mode.

pub mod constvekua;
pub mod dual;
pub mod error;
pub mod field;
pub mod odevekua;
pub mod symbol;

pub use num_complex::Complex64;

pub use error::{ParseError, Result, VekuaError};

/// Caveat attached to every scan result: a finite scan only gives evidence.
pub const TRUNCATION_CAVEAT: &str = "truncation-limited";
