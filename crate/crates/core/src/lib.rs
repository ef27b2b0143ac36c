//! Zero modes of the Dirac operator outside the unit ball: Clifford algebra,
//! spinor fields on grids, norms, the inversion transform and numerical checks.

pub mod clifford;
pub mod dirac;
pub mod error;
pub mod extremal;
mod fft;
pub mod grid;
pub mod inversion;
pub mod io;
pub mod norms;
mod operator;
pub mod zero_mode;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/algebra.md")]
    mod algebra {}
    #[doc = include_str!("../../../book/src/fields.md")]
    mod fields {}
    #[doc = include_str!("../../../book/src/norms.md")]
    mod norms {}
    #[doc = include_str!("../../../book/src/zero_mode.md")]
    mod zero_mode {}
    #[doc = include_str!("../../../book/src/scan.md")]
    mod scan {}
    #[doc = include_str!("../../../book/src/extremal.md")]
    mod extremal {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
