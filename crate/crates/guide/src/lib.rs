//! The chapters of `book/` and the README compiled as doctests, so every snippet in the
//! docs is checked by `cargo test`. One module per chapter keeps failures
//! traceable to their file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/signal-model.md")]
pub mod signal_model {}
#[doc = include_str!("../../../book/src/estimation.md")]
pub mod estimation {}
#[doc = include_str!("../../../book/src/bounds.md")]
pub mod bounds {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
