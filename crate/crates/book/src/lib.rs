//! The guide in `book/` is written for mdbook, which cannot run snippets
//! that depend on workspace crates. Including each chapter as a module doc
//! turns its Rust blocks into doctests, so `cargo test -p mondrian-book`
//! checks every example in the book. One module per chapter keeps failures
//! traceable to their chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/mondrian_process.md")]
pub mod mondrian_process {}

#[doc = include_str!("../../../book/src/forests.md")]
pub mod forests {}

#[doc = include_str!("../../../book/src/kernel_approximation.md")]
pub mod kernel_approximation {}

#[doc = include_str!("../../../book/src/regularization_paths.md")]
pub mod regularization_paths {}

#[doc = include_str!("../../../book/src/grid.md")]
pub mod grid {}

#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
