//! Each chapter of the guide is attached to a module here so that
//! `cargo test --doc` compiles and runs its Rust listings.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/command-line.md")]
pub mod command_line {}
#[doc = include_str!("src/library.md")]
pub mod library {}
#[doc = include_str!("src/training.md")]
pub mod training {}
#[doc = include_str!("src/inference.md")]
pub mod inference {}
#[doc = include_str!("src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("src/formats.md")]
pub mod formats {}
