//! The guide's chapters, included as module docs so that every listing in
//! `book/src` runs under `cargo test --doc`. One module per chapter keeps
//! failures traceable to their file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/keyframes.md")]
pub mod keyframes {}
#[doc = include_str!("../../../book/src/stitching.md")]
pub mod stitching {}
#[doc = include_str!("../../../book/src/synth.md")]
pub mod synth {}
#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../book/src/manifest.md")]
pub mod manifest {}
