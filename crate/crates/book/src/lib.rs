// The guide under `book/` is plain mdbook, which cannot run Rust listings
// that depend on a local crate. Each chapter is pulled in here as the doc
// comment of an empty module, so `cargo test --doc -p exderiv-book` compiles
// and runs every listing against the current library. One module per
// chapter keeps failure messages traceable to a file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/local-geometry.md")]
pub mod local_geometry {}
#[doc = include_str!("../../../book/src/projection.md")]
pub mod projection {}
#[doc = include_str!("../../../book/src/adaptive.md")]
pub mod adaptive {}
#[doc = include_str!("../../../book/src/thresholding.md")]
pub mod thresholding {}
#[doc = include_str!("../../../book/src/noisy-predictors.md")]
pub mod noisy_predictors {}
#[doc = include_str!("../../../book/src/selection.md")]
pub mod selection {}
#[doc = include_str!("../../../book/src/benchmark.md")]
pub mod benchmark {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
