//! The guide in `book/src` as doc-tests: `cargo test -p rbgreedy-book` runs
//! every code block of every chapter. One module per chapter so a failure
//! names the chapter it came from.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/thermal-block.md")]
pub mod thermal_block {}
#[doc = include_str!("../../../book/src/reduced-basis.md")]
pub mod reduced_basis {}
#[doc = include_str!("../../../book/src/error-estimation.md")]
pub mod error_estimation {}
#[doc = include_str!("../../../book/src/batch-greedy.md")]
pub mod batch_greedy {}
#[doc = include_str!("../../../book/src/theory-checks.md")]
pub mod theory_checks {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
