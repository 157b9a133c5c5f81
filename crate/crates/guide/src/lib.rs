//! Guide snippets. Each chapter of `book/src` is a module here so that `cargo test`
//! compiles and runs its code blocks.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/loops.md")]
pub mod loops {}
#[doc = include_str!("../../../book/src/elliptic.md")]
pub mod elliptic {}
#[doc = include_str!("../../../book/src/frozen.md")]
pub mod frozen {}
#[doc = include_str!("../../../book/src/levi_civita.md")]
pub mod levi_civita {}
#[doc = include_str!("../../../book/src/continuation.md")]
pub mod continuation {}
#[doc = include_str!("../../../book/src/helium.md")]
pub mod helium {}
#[doc = include_str!("../../../book/src/detline.md")]
pub mod detline {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
