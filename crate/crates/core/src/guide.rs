//! The book chapters under `book/src` double as doc-tests: every fenced
//! Rust block in the guide compiles and runs against the current crate.
