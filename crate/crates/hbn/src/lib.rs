//! Model files, marginal reports, convolution caches and the `hbn` command
//! line, on top of `hbn-core`.

pub mod cache;
pub mod cli;
pub mod model_file;
pub mod report;

pub use cli::main_with;
