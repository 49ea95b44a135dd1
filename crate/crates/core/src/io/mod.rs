//! Configuration, CSV/JSON/SVG output and the command-line interface.

pub mod cli;
pub mod config;
pub mod output;
pub mod svg;

pub use cli::cli_main;
pub use config::{Command, KernelArg, PhiArg, RunConfig};
pub use svg::{emit_svg_plot, Axis, Plot, Series};
