//! File formats, configuration and the command line around `imbal-core`.
//!
//! * [`io`]: demand CSV and holiday loading, atomic writes and the
//!   plot-ready output files.
//! * [`config`]: the `key = value` run configuration.
//! * [`lpformat`]: CPLEX LP text reader and writer for problem dumps.
//! * [`cli`]: the `imbal` subcommands, callable in-process via [`cli::run`].

pub mod cli;
pub mod config;
pub mod io;
pub mod lpformat;

pub use imbal_core as core;
