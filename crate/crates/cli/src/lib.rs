//! Library surface of the `eads` command-line tool.
//!
//! Everything the binary does lives here so integration tests can drive the
//! same code paths without spawning processes.

pub mod config;
pub mod csvout;
pub mod presets;
pub mod run;
pub mod svg;

/// Process exit codes used by the binary.
pub mod exit_codes {
    /// Completed without errors.
    pub const OK: i32 = 0;
    /// Bad command line or malformed configuration file.
    pub const BAD_INPUT: i32 = 2;
    /// A requested physics invariant failed to hold on the computed output.
    pub const INVARIANT_FAILED: i32 = 3;
    /// Runtime failure (I/O, simulation error).
    pub const RUNTIME: i32 = 4;
}
