//! Command implementations behind the `binscene` binary.

pub mod cache;
pub mod commands;
pub mod error;

pub use cache::{build_cache, DiskBanks, RoomsSummary};
pub use error::{CliError, Result, EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_PIPELINE};
