//! Deterministic synthesis of binaural two-talker classroom scenes and the
//! metrics used to score separation models on them.

pub mod error;
pub mod signal;

pub use error::{Error, Result};
pub mod room;
pub mod binaural;
pub mod motion;
pub mod scene;
pub mod eval;
pub mod pipeline;
