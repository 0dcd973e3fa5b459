pub mod cli;
pub mod error;
pub mod evalkit;
pub mod imgproc;
pub mod ingest;
pub mod keyframe;
pub mod llm;
pub mod stitch;
pub mod synth;

pub use error::{Error, Result};
