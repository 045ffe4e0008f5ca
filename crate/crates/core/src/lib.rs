pub mod bench;
pub mod error;
pub mod fingerprint;
pub mod imgcore;
pub mod mellin;
pub mod noise;
pub mod report;
pub mod search;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use fingerprint::Fingerprint;
pub use imgcore::{GrayImage, SearchRanges, SimilarityParams};
