pub mod channel;
pub mod codebook_io;
pub mod dictionary;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod geometry;
pub mod ksvd;
pub mod linalg;
pub mod precoding;

pub use error::{Error, Result};
