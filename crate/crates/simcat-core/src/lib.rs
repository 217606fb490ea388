pub mod augment;
pub(crate) mod binio;
pub mod cache;
pub mod data;
pub mod encoders;
pub mod error;
pub mod gradcheck;
pub mod img;
pub mod nn;
pub mod solver;
pub mod util;

pub use error::{Error, Result};
