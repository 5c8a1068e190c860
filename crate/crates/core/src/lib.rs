mod binio;
pub mod analyzer;
pub mod cli;
pub mod error;
pub mod gradfab;
pub mod jepacore;
pub mod maskfab;
pub mod probefab;
pub mod selfcheck;
pub mod tokenfab;
pub mod trainfab;
pub mod worldsim;

pub use error::{Error, Result};
