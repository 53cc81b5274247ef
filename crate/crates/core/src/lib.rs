pub mod basis;
pub mod errquant;
pub mod gp;
pub mod models_io;
pub mod pickfreeze;
pub mod seed;
pub mod sensitivity;
pub mod validation;

mod error;
pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
