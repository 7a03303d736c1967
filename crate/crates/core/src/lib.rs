pub mod bits;
pub mod dyadic;
pub mod error;
pub mod machine;

pub use bits::Bits;
pub use dyadic::Dyadic;
pub use error::{Error, Result};
pub mod config;
pub mod cosmos;
pub mod enumerate;
pub mod experiments;
pub mod family;
pub mod lab;
pub mod prior;
pub mod weights;
