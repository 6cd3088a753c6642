pub mod cc;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod netsim;
pub mod roccet;
pub mod time;

pub use error::{LabError, Result};
pub use time::SimTime;
