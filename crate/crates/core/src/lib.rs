pub mod adversary;
pub mod allocator;
pub mod error;
pub mod harness;
pub mod instance;
pub mod mms;
pub mod rational;
pub mod stacking;

pub use error::{Error, Result};
pub use instance::{Allocation, Instance, Item, Partition};
pub use rational::Rational;
