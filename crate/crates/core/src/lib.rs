pub mod features;
pub mod geom;
pub mod harness;
mod label;
pub mod lp;
pub mod ml;
pub mod rng;
pub mod scene;
pub mod select;
pub mod zsm;

pub use label::Label;
