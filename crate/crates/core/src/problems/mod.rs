//! Problem families and the networks that solve them.

mod build;
mod circuit;
pub mod spec;

pub use build::{
    build, build_counting_layer, build_repetition_layer, BuildContext, Built, Readout,
};
pub use spec::*;
