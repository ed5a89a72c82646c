pub mod cli;
pub mod features;
pub mod geo;
pub mod graphs;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod synth;
