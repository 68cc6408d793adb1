pub mod constraints;
pub mod design;
pub mod error;
pub mod experiment;
pub mod game;
pub mod graph;
pub mod prevention;
pub mod relaxation;
pub mod sdp;
pub mod spectral;
