pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod pathway;
pub mod pipeline;
pub mod retrieval;
pub mod routing;
pub mod service;
pub mod synth;
pub mod theory;
pub mod vecfile;
