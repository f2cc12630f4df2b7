//! Two-stage named-entity recognition: a coarse mention tagger followed by a
//! fine-grained classifier that types each detected mention.

pub mod classifier;
pub mod codec;
pub mod corpus;
pub mod encoder;
pub mod evaluation;
pub mod pipeline;
pub mod synthetic;
pub mod tagger;
pub mod taxonomy;
