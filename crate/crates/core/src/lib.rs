//! Adversarial implicit-semantic communication.
//!
//! A source holds a knowledge graph and an evaluator that scores candidate
//! links; a destination holds a decoder that infers implicit terms from the
//! clue terms it receives. The two are trained as a minimax game, clues are
//! carried over an AWGN channel, and the destination decodes them with the
//! learned inference rule as a prior.

pub mod baselines;
pub mod channel;
pub mod checkpoint;
pub mod decoder;
pub mod diagnostics;
pub mod error;
pub mod evaluator;
pub mod experiments;
pub mod gcn;
pub mod graph;
pub mod numerics;
pub mod receiver;
pub mod trainer;

pub use baselines::{GaeModel, Method, VgaeModel};
pub use channel::ChannelConfig;
pub use checkpoint::Checkpoint;
pub use decoder::{DecoderModel, DecoderObjective};
pub use error::{Error, Result};
pub use evaluator::EvaluatorModel;
pub use gcn::{Activation, FeatureMode, Features, GcnParams};
pub use graph::{load_edge_list, split_links, KnowledgeGraph, LinkSplit};
pub use numerics::{Matrix, RngState};
pub use trainer::{train, TrainConfig, TrainHistory};
