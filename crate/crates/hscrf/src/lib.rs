//! Holistic scene-understanding CRF with swappable potential providers.
//!
//! The model couples segment and super-segment class labels, candidate object
//! detections, per-class presence bits and a scene variable in one random
//! field. Every potential can be sourced from classifier-style tables
//! ("machine"), aggregated vote counts ("human"), annotations ("gt"), or
//! dropped entirely, and the harness re-learns and re-infers for every such
//! configuration to measure what each component contributes.

pub mod data;





pub mod eval;
pub mod graph;
pub mod learn;
pub mod potentials;
pub mod shape;


