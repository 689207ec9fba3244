//! The four building blocks of the model: Nystrom global attention, the
//! reference-grid position encoder, the convolutional gated mechanism, and
//! slice-based focal (physics) attention.

mod focal;
mod gate;
mod global;
mod posenc;

pub use focal::{
    aggregate_tokens, deslice, focal_layer, physics_attention_tokens, slice_weights, FocalLayer,
    MapLayer, EMPTY_SLICE_EPS,
};
pub use gate::{gated_fuse, GateConv, GateParams, GATED_LAYERS};
pub use global::{global_layer, nystrom_attention, AttentionProj, GlobalLayer};
pub use posenc::{build_reference_grid, distance_features, encode_position, ReferenceGrid};
