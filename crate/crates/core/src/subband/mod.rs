//! Band layouts, the architecture builder, and receptive fields.

pub mod layout;
pub mod model;
pub mod receptive;

pub use layout::{paper_layout, uniform_layout, Band, BandLayout, PAPER_FEATURE_DIM};
pub use model::{
    build_model, build_model_for, Architecture, ConcatVariant, InputDims, ModelSpec, NUM_CLASSES,
    PAPER_DROPOUT,
};
pub use receptive::{graph_receptive_field, receptive_field, receptive_field_at, ReceptiveField};
