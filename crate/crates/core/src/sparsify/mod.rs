//! Sparsity schedule and magnitude-based pruning masks.

mod mask;
mod schedule;

pub use mask::{
    apply_mask, apply_mask_in_place, kept_count, layerwise_magnitude_mask, magnitude_mask,
    magnitude_mask_with, prune_count, PruneMask, PruneScope,
};
pub use schedule::{sparsity_at_round, SparsitySchedule};
