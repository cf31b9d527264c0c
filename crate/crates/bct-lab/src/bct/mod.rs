//! Backward-compatible training: the old-feature cache and its denoising,
//! the batch mixing operation, the method losses, and the training driver
//! that ties them together.

mod cache;
mod denoise;
mod losses;
mod mix;
mod prototypes;
mod train;

pub use cache::{load_cache, save_cache, CacheRow, OldFeatureCache};
pub use denoise::denoise;
pub use losses::{l2bct_loss, mixbct_loss, proto_bct_loss};
pub use mix::{credible_in_batch, mix_batch};
pub use prototypes::{compute_prototypes, PrototypeSet};
pub use train::{
    prepare_cache, train_compatible, train_compatible_with_cache, BatchRecord, MethodConfig,
    RunLog,
};
