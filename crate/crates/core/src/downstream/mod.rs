//! Analytic consumers of coordinate fields: sparse clipping, masked
//! attention, consistency flags and multi-homography classification.

pub mod attention;
pub mod multihomog;
pub mod ransac;
pub mod sparse;

pub use attention::{masked_attention, multi_head_attention, Matrix};
pub use multihomog::{multi_homography_classify, MultiHomogConfig, MultiHomogResult};
pub use ransac::{estimate_homography_ransac, symmetric_transfer_error, RansacFit};
pub use sparse::{
    assemble_filter_input, clip_sparse, filter_flags, flag_value, FilterInput, SparseCoords,
};
