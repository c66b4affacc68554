//! Intrinsic-dimension analysis of time x voxel datasets.
//!
//! The crate covers the full desk-scale pipeline: loading or simulating a
//! 4-D acquisition, preprocessing it into the t x n analysis matrix,
//! estimating the correlation fractal dimension from pair-count or
//! box-count log-log curves via Tukey-weighted sigmoid fitting, and
//! cross-validating the estimate with fastICA unmixing and
//! reconstruction-error-versus-components curves.

pub mod error;
pub mod fractal;
pub mod ica;
pub mod io;
pub mod matrix;
pub mod stats;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
pub use fractal::{
    box_count_curve, estimate_fd, estimate_fd_with_curve, fd_summary, fit_sigmoid,
    pair_count_curve, radii_for, tukey_window, FdSummary, LogLogCurve, Method, RadiusPolicy,
    SigmoidFit,
};
pub use ica::{
    fastica, match_sources, rmse_curve, sort_components, whiten, Nonlinearity, SourceMatch,
    TargetDim, UnmixingModel, WhiteningModel,
};
pub use matrix::{apply_mask_and_threshold, decimate, linearize_slice, DataMatrix};
pub use synth::{export_sources, generate_sources, load_sources, mix, SourceSet, SourceSpec};
pub use volume::{fwhm_to_sigma, gaussian_smooth, Volume4D, VoxelMask};
