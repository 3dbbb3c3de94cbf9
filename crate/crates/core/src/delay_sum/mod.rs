//! Delay-and-sum ambiguity analysis.
//!
//! [`compute_af`] evaluates the discretized ambiguity surface by brute force,
//! [`predict_side_peaks`] lists where its side peaks must appear,
//! [`unambiguity_region`] builds designated side-peak-free rectangles and
//! [`verify_prediction`] checks a surface against a prediction.

mod predict;
mod region;
mod surface;
mod verify;

pub use predict::{
    doppler_profile, predict_side_peaks, predict_side_peaks_over, Algorithm, LatticePoint,
    PeakClass, PeakPrediction, PredictedPeak, PREDICTION_FLOOR,
};
pub use region::{
    unambiguity_region, Interval, PartialVariant, RegionChoice, RegionError, RegionPiece,
    RegionRect, UnambiguityRegion,
};
pub use surface::{
    compute_af, compute_cross_af, default_fd_grid, default_tau_grid, doppler_step_hz, fd_grid,
    AfError, AfSurface, AfWindow,
};
pub use verify::{
    local_maxima, threshold_from_db, verify_grid, verify_prediction, MatchReport, NumericPeak,
    PeakGrid, VerifyError, DEFAULT_DYNAMIC_RANGE_DB,
};
