//! Inference-time decision mechanisms over model-exported
//! log-probability tables.

pub mod answers;
pub mod geometry;
pub mod hoi;

pub use answers::{
    default_delta_grid, fit_delta, fit_lbl_params, lbl_relevance, localize, rank_answers,
    recalibrate, CandidateAnswer, Detection, LblParams, RecalibrationConfig, RegionScore,
    ValExample,
};
pub use geometry::{iou, nms, BoundingBox};
pub use hoi::{
    class_label_text, hoi_build_targets, hoi_infer, HOIAnnotation, HOICandidate, HOITargets,
    HOITriple, NO_INTERACTION,
};
