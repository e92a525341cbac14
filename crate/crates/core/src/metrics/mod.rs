//! Evaluation metrics: annotator-weighted VQA accuracy, CIDEr-D,
//! detection/localization AP, HOI AP, concept macro accuracy, top-k.

pub mod ap;
pub mod cider;
pub mod report;
pub mod vqa;

pub use ap::{detection_ap, hoi_ap, localization_map, GtTriple, LocalizationSample};
pub use cider::{caption_tokens, cider_d, CiderResult};
pub use report::{web10k_accuracy, EvalReport};
pub use vqa::{topk_accuracy, vqa_accuracy};
