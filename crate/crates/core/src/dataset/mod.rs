//! YOLO-format dataset tooling: labels, rasters, layout, splits,
//! augmentation and letterboxing.

pub mod augment;
pub mod image;
pub mod labels;
pub mod layout;
pub mod letterbox;
pub mod split;

pub use augment::{augment, derive_seed, AugmentKind, AugmentOp, AugmentParams};
pub use image::{read_ppm, write_ppm, Image};
pub use labels::{cxcywh_to_xyxy, parse_labels, write_labels, xyxy_to_cxcywh, Annotation};
pub use layout::{load_split, validate_dataset, DatasetConfig, ValidationReport, Violation};
pub use letterbox::{letterbox, LetterboxTransform};
pub use split::{split_dataset, Split, SplitManifest};
