//! Downstream uses of concept-weighted filter responses: full-reference
//! quality scoring and recognition under progressive decolorization, plus the
//! synthetic sign set used to exercise the latter.

pub mod iqa;
pub mod recognition;
pub mod reconstruction;
pub mod signs;
pub mod softmax;

pub use iqa::iqa_score;
pub use recognition::{evaluate_recognition, extract_recognition_features};
pub use reconstruction::{reconstruct_image, reconstruction_psnr};
pub use signs::{gen_synthetic_signs, LabeledImageSet};
pub use softmax::{train_softmax, SoftmaxClassifier, SoftmaxConfig};
