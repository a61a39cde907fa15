pub mod geometry;
pub mod annotation;
pub mod pseudo_label;
pub mod detection_metrics;
pub mod recognition_metrics;
pub mod synth;
