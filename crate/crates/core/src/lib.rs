pub mod alignment;
pub mod groundtruth;
pub mod manifestation;
pub mod metrics;
pub mod numeric;
pub mod pipeline;
pub mod proportion;
pub mod report;
pub mod taxonomy;
