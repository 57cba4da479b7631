pub mod frustration;
pub mod phase_scan;
pub mod predict;
pub mod simulate;
pub mod validate_frames;
