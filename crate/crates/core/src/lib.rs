//! Frustration-free quantum tree Hamiltonians built from random rank-`r`
//! two-site projectors: dimension analytics, ground-space construction,
//! brute-force cross-checks and frustration witnesses.

pub mod error;
pub mod exact;
pub mod frustration;
pub mod groundspace;
pub mod linalg;
pub mod mmio;
pub mod oracle;
pub mod projectors;
pub mod recursion;
pub mod tree;

pub use error::{Error, Result};
pub use groundspace::{GammaLevel, Mode, TreeGroundSpace};
pub use projectors::{Frame, FrameMode};
pub use recursion::{DimensionSequence, GammaSequence, Phase, PhaseVerdict};
pub use tree::TreeShape;
