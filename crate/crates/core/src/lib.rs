//! Sit-to-stand assessment on a four-corner strain-gauge chair.
//!
//! The crate covers the whole data path short of the network service:
//!
//! - [`sensor`]: gauge channels, ADC quantization, calibration, drift cancellation
//! - [`acquisition`]: asynchronous per-channel sampling, tare/scale procedures, trial packets
//! - [`wire`]: the canonical JSON envelope trials travel in
//! - [`pipeline`]: resampling, total load, center of pressure, transition detection, scoring
//! - [`classifier`]: z-normalized DTW k-nearest-neighbor classification and evaluation
//! - [`synth`]: seeded synthetic cohorts with known answers
//! - [`plot`]: SVG rendering of aligned trials

pub mod acquisition;
pub mod classifier;
pub mod pipeline;
pub mod plot;
pub mod sensor;
pub mod synth;
pub mod wire;

pub use acquisition::{Mode, TrialMeta, TrialPacket};
pub use pipeline::{AlignedTrial, ChairGeometry, DetectorConfig, StsScore, TransitionEvent, TransitionKind};
pub use sensor::{Calibration, ChannelId, DriftModel, PerChannel, RawSample, SampleRate};
pub use synth::{MotionProfile, Strength};
