//! Runtime chunk-size tuning for parallel loops, applied to a checkpointed
//! 3D acoustic full-waveform inversion.

pub mod csa;
pub mod fwi;
pub mod revolve;
pub mod sched;
pub mod tuner;
pub mod wave;
