//! Atomic frequency comb storage: comb construction, the causal spectral
//! filter it imposes on light, and readout.

pub mod comb;
pub mod dicke;
pub(crate) mod fft;
pub mod filter;
pub mod multiplex;
pub mod propagate;
pub mod transfer;

pub use comb::{
    analytic_efficiency, build_comb, build_composite, dephasing_factor, solve_peak_depth,
    CombProfile, CombSpec, ToothShape,
};
pub use dicke::{dicke_echo_amplitude, DickeEnsemble};
pub use filter::{filter_cavity, lorentzian};
pub use multiplex::{
    simulate_spectral_multimode, Channel, ChannelOutput, MultimodeOutput, MultimodeSettings,
};
pub use propagate::{
    energy, peak_time, propagate, propagate_field, Envelope, Propagation, Pulse, PulseTrainSpec,
};
pub use transfer::{transfer_function, ImpulseResponse, TransferFunction};
