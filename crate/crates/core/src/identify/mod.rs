//! Identification of one structural shock with an external instrument, and
//! generalized impulse responses simulated from the long-run mean.

mod girf;
mod proxy;

pub use girf::{girf, sign_asymmetry, simulate_girf, DrawSystem, GirfOptions, GirfResult};
pub use proxy::{
    impulse_response, instrument_impact, long_run_mean, reliability, Instrument, ProxyOptions,
    StructuralDraw,
};
