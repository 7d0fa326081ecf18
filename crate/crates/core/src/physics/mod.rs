//! Device, channel and click models of the interferometric measurement.

pub mod clicks;
pub mod fock;
mod params;

pub use clicks::{
    c_round_click, c_round_click_left, click_multi_photon_upper, click_single_photon,
    click_single_photon_left, click_two_photon, click_vacuum, e_round_click, e_round_click_left,
    total_click_and_qber, total_click_and_qber_left,
};
pub use fock::{Detector, FockModel};
pub use params::{ChannelPoint, DeviceParams, Phases, ProtocolParams};
