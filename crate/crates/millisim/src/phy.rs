//! Abstract per-carrier link model: pathloss, shadowing, SINR, link
//! adaptation, transport-block capacity and stochastic TB errors.
//!
//! This replaces a full stochastic channel model with a closed-form one that
//! preserves the property the slicing policies rely on: a lower carrier
//! frequency sees a smaller pathloss, hence better SINR and fewer
//! retransmissions.

use crate::rng::RngStream;

pub type CcId = usize;

/// One aggregated carrier with its own frequency, bandwidth and frame
/// structure.
#[derive(Clone, Debug)]
pub struct CarrierComponent {
    pub id: CcId,
    pub center_freq_hz: f64,
    pub bandwidth_hz: f64,
    /// B_cc / B_total.
    pub bandwidth_share: f64,
    pub frames_per_second: u32,
    pub subframes_per_frame: u32,
    pub symbols_per_subframe: u32,
    pub ctrl_symbols: u32,
    pub bf_gain_db: f64,
}

impl CarrierComponent {
    pub fn subframe_duration_s(&self) -> f64 {
        1.0 / (self.frames_per_second as f64 * self.subframes_per_frame as f64)
    }

    pub fn symbol_duration_s(&self) -> f64 {
        self.subframe_duration_s() / self.symbols_per_subframe as f64
    }

    /// Symbols available for data in each subframe.
    pub fn data_symbols(&self) -> u32 {
        self.symbols_per_subframe - self.ctrl_symbols
    }
}

/// Link-model constants, all overridable through the scenario configuration.
#[derive(Clone, Debug)]
pub struct PhyParams {
    pub tx_power_dbm: f64,
    pub noise_figure_db: f64,
    pub shadowing_sigma_db: f64,
    /// SINR floor below which no transmission is possible.
    pub sinr_min_db: f64,
    /// Spectral-efficiency cap of the highest MCS.
    pub se_cap: f64,
    /// Fraction of a transport block lost to coding/protocol overhead.
    pub capacity_overhead: f64,
}

impl Default for PhyParams {
    fn default() -> Self {
        PhyParams {
            tx_power_dbm: 30.0,
            noise_figure_db: 5.0,
            shadowing_sigma_db: 4.0,
            sinr_min_db: -5.0,
            se_cap: 7.4,
            capacity_overhead: 0.10,
        }
    }
}

const SE_SCALE: f64 = 0.75;
const BLER_AT_EDGE: f64 = 0.1;
const BLER_MIN: f64 = 1e-6;
const BLER_MAX: f64 = 0.5;

/// PL = 32.4 + 20 log10(f_GHz) + 10 n log10(d_m), n = 2 (LOS) or 3 (NLOS).
/// Distances below 1 m clamp to 1 m.
pub fn pathloss_db(distance_m: f64, freq_hz: f64, los: bool) -> f64 {
    assert!(freq_hz > 0.0, "non-positive carrier frequency");
    let d = distance_m.max(1.0);
    let exponent = if los { 2.0 } else { 3.0 };
    32.4 + 20.0 * (freq_hz / 1e9).log10() + 10.0 * exponent * d.log10()
}

/// Thermal noise power over `bandwidth_hz` plus the receiver noise figure.
pub fn noise_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    assert!(bandwidth_hz > 0.0, "carrier bandwidth must be positive");
    -174.0 + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

/// Single-cell downlink: no interference term.
pub fn sinr_db(
    params: &PhyParams,
    cc: &CarrierComponent,
    distance_m: f64,
    los: bool,
    shadowing_db: f64,
) -> f64 {
    let pl = pathloss_db(distance_m, cc.center_freq_hz, los);
    let noise = noise_dbm(cc.bandwidth_hz, params.noise_figure_db);
    params.tx_power_dbm + cc.bf_gain_db - pl - shadowing_db - noise
}

/// Attenuated-Shannon link adaptation: SE = 0.75 log2(1 + snr), capped, zero
/// below the SINR floor.
pub fn spectral_efficiency(params: &PhyParams, sinr_db: f64) -> f64 {
    if sinr_db < params.sinr_min_db {
        return 0.0;
    }
    let snr = 10f64.powf(sinr_db / 10.0);
    (SE_SCALE * (1.0 + snr).log2()).min(params.se_cap)
}

/// SINR above which the SE cap is reached.
pub fn se_cap_edge_db(params: &PhyParams) -> f64 {
    10.0 * (2f64.powf(params.se_cap / SE_SCALE) - 1.0).log10()
}

/// The SINR at which the current operating point was selected. With
/// continuous link adaptation this is the SINR itself, except in the capped
/// region where the margin above the cap edge buys reliability.
pub fn mcs_edge_db(params: &PhyParams, sinr_db: f64) -> f64 {
    sinr_db.min(se_cap_edge_db(params))
}

/// Block error rate: 10% at the MCS selection point, one decade better per
/// 10 dB of margin, clamped to [1e-6, 0.5].
pub fn bler(sinr_db: f64, edge_db: f64) -> f64 {
    (BLER_AT_EDGE * 10f64.powf(-(sinr_db - edge_db) / 10.0)).clamp(BLER_MIN, BLER_MAX)
}

pub fn tb_success(sinr_db: f64, edge_db: f64, rng: &mut RngStream) -> bool {
    !rng.draw_bernoulli(bler(sinr_db, edge_db))
}

/// Bits carried by `n_symbols` OFDM symbols at spectral efficiency `se`.
pub fn tb_capacity_bits(
    params: &PhyParams,
    cc: &CarrierComponent,
    n_symbols: u32,
    se: f64,
) -> u64 {
    assert!(
        n_symbols <= cc.data_symbols(),
        "allocation of {n_symbols} symbols exceeds the per-subframe data budget"
    );
    if n_symbols == 0 || se <= 0.0 {
        return 0;
    }
    let bits = se
        * cc.bandwidth_hz
        * cc.subframe_duration_s()
        * n_symbols as f64
        * (1.0 - params.capacity_overhead)
        / cc.symbols_per_subframe as f64;
    // Guard against 224999.9999... artifacts before flooring.
    (bits + 1e-6).floor() as u64
}
