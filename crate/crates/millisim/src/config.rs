//! Run configuration: flat key=value files, command-line overrides,
//! validation, and derivation of the carrier layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::ccm::PolicyKind;
use crate::phy::{CarrierComponent, PhyParams};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected key=value, got {text:?}")]
    Syntax {
        path: String,
        line: usize,
        text: String,
    },
    #[error("unknown config key {key:?}")]
    UnknownKey { key: String },
    #[error("invalid value for {key}: {value:?} ({reason})")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub policy: PolicyKind,
    pub seed: u64,
    pub duration_s: f64,

    pub n_embb_ues: usize,
    pub n_urllc_ues: usize,
    pub radius_m: f64,
    pub embb_rate_mbps: f64,
    pub urllc_rate_mbps: f64,
    pub embb_packet_bytes: u32,
    pub urllc_packet_bytes: u32,

    pub total_bandwidth_hz: f64,
    pub cc_ratio: f64,
    pub cc0_freq_hz: f64,
    pub cc1_freq_hz: f64,
    pub bf_gain_cc0_db: f64,
    pub bf_gain_cc1_db: f64,

    pub r_urllc_packets: u64,
    pub r_embb_packets: u64,
    pub bsr_period_ms: f64,
    pub occupancy_window_ms: f64,
    pub max_tx_buffer_bytes: u64,
    pub max_rlc_retx: u32,

    pub tx_power_dbm: f64,
    pub noise_figure_db: f64,
    pub shadowing_sigma_db: f64,
    pub shadowing_period_ms: f64,
    pub sinr_min_db: f64,
    pub se_cap: f64,
    pub capacity_overhead: f64,

    pub frames_per_second: u32,
    pub subframes_per_frame: u32,
    pub symbols_per_subframe: u32,
    pub ctrl_symbols: u32,

    pub ue_speed_min_mps: f64,
    pub ue_speed_max_mps: f64,
    pub heading_redraw_s: f64,
    pub los_redraw_s: f64,
    pub mobility_tick_ms: f64,
    pub processing_delay_ms: f64,

    /// Test knob: disabling it makes every transport block succeed.
    pub tb_errors: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            policy: PolicyKind::MilliSlice,
            seed: 1,
            duration_s: 10.0,
            n_embb_ues: 10,
            n_urllc_ues: 10,
            radius_m: 200.0,
            embb_rate_mbps: 160.0,
            urllc_rate_mbps: 1.0,
            embb_packet_bytes: 1400,
            urllc_packet_bytes: 1250,
            total_bandwidth_hz: 500e6,
            cc_ratio: 0.5,
            cc0_freq_hz: 28e9,
            cc1_freq_hz: 10e9,
            bf_gain_cc0_db: 25.0,
            bf_gain_cc1_db: 15.0,
            r_urllc_packets: 1,
            r_embb_packets: 0,
            bsr_period_ms: 1.0,
            occupancy_window_ms: 10.0,
            max_tx_buffer_bytes: 1_048_576,
            max_rlc_retx: 5,
            tx_power_dbm: 30.0,
            noise_figure_db: 5.0,
            shadowing_sigma_db: 4.0,
            shadowing_period_ms: 100.0,
            sinr_min_db: -5.0,
            se_cap: 7.4,
            capacity_overhead: 0.10,
            frames_per_second: 100,
            subframes_per_frame: 10,
            symbols_per_subframe: 24,
            ctrl_symbols: 2,
            ue_speed_min_mps: 1.0,
            ue_speed_max_mps: 10.0,
            heading_redraw_s: 5.0,
            los_redraw_s: 1.0,
            mobility_tick_ms: 100.0,
            processing_delay_ms: 1.0,
            tb_errors: true,
        }
    }
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected true/false".to_string(),
        }),
    }
}

impl Config {
    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "policy" => self.policy = parse_as(key, value)?,
            "seed" => self.seed = parse_as(key, value)?,
            "duration_s" => self.duration_s = parse_as(key, value)?,
            "n_embb_ues" => self.n_embb_ues = parse_as(key, value)?,
            "n_urllc_ues" => self.n_urllc_ues = parse_as(key, value)?,
            "radius_m" => self.radius_m = parse_as(key, value)?,
            "embb_rate_mbps" => self.embb_rate_mbps = parse_as(key, value)?,
            "urllc_rate_mbps" => self.urllc_rate_mbps = parse_as(key, value)?,
            "embb_packet_bytes" => self.embb_packet_bytes = parse_as(key, value)?,
            "urllc_packet_bytes" => self.urllc_packet_bytes = parse_as(key, value)?,
            "total_bandwidth_hz" => self.total_bandwidth_hz = parse_as(key, value)?,
            "cc_ratio" => self.cc_ratio = parse_as(key, value)?,
            "cc0_freq_hz" => self.cc0_freq_hz = parse_as(key, value)?,
            "cc1_freq_hz" => self.cc1_freq_hz = parse_as(key, value)?,
            "bf_gain_cc0_db" => self.bf_gain_cc0_db = parse_as(key, value)?,
            "bf_gain_cc1_db" => self.bf_gain_cc1_db = parse_as(key, value)?,
            "r_urllc_packets" => self.r_urllc_packets = parse_as(key, value)?,
            "r_embb_packets" => self.r_embb_packets = parse_as(key, value)?,
            "bsr_period_ms" => self.bsr_period_ms = parse_as(key, value)?,
            "occupancy_window_ms" => self.occupancy_window_ms = parse_as(key, value)?,
            "max_tx_buffer_bytes" => self.max_tx_buffer_bytes = parse_as(key, value)?,
            "max_rlc_retx" => self.max_rlc_retx = parse_as(key, value)?,
            "tx_power_dbm" => self.tx_power_dbm = parse_as(key, value)?,
            "noise_figure_db" => self.noise_figure_db = parse_as(key, value)?,
            "shadowing_sigma_db" => self.shadowing_sigma_db = parse_as(key, value)?,
            "shadowing_period_ms" => self.shadowing_period_ms = parse_as(key, value)?,
            "sinr_min_db" => self.sinr_min_db = parse_as(key, value)?,
            "se_cap" => self.se_cap = parse_as(key, value)?,
            "capacity_overhead" => self.capacity_overhead = parse_as(key, value)?,
            "frames_per_second" => self.frames_per_second = parse_as(key, value)?,
            "subframes_per_frame" => self.subframes_per_frame = parse_as(key, value)?,
            "symbols_per_subframe" => self.symbols_per_subframe = parse_as(key, value)?,
            "ctrl_symbols" => self.ctrl_symbols = parse_as(key, value)?,
            "ue_speed_min_mps" => self.ue_speed_min_mps = parse_as(key, value)?,
            "ue_speed_max_mps" => self.ue_speed_max_mps = parse_as(key, value)?,
            "heading_redraw_s" => self.heading_redraw_s = parse_as(key, value)?,
            "los_redraw_s" => self.los_redraw_s = parse_as(key, value)?,
            "mobility_tick_ms" => self.mobility_tick_ms = parse_as(key, value)?,
            "processing_delay_ms" => self.processing_delay_ms = parse_as(key, value)?,
            "tb_errors" => self.tb_errors = parse_bool(key, value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Parses a flat key=value file. Blank lines and `#` comments are skipped.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Config::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: path.display().to_string(),
                line: idx + 1,
                text: raw.to_string(),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn apply_overrides<'a, I: IntoIterator<Item = &'a str>>(
        &mut self,
        overrides: I,
    ) -> Result<(), ConfigError> {
        for ov in overrides {
            let (key, value) = ov.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: "<override>".to_string(),
                line: 0,
                text: ov.to_string(),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if !(self.duration_s > 0.0) {
            return fail(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if !(self.radius_m > 0.0) {
            return fail(format!("radius_m must be positive, got {}", self.radius_m));
        }
        if !(self.total_bandwidth_hz > 0.0) {
            return fail(format!(
                "total_bandwidth_hz must be positive, got {}",
                self.total_bandwidth_hz
            ));
        }
        if !(self.cc_ratio > 0.0 && self.cc_ratio < 1.0) {
            return fail(format!("cc_ratio must be in (0, 1), got {}", self.cc_ratio));
        }
        if !(self.cc0_freq_hz > 0.0) || !(self.cc1_freq_hz > 0.0) {
            return fail("carrier center frequencies must be positive".to_string());
        }
        if !(self.embb_rate_mbps > 0.0) || !(self.urllc_rate_mbps > 0.0) {
            return fail("source rates must be positive".to_string());
        }
        if self.embb_packet_bytes == 0 || self.urllc_packet_bytes == 0 {
            return fail("packet sizes must be positive".to_string());
        }
        if !(self.bsr_period_ms > 0.0) {
            return fail(format!(
                "bsr_period_ms must be positive, got {}",
                self.bsr_period_ms
            ));
        }
        if !(self.occupancy_window_ms > 0.0) {
            return fail(format!(
                "occupancy_window_ms must be positive, got {}",
                self.occupancy_window_ms
            ));
        }
        if self.max_tx_buffer_bytes == 0 {
            return fail("max_tx_buffer_bytes must be positive".to_string());
        }
        if !(0.0..1.0).contains(&self.capacity_overhead) {
            return fail(format!(
                "capacity_overhead must be in [0, 1), got {}",
                self.capacity_overhead
            ));
        }
        if !(self.se_cap > 0.0) {
            return fail(format!("se_cap must be positive, got {}", self.se_cap));
        }
        if self.frames_per_second == 0 || self.subframes_per_frame == 0 {
            return fail("frame structure counts must be positive".to_string());
        }
        if self.symbols_per_subframe == 0 {
            return fail("symbols_per_subframe must be positive".to_string());
        }
        if self.ctrl_symbols >= self.symbols_per_subframe {
            return fail(format!(
                "ctrl_symbols ({}) must leave data symbols in a {}-symbol subframe",
                self.ctrl_symbols, self.symbols_per_subframe
            ));
        }
        if !(self.ue_speed_min_mps >= 0.0) || self.ue_speed_min_mps > self.ue_speed_max_mps {
            return fail(format!(
                "ue speed range [{}, {}] is invalid",
                self.ue_speed_min_mps, self.ue_speed_max_mps
            ));
        }
        if !(self.mobility_tick_ms > 0.0) {
            return fail(format!(
                "mobility_tick_ms must be positive, got {}",
                self.mobility_tick_ms
            ));
        }
        if !(self.heading_redraw_s > 0.0)
            || !(self.los_redraw_s > 0.0)
            || !(self.shadowing_period_ms > 0.0)
        {
            return fail("redraw periods must be positive".to_string());
        }
        if !(self.processing_delay_ms >= 0.0) {
            return fail(format!(
                "processing_delay_ms must be non-negative, got {}",
                self.processing_delay_ms
            ));
        }
        Ok(())
    }

    /// Carrier layout implied by the policy. Without CA the whole band sits on
    /// a single mmWave carrier; with CA it is split cc_ratio : 1-cc_ratio.
    pub fn carriers(&self) -> Vec<CarrierComponent> {
        let frame = |id, freq, bw, share, gain| CarrierComponent {
            id,
            center_freq_hz: freq,
            bandwidth_hz: bw,
            bandwidth_share: share,
            frames_per_second: self.frames_per_second,
            subframes_per_frame: self.subframes_per_frame,
            symbols_per_subframe: self.symbols_per_subframe,
            ctrl_symbols: self.ctrl_symbols,
            bf_gain_db: gain,
        };
        match self.policy {
            PolicyKind::NoCa => vec![frame(
                0,
                self.cc0_freq_hz,
                self.total_bandwidth_hz,
                1.0,
                self.bf_gain_cc0_db,
            )],
            PolicyKind::PrimaryOnly | PolicyKind::MilliSlice => vec![
                frame(
                    0,
                    self.cc0_freq_hz,
                    self.total_bandwidth_hz * self.cc_ratio,
                    self.cc_ratio,
                    self.bf_gain_cc0_db,
                ),
                frame(
                    1,
                    self.cc1_freq_hz,
                    self.total_bandwidth_hz * (1.0 - self.cc_ratio),
                    1.0 - self.cc_ratio,
                    self.bf_gain_cc1_db,
                ),
            ],
        }
    }

    pub fn phy_params(&self) -> PhyParams {
        PhyParams {
            tx_power_dbm: self.tx_power_dbm,
            noise_figure_db: self.noise_figure_db,
            shadowing_sigma_db: self.shadowing_sigma_db,
            sinr_min_db: self.sinr_min_db,
            se_cap: self.se_cap,
            capacity_overhead: self.capacity_overhead,
        }
    }

    /// Canonical key-sorted rendering; identical configs hash identically
    /// regardless of how they were assembled.
    pub fn canonical_string(&self) -> String {
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        kv.insert("policy", self.policy.to_string());
        kv.insert("seed", self.seed.to_string());
        kv.insert("duration_s", format!("{}", self.duration_s));
        kv.insert("n_embb_ues", self.n_embb_ues.to_string());
        kv.insert("n_urllc_ues", self.n_urllc_ues.to_string());
        kv.insert("radius_m", format!("{}", self.radius_m));
        kv.insert("embb_rate_mbps", format!("{}", self.embb_rate_mbps));
        kv.insert("urllc_rate_mbps", format!("{}", self.urllc_rate_mbps));
        kv.insert("embb_packet_bytes", self.embb_packet_bytes.to_string());
        kv.insert("urllc_packet_bytes", self.urllc_packet_bytes.to_string());
        kv.insert("total_bandwidth_hz", format!("{}", self.total_bandwidth_hz));
        kv.insert("cc_ratio", format!("{}", self.cc_ratio));
        kv.insert("cc0_freq_hz", format!("{}", self.cc0_freq_hz));
        kv.insert("cc1_freq_hz", format!("{}", self.cc1_freq_hz));
        kv.insert("bf_gain_cc0_db", format!("{}", self.bf_gain_cc0_db));
        kv.insert("bf_gain_cc1_db", format!("{}", self.bf_gain_cc1_db));
        kv.insert("r_urllc_packets", self.r_urllc_packets.to_string());
        kv.insert("r_embb_packets", self.r_embb_packets.to_string());
        kv.insert("bsr_period_ms", format!("{}", self.bsr_period_ms));
        kv.insert("occupancy_window_ms", format!("{}", self.occupancy_window_ms));
        kv.insert("max_tx_buffer_bytes", self.max_tx_buffer_bytes.to_string());
        kv.insert("max_rlc_retx", self.max_rlc_retx.to_string());
        kv.insert("tx_power_dbm", format!("{}", self.tx_power_dbm));
        kv.insert("noise_figure_db", format!("{}", self.noise_figure_db));
        kv.insert("shadowing_sigma_db", format!("{}", self.shadowing_sigma_db));
        kv.insert("shadowing_period_ms", format!("{}", self.shadowing_period_ms));
        kv.insert("sinr_min_db", format!("{}", self.sinr_min_db));
        kv.insert("se_cap", format!("{}", self.se_cap));
        kv.insert("capacity_overhead", format!("{}", self.capacity_overhead));
        kv.insert("frames_per_second", self.frames_per_second.to_string());
        kv.insert("subframes_per_frame", self.subframes_per_frame.to_string());
        kv.insert("symbols_per_subframe", self.symbols_per_subframe.to_string());
        kv.insert("ctrl_symbols", self.ctrl_symbols.to_string());
        kv.insert("ue_speed_min_mps", format!("{}", self.ue_speed_min_mps));
        kv.insert("ue_speed_max_mps", format!("{}", self.ue_speed_max_mps));
        kv.insert("heading_redraw_s", format!("{}", self.heading_redraw_s));
        kv.insert("los_redraw_s", format!("{}", self.los_redraw_s));
        kv.insert("mobility_tick_ms", format!("{}", self.mobility_tick_ms));
        kv.insert("processing_delay_ms", format!("{}", self.processing_delay_ms));
        kv.insert("tb_errors", self.tb_errors.to_string());
        let mut out = String::new();
        for (k, v) in kv {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// FNV-1a 64 over the canonical rendering.
    pub fn config_hash(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in self.canonical_string().bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        hash
    }

    pub fn embb_rate_bps(&self) -> u64 {
        (self.embb_rate_mbps * 1e6).round() as u64
    }

    pub fn urllc_rate_bps(&self) -> u64 {
        (self.urllc_rate_mbps * 1e6).round() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_validate() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn file_round_trip() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment line").unwrap();
        writeln!(f).unwrap();
        writeln!(f, "policy = no_ca   # trailing comment").unwrap();
        writeln!(f, "seed=42").unwrap();
        writeln!(f, "embb_rate_mbps=120").unwrap();
        writeln!(f, "tb_errors=false").unwrap();
        let cfg = Config::from_file(f.path()).unwrap();
        assert_eq!(cfg.policy, PolicyKind::NoCa);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.embb_rate_mbps, 120.0);
        assert!(!cfg.tb_errors);
        // Untouched keys keep their defaults.
        assert_eq!(cfg.n_embb_ues, 10);
    }

    #[test]
    fn syntax_error_reports_line() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "seed=1").unwrap();
        writeln!(f, "this is not an assignment").unwrap();
        let err = Config::from_file(f.path()).unwrap_err();
        match err {
            ConfigError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = Config::default();
        assert!(matches!(
            cfg.set("bogus_key", "1"),
            Err(ConfigError::UnknownKey { .. })
        ));
    }

    #[test]
    fn bad_value_rejected() {
        let mut cfg = Config::default();
        assert!(matches!(
            cfg.set("seed", "not-a-number"),
            Err(ConfigError::InvalidValue { .. })
        ));
        assert!(matches!(
            cfg.set("policy", "round_robin"),
            Err(ConfigError::InvalidValue { .. })
        ));
    }

    #[test]
    fn overrides_apply_in_order() {
        let mut cfg = Config::default();
        cfg.apply_overrides(["seed=3", "seed=9", "policy=primary_only"])
            .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.policy, PolicyKind::PrimaryOnly);
    }

    #[test]
    fn validation_catches_bad_ranges() {
        for bad in [
            "duration_s=0",
            "cc_ratio=0",
            "cc_ratio=1",
            "ctrl_symbols=24",
            "capacity_overhead=1.0",
            "ue_speed_min_mps=11",
        ] {
            let mut cfg = Config::default();
            cfg.apply_overrides([bad]).unwrap();
            assert!(cfg.validate().is_err(), "{bad} should fail validation");
        }
    }

    #[test]
    fn carrier_layout_follows_policy() {
        let mut cfg = Config::default();
        cfg.policy = PolicyKind::MilliSlice;
        let ccs = cfg.carriers();
        assert_eq!(ccs.len(), 2);
        assert_eq!(ccs[0].bandwidth_hz, 250e6);
        assert_eq!(ccs[0].center_freq_hz, 28e9);
        assert_eq!(ccs[0].bf_gain_db, 25.0);
        assert_eq!(ccs[1].bandwidth_hz, 250e6);
        assert_eq!(ccs[1].center_freq_hz, 10e9);
        assert_eq!(ccs[1].bf_gain_db, 15.0);
        assert!((ccs[0].bandwidth_share + ccs[1].bandwidth_share - 1.0).abs() < 1e-12);

        cfg.policy = PolicyKind::NoCa;
        let ccs = cfg.carriers();
        assert_eq!(ccs.len(), 1);
        assert_eq!(ccs[0].bandwidth_hz, 500e6);
        assert_eq!(ccs[0].center_freq_hz, 28e9);
        assert_eq!(ccs[0].bandwidth_share, 1.0);
    }

    #[test]
    fn hash_tracks_content_not_origin() {
        let a = Config::default();
        let mut b = Config::default();
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed = 2;
        assert_ne!(a.config_hash(), b.config_hash());
        b.seed = 1;
        assert_eq!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn rate_conversions() {
        let cfg = Config::default();
        assert_eq!(cfg.embb_rate_bps(), 160_000_000);
        assert_eq!(cfg.urllc_rate_bps(), 1_000_000);
    }
}
