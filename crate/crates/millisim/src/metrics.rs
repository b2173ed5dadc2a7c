//! Per-run statistics, utilization, and the run CSV format.
//!
//! A run file is long-format CSV (`section,name,metric,value`) preceded by
//! `#`-prefixed metadata lines. Sweep summaries are rebuilt by parsing run
//! files back in, so re-summarizing existing runs is byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::mac::{FlowId, Qci};
use crate::phy::CcId;
use crate::time::SimTime;

#[derive(Clone, Debug, Default)]
pub struct FlowStats {
    pub qci: Qci,
    pub ue_id: usize,
    pub packets_sent: u64,
    pub packets_delivered: u64,
    /// Dropped at enqueue by the full transmission buffer.
    pub packets_dropped: u64,
    /// Abandoned after exhausting RLC retransmissions.
    pub packets_lost: u64,
    /// Queued or in flight when the run ended.
    pub packets_inflight: u64,
    pub sum_delay_ns: u64,
    pub bytes_delivered: u64,
    // Byte-exact conservation ledger.
    pub bytes_offered: u64,
    pub bytes_dropped_enqueue: u64,
    pub bytes_discarded_retx: u64,
    pub bytes_delivered_air: u64,
    /// Queued or in flight when the run ended.
    pub bytes_residual: u64,
}

impl FlowStats {
    pub fn new(qci: Qci, ue_id: usize) -> Self {
        FlowStats {
            qci,
            ue_id,
            ..Default::default()
        }
    }

    pub fn record_delivery(&mut self, tx: SimTime, rx: SimTime, bytes: u64) {
        assert!(rx >= tx, "delivery at {rx} precedes transmission at {tx}");
        self.packets_delivered += 1;
        self.sum_delay_ns += (rx - tx).as_nanos();
        self.bytes_delivered += bytes;
    }

    pub fn mean_delay_ms(&self) -> f64 {
        if self.packets_delivered == 0 {
            f64::NAN
        } else {
            self.sum_delay_ns as f64 / self.packets_delivered as f64 / 1e6
        }
    }

    pub fn throughput_mbps(&self, duration_s: f64) -> f64 {
        self.bytes_delivered as f64 * 8.0 / duration_s / 1e6
    }

    pub fn loss_ratio(&self) -> f64 {
        if self.packets_sent == 0 {
            return 0.0;
        }
        (self.packets_dropped + self.packets_lost) as f64 / self.packets_sent as f64
    }
}

#[derive(Clone, Debug)]
pub struct CcStats {
    pub cc_id: CcId,
    /// Data symbols that carried a non-empty transport block.
    pub tx_sym: u64,
    pub bandwidth_share: f64,
}

/// Band-normalized utilization of one carrier: the fraction of its symbol
/// budget spent transmitting, weighted by its share of the total band.
pub fn compute_eta(
    tx_sym: u64,
    duration_s: f64,
    frames_per_second: u32,
    subframes_per_frame: u32,
    symbols_per_subframe: u32,
    bandwidth_share: f64,
) -> f64 {
    let total_sym = duration_s
        * frames_per_second as f64
        * subframes_per_frame as f64
        * symbols_per_subframe as f64;
    assert!(total_sym > 0.0, "empty symbol budget");
    tx_sym as f64 / total_sym * bandwidth_share
}

#[derive(Clone, Debug)]
pub struct RunStats {
    pub policy: String,
    pub seed: u64,
    pub config_hash: u64,
    pub duration_s: f64,
    pub frames_per_second: u32,
    pub subframes_per_frame: u32,
    pub symbols_per_subframe: u32,
    pub flows: BTreeMap<FlowId, FlowStats>,
    pub ccs: Vec<CcStats>,
    /// Bytes routed per (traffic class, carrier) by BSR routing decisions.
    pub routed_bytes: BTreeMap<(Qci, CcId), u64>,
}

impl RunStats {
    pub fn eta(&self, cc: &CcStats) -> f64 {
        compute_eta(
            cc.tx_sym,
            self.duration_s,
            self.frames_per_second,
            self.subframes_per_frame,
            self.symbols_per_subframe,
            cc.bandwidth_share,
        )
    }

    /// Byte ledger must balance exactly for every flow.
    pub fn verify_conservation(&self) -> Result<(), String> {
        for (id, f) in &self.flows {
            let enqueued = f.bytes_offered - f.bytes_dropped_enqueue;
            let accounted = f.bytes_delivered_air + f.bytes_discarded_retx + f.bytes_residual;
            if enqueued != accounted {
                return Err(format!(
                    "flow {id}: enqueued {enqueued} != delivered {} + discarded {} + residual {}",
                    f.bytes_delivered_air, f.bytes_discarded_retx, f.bytes_residual
                ));
            }
        }
        Ok(())
    }

    pub fn qci_flows(&self, qci: Qci) -> impl Iterator<Item = &FlowStats> {
        self.flows.values().filter(move |f| f.qci == qci)
    }

    pub fn agg_throughput_mbps(&self, qci: Qci) -> f64 {
        self.qci_flows(qci)
            .map(|f| f.throughput_mbps(self.duration_s))
            .sum()
    }

    pub fn per_user_throughput_mbps(&self, qci: Qci) -> f64 {
        let n = self.qci_flows(qci).count();
        if n == 0 {
            return f64::NAN;
        }
        self.agg_throughput_mbps(qci) / n as f64
    }

    pub fn mean_delay_ms(&self, qci: Qci) -> f64 {
        let (sum, count) = self
            .qci_flows(qci)
            .fold((0u64, 0u64), |(s, c), f| (s + f.sum_delay_ns, c + f.packets_delivered));
        if count == 0 {
            f64::NAN
        } else {
            sum as f64 / count as f64 / 1e6
        }
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

/// Renders the run file. Row order is fixed; all maps iterate sorted.
pub fn run_csv(stats: &RunStats) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# millisim run");
    let _ = writeln!(out, "# policy={}", stats.policy);
    let _ = writeln!(out, "# seed={}", stats.seed);
    let _ = writeln!(out, "# duration_s={}", stats.duration_s);
    let _ = writeln!(out, "# config_hash={:016x}", stats.config_hash);
    let _ = writeln!(out, "section,name,metric,value");

    for (id, f) in &stats.flows {
        let mut row = |metric: &str, value: String| {
            let _ = writeln!(out, "flow,{id},{metric},{value}");
        };
        row("qci", f.qci.name());
        row("ue_id", f.ue_id.to_string());
        row("packets_sent", f.packets_sent.to_string());
        row("packets_delivered", f.packets_delivered.to_string());
        row("packets_dropped", f.packets_dropped.to_string());
        row("packets_lost", f.packets_lost.to_string());
        row("packets_inflight", f.packets_inflight.to_string());
        row("bytes_delivered", f.bytes_delivered.to_string());
        row("loss_ratio", fmt_value(f.loss_ratio()));
        row("mean_delay_ms", fmt_value(f.mean_delay_ms()));
        row(
            "throughput_mbps",
            fmt_value(f.throughput_mbps(stats.duration_s)),
        );
    }

    for qci in [Qci::URLLC, Qci::EMBB] {
        if stats.qci_flows(qci).next().is_none() {
            continue;
        }
        let name = qci.name();
        let mut row = |metric: &str, value: String| {
            let _ = writeln!(out, "qci,{name},{metric},{value}");
        };
        row(
            "agg_throughput_mbps",
            fmt_value(stats.agg_throughput_mbps(qci)),
        );
        row(
            "per_user_throughput_mbps",
            fmt_value(stats.per_user_throughput_mbps(qci)),
        );
        row("mean_delay_ms", fmt_value(stats.mean_delay_ms(qci)));
        let delivered: u64 = stats.qci_flows(qci).map(|f| f.packets_delivered).sum();
        let sent: u64 = stats.qci_flows(qci).map(|f| f.packets_sent).sum();
        let lost: u64 = stats
            .qci_flows(qci)
            .map(|f| f.packets_dropped + f.packets_lost)
            .sum();
        row("packets_sent", sent.to_string());
        row("packets_delivered", delivered.to_string());
        row(
            "loss_ratio",
            fmt_value(if sent == 0 {
                0.0
            } else {
                lost as f64 / sent as f64
            }),
        );
    }

    for cc in &stats.ccs {
        let _ = writeln!(out, "cc,{},tx_sym,{}", cc.cc_id, cc.tx_sym);
        let _ = writeln!(
            out,
            "cc,{},bandwidth_share,{}",
            cc.cc_id,
            fmt_value(cc.bandwidth_share)
        );
        let _ = writeln!(out, "cc,{},eta,{}", cc.cc_id, fmt_value(stats.eta(cc)));
    }

    for (&(qci, cc), &bytes) in &stats.routed_bytes {
        let _ = writeln!(out, "route,{}:{cc},bytes,{bytes}", qci.name());
    }

    out
}

pub fn write_run_csv(stats: &RunStats, path: &Path) -> std::io::Result<()> {
    // Write-then-rename so a crashed run never leaves a truncated file.
    let tmp = path.with_extension("csv.tmp");
    std::fs::write(&tmp, run_csv(stats))?;
    std::fs::rename(&tmp, path)
}

/// Parsed-back run file: metadata plus (section, name, metric) -> raw value.
#[derive(Clone, Debug)]
pub struct ParsedRun {
    pub meta: BTreeMap<String, String>,
    pub values: BTreeMap<(String, String, String), String>,
}

pub fn parse_run_csv(text: &str) -> Result<ParsedRun, String> {
    let mut meta = BTreeMap::new();
    let mut values = BTreeMap::new();
    let mut saw_header = false;
    for (idx, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line != "section,name,metric,value" {
                return Err(format!("line {}: unexpected header {line:?}", idx + 1));
            }
            saw_header = true;
            continue;
        }
        let mut parts = line.splitn(4, ',');
        let (section, name, metric, value) = match (
            parts.next(),
            parts.next(),
            parts.next(),
            parts.next(),
        ) {
            (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
            _ => return Err(format!("line {}: malformed row {line:?}", idx + 1)),
        };
        values.insert(
            (section.to_string(), name.to_string(), metric.to_string()),
            value.to_string(),
        );
    }
    if !saw_header {
        return Err("missing column header".to_string());
    }
    Ok(ParsedRun { meta, values })
}

/// Sample mean and 95% confidence half-width (normal approximation).
pub fn mean_ci(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    assert!(n > 0, "mean of an empty sample");
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, 1.96 * var.sqrt() / (n as f64).sqrt())
}
