//! Component-carrier manager: per-QCI primary-carrier mapping and the
//! adaptive cross-carrier BSR routing policy, plus the two baselines.
//!
//! The manager tracks the per-QCI aggregated RLC buffer occupancy with a
//! sliding window and, for each incoming BSR, decides which carriers see it.
//! A flow's traffic may spill onto another QCI's primary carrier only while
//! that QCI's aggregated load is below its threshold.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::mac::{Bsr, FlowId, Qci};
use crate::phy::CcId;
use crate::time::SimTime;

/// Which QCI uses which carrier as primary.
#[derive(Clone, Debug, Default)]
pub struct QciCcMap {
    map: BTreeMap<Qci, CcId>,
}

impl QciCcMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, qci: Qci, cc: CcId) {
        self.map.insert(qci, cc);
    }

    pub fn primary(&self, qci: Qci) -> Option<CcId> {
        self.map.get(&qci).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Qci, CcId)> + '_ {
        self.map.iter().map(|(q, c)| (*q, *c))
    }
}

/// Per-QCI occupancy thresholds, already converted to bytes using that QCI's
/// packet size.
#[derive(Clone, Debug, Default)]
pub struct Thresholds {
    bytes: BTreeMap<Qci, u64>,
}

impl Thresholds {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, qci: Qci, bytes: u64) {
        self.bytes.insert(qci, bytes);
    }

    pub fn get(&self, qci: Qci) -> u64 {
        self.bytes.get(&qci).copied().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug)]
struct OccupancyEntry {
    bytes: u64,
    reported_at: SimTime,
}

/// Sliding-window view of the last reported tx+retx bytes per flow,
/// aggregated per QCI on read. Entries older than the window are ignored.
#[derive(Clone, Debug)]
pub struct OccupancyMap {
    entries: BTreeMap<(Qci, FlowId), OccupancyEntry>,
    window: SimTime,
}

impl OccupancyMap {
    pub fn new(window: SimTime) -> Self {
        OccupancyMap {
            entries: BTreeMap::new(),
            window,
        }
    }

    /// Replaces the flow's entry with the BSR's combined queue size.
    pub fn update(&mut self, bsr: &Bsr, t: SimTime) {
        self.entries.insert(
            (bsr.qci, bsr.flow_id),
            OccupancyEntry {
                bytes: bsr.tx_queue_bytes + bsr.retx_queue_bytes,
                reported_at: t,
            },
        );
    }

    /// Aggregated load of one QCI: sum of non-stale, non-zero flow entries.
    pub fn aggregate(&self, qci: Qci, now: SimTime) -> u64 {
        self.entries
            .range((qci, FlowId::MIN)..=(qci, FlowId::MAX))
            .filter(|(_, e)| now.saturating_sub(e.reported_at) <= self.window)
            .map(|(_, e)| e.bytes)
            .sum()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PolicyKind {
    /// Single carrier with the whole system bandwidth, no slicing.
    NoCa,
    /// Static slicing: each QCI only ever uses its primary carrier.
    PrimaryOnly,
    /// Adaptive cross-carrier BSR routing.
    MilliSlice,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::NoCa => "no_ca",
            PolicyKind::PrimaryOnly => "primary_only",
            PolicyKind::MilliSlice => "millislice",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no_ca" => Ok(PolicyKind::NoCa),
            "primary_only" => Ok(PolicyKind::PrimaryOnly),
            "millislice" => Ok(PolicyKind::MilliSlice),
            other => Err(format!(
                "unknown policy '{other}' (expected no_ca, primary_only or millislice)"
            )),
        }
    }
}

/// Adaptive cross-carrier routing of one BSR.
///
/// The primary carrier of the BSR's QCI is always included. Every other
/// configured QCI lends its primary carrier iff its aggregated load is below
/// its threshold. The transmission-queue size is divided equally (integer
/// division) across the chosen carriers with the remainder, and all
/// retransmission bytes, assigned to the primary.
pub fn route_bsr(
    bsr: &Bsr,
    occ: &OccupancyMap,
    map: &QciCcMap,
    thresholds: &Thresholds,
    now: SimTime,
) -> BTreeMap<CcId, Bsr> {
    let Some(primary) = map.primary(bsr.qci) else {
        log::warn!(
            "BSR from flow {} carries unmapped QCI {}; dropping report",
            bsr.flow_id,
            bsr.qci.name()
        );
        return BTreeMap::new();
    };

    let mut chosen: Vec<CcId> = vec![primary];
    for (other_qci, other_primary) in map.iter() {
        if other_qci == bsr.qci {
            continue;
        }
        if occ.aggregate(other_qci, now) < thresholds.get(other_qci)
            && !chosen.contains(&other_primary)
        {
            chosen.push(other_primary);
        }
    }

    let n = chosen.len() as u64;
    let share = bsr.tx_queue_bytes / n;
    let remainder = bsr.tx_queue_bytes % n;

    let mut routed = BTreeMap::new();
    for cc in chosen {
        let is_primary = cc == primary;
        routed.insert(
            cc,
            Bsr {
                flow_id: bsr.flow_id,
                qci: bsr.qci,
                tx_queue_bytes: share + if is_primary { remainder } else { 0 },
                retx_queue_bytes: if is_primary { bsr.retx_queue_bytes } else { 0 },
                issued_at: bsr.issued_at,
            },
        );
    }
    routed
}

/// Dispatch on the configured policy. The baselines bypass the occupancy
/// logic entirely.
pub fn apply_policy(
    policy: PolicyKind,
    bsr: &Bsr,
    occ: &OccupancyMap,
    map: &QciCcMap,
    thresholds: &Thresholds,
    now: SimTime,
) -> BTreeMap<CcId, Bsr> {
    match policy {
        PolicyKind::NoCa => {
            let mut routed = BTreeMap::new();
            routed.insert(0, bsr.clone());
            routed
        }
        PolicyKind::PrimaryOnly => {
            let mut routed = BTreeMap::new();
            match map.primary(bsr.qci) {
                Some(primary) => {
                    routed.insert(primary, bsr.clone());
                }
                None => {
                    log::warn!(
                        "BSR from flow {} carries unmapped QCI {}; dropping report",
                        bsr.flow_id,
                        bsr.qci.name()
                    );
                }
            }
            routed
        }
        PolicyKind::MilliSlice => route_bsr(bsr, occ, map, thresholds, now),
    }
}
