//! Per-flow RLC-AM buffering with BSR generation, and per-carrier
//! round-robin MAC scheduling of OFDM symbols, including retransmissions.

use std::collections::VecDeque;

use crate::phy::{self, CarrierComponent, CcId, PhyParams};
use crate::time::SimTime;

pub type FlowId = usize;
pub type PacketId = u64;

/// QoS class identifier. A newtype rather than an enum so the cross-carrier
/// scheduler also works with synthetic classes beyond the two shipped ones.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Qci(pub u8);

impl Qci {
    pub const URLLC: Qci = Qci(0);
    pub const EMBB: Qci = Qci(1);

    pub fn name(self) -> String {
        match self {
            Qci::URLLC => "urllc".to_string(),
            Qci::EMBB => "embb".to_string(),
            Qci(n) => format!("qci{n}"),
        }
    }
}

/// Buffer status report: a snapshot of the transmission and retransmission
/// queue sizes of one flow.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bsr {
    pub flow_id: FlowId,
    pub qci: Qci,
    pub tx_queue_bytes: u64,
    pub retx_queue_bytes: u64,
    pub issued_at: SimTime,
}

/// A contiguous byte range of one application packet carried inside a TB or
/// retransmission PDU.
#[derive(Clone, Debug)]
pub struct Segment {
    pub packet_id: PacketId,
    pub bytes: u32,
    /// True when this segment contains the packet's final byte.
    pub last: bool,
    /// RLC transmission attempts already spent on these bytes.
    pub attempts: u32,
}

/// Bytes awaiting retransmission after a failed TB, pinned to the carrier
/// the failed TB was sent on.
#[derive(Clone, Debug)]
pub struct RetxPdu {
    pub segments: Vec<Segment>,
    pub bytes: u64,
    pub origin_cc: CcId,
}

#[derive(Clone, Debug)]
struct QueuedPacket {
    id: PacketId,
    bytes: u32,
    /// Bytes of this packet already handed to the MAC.
    served: u32,
}

/// The payload of one scheduled transport block, in flight between the air
/// interface and the application-layer delivery event.
#[derive(Clone, Debug)]
pub struct TransportBlock {
    pub segments: Vec<Segment>,
    pub bytes: u64,
}

pub enum EnqueueOutcome {
    Accepted,
    Dropped,
}

/// An end-to-end slice member: one DRB with its RLC-AM state.
pub struct Flow {
    pub id: FlowId,
    pub qci: Qci,
    pub ue_id: usize,
    pub primary_cc: CcId,
    pub packet_size: u32,
    pub source_rate_bps: u64,
    tx_queue: VecDeque<QueuedPacket>,
    tx_queue_bytes: u64,
    retx_queue: VecDeque<RetxPdu>,
    retx_queue_bytes: u64,
    max_tx_buffer: u64,
    max_rlc_retx: u32,
}

impl Flow {
    pub fn new(
        id: FlowId,
        qci: Qci,
        ue_id: usize,
        primary_cc: CcId,
        packet_size: u32,
        source_rate_bps: u64,
        max_tx_buffer: u64,
        max_rlc_retx: u32,
    ) -> Self {
        Flow {
            id,
            qci,
            ue_id,
            primary_cc,
            packet_size,
            source_rate_bps,
            tx_queue: VecDeque::new(),
            tx_queue_bytes: 0,
            retx_queue: VecDeque::new(),
            retx_queue_bytes: 0,
            max_tx_buffer,
            max_rlc_retx,
        }
    }

    pub fn tx_queue_bytes(&self) -> u64 {
        self.tx_queue_bytes
    }

    pub fn retx_queue_bytes(&self) -> u64 {
        self.retx_queue_bytes
    }

    pub fn queues_empty(&self) -> bool {
        self.tx_queue_bytes == 0 && self.retx_queue_bytes == 0
    }

    /// Bytes awaiting retransmission on a specific carrier.
    pub fn retx_bytes_on(&self, cc: CcId) -> u64 {
        self.retx_queue
            .iter()
            .filter(|p| p.origin_cc == cc)
            .map(|p| p.bytes)
            .sum()
    }

    /// Drop-tail admission against the finite RLC buffer.
    pub fn rlc_enqueue(&mut self, packet_id: PacketId, bytes: u32) -> EnqueueOutcome {
        assert!(bytes > 0, "zero-byte packet");
        if self.tx_queue_bytes + bytes as u64 > self.max_tx_buffer {
            return EnqueueOutcome::Dropped;
        }
        self.tx_queue.push_back(QueuedPacket {
            id: packet_id,
            bytes,
            served: 0,
        });
        self.tx_queue_bytes += bytes as u64;
        EnqueueOutcome::Accepted
    }

    pub fn generate_bsr(&self, t: SimTime) -> Bsr {
        Bsr {
            flow_id: self.id,
            qci: self.qci,
            tx_queue_bytes: self.tx_queue_bytes,
            retx_queue_bytes: self.retx_queue_bytes,
            issued_at: t,
        }
    }

    /// Pulls up to `max_bytes` from the RLC queues into a TB for carrier
    /// `cc`: retransmission PDUs pinned to this carrier first, then fresh
    /// transmission-queue bytes. Returns None when nothing is available.
    pub fn build_tb(&mut self, cc: CcId, max_bytes: u64) -> Option<TransportBlock> {
        let mut segments = Vec::new();
        let mut remaining = max_bytes;

        // Retransmissions before new data.
        let mut i = 0;
        while remaining > 0 && i < self.retx_queue.len() {
            if self.retx_queue[i].origin_cc != cc {
                i += 1;
                continue;
            }
            if self.retx_queue[i].bytes <= remaining {
                let pdu = self.retx_queue.remove(i).unwrap();
                remaining -= pdu.bytes;
                self.retx_queue_bytes -= pdu.bytes;
                segments.extend(pdu.segments);
            } else {
                // Partial retransmission: split the PDU's leading bytes off.
                let pdu = &mut self.retx_queue[i];
                let taken = take_from_segments(&mut pdu.segments, remaining);
                let taken_bytes: u64 = taken.iter().map(|s| s.bytes as u64).sum();
                pdu.bytes -= taken_bytes;
                self.retx_queue_bytes -= taken_bytes;
                remaining -= taken_bytes;
                segments.extend(taken);
                break;
            }
        }

        // Fresh bytes, possibly a partial head-of-line packet.
        while remaining > 0 {
            let Some(head) = self.tx_queue.front_mut() else {
                break;
            };
            let unserved = head.bytes - head.served;
            let take = (unserved as u64).min(remaining) as u32;
            head.served += take;
            let last = head.served == head.bytes;
            segments.push(Segment {
                packet_id: head.id,
                bytes: take,
                last,
                attempts: 0,
            });
            self.tx_queue_bytes -= take as u64;
            remaining -= take as u64;
            if last {
                self.tx_queue.pop_front();
            }
        }

        if segments.is_empty() {
            return None;
        }
        let bytes = segments.iter().map(|s| s.bytes as u64).sum();
        Some(TransportBlock { segments, bytes })
    }

    /// Handles a failed TB: each segment either returns to the
    /// retransmission queue with one more attempt, or is discarded once it
    /// exceeds the retransmission limit. Returns the discarded segments.
    pub fn tb_failed(&mut self, tb: TransportBlock, origin_cc: CcId) -> Vec<Segment> {
        let mut kept = Vec::new();
        let mut discarded = Vec::new();
        for mut seg in tb.segments {
            seg.attempts += 1;
            if seg.attempts > self.max_rlc_retx {
                discarded.push(seg);
            } else {
                kept.push(seg);
            }
        }
        if !kept.is_empty() {
            let bytes = kept.iter().map(|s| s.bytes as u64).sum();
            self.retx_queue_bytes += bytes;
            self.retx_queue.push_back(RetxPdu {
                segments: kept,
                bytes,
                origin_cc,
            });
        }
        discarded
    }
}

fn take_from_segments(segments: &mut Vec<Segment>, max_bytes: u64) -> Vec<Segment> {
    let mut taken = Vec::new();
    let mut remaining = max_bytes;
    while remaining > 0 && !segments.is_empty() {
        if segments[0].bytes as u64 <= remaining {
            let seg = segments.remove(0);
            remaining -= seg.bytes as u64;
            taken.push(seg);
        } else {
            let seg = &mut segments[0];
            let cut = remaining as u32;
            seg.bytes -= cut;
            taken.push(Segment {
                packet_id: seg.packet_id,
                bytes: cut,
                last: false,
                attempts: seg.attempts,
            });
            remaining = 0;
        }
    }
    taken
}

/// One grant of OFDM symbols to a flow within a subframe.
#[derive(Clone, Debug)]
pub struct Allocation {
    pub cc_id: CcId,
    pub flow_id: FlowId,
    pub n_symbols: u32,
    pub tb_bits: u64,
    pub subframe_index: u64,
}

/// Scheduling input for one flow at one carrier.
#[derive(Clone, Debug)]
pub struct FlowDemand {
    pub flow_id: FlowId,
    /// Bytes the MAC believes are pending for this flow on this carrier.
    pub pending_bytes: u64,
    pub se: f64,
}

/// Round-robin symbol allocator. `flows` must be sorted by flow id and
/// contain only flows with pending bytes; `rr_pointer` rotates the start of
/// service each subframe. Allocations are trimmed to the reported bytes and
/// freed symbols cascade to the next flows in round-robin order.
pub fn mac_schedule_subframe(
    cc: &CarrierComponent,
    params: &PhyParams,
    flows: &[FlowDemand],
    rr_pointer: usize,
    subframe_index: u64,
) -> Vec<Allocation> {
    let k = flows.len();
    let budget = cc.data_symbols();
    if k == 0 || budget == 0 {
        return Vec::new();
    }

    let base = budget / k as u32;
    let extra = budget % k as u32;

    // Per-flow quota in rotated order, then trim to need with the leftover
    // cascading forward (wrapping, as round-robin order is circular).
    let order: Vec<usize> = (0..k).map(|i| (rr_pointer + i) % k).collect();
    let mut granted = vec![0u32; k];
    let mut need = vec![0u32; k];
    for (pos, &idx) in order.iter().enumerate() {
        let f = &flows[idx];
        need[idx] = symbols_needed(params, cc, f.pending_bytes, f.se, budget);
        let quota = base + if (pos as u32) < extra { 1 } else { 0 };
        granted[idx] = quota.min(need[idx]);
    }
    let mut leftover = budget - granted.iter().sum::<u32>();
    while leftover > 0 {
        let mut progressed = false;
        for &idx in &order {
            if leftover == 0 {
                break;
            }
            if granted[idx] < need[idx] {
                let add = (need[idx] - granted[idx]).min(leftover);
                granted[idx] += add;
                leftover -= add;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }

    let mut allocations = Vec::new();
    for &idx in &order {
        let n = granted[idx];
        if n == 0 {
            continue;
        }
        let f = &flows[idx];
        allocations.push(Allocation {
            cc_id: cc.id,
            flow_id: f.flow_id,
            n_symbols: n,
            tb_bits: phy::tb_capacity_bits(params, cc, n, f.se),
            subframe_index,
        });
    }
    debug_assert!(
        allocations.iter().map(|a| a.n_symbols).sum::<u32>() <= budget,
        "per-subframe symbol budget exceeded"
    );
    allocations
}

fn symbols_needed(
    params: &PhyParams,
    cc: &CarrierComponent,
    pending_bytes: u64,
    se: f64,
    budget: u32,
) -> u32 {
    if pending_bytes == 0 || se <= 0.0 {
        return 0;
    }
    let per_symbol = phy::tb_capacity_bits(params, cc, 1, se).max(1);
    let mut n = (pending_bytes * 8).div_ceil(per_symbol).min(budget as u64) as u32;
    while n < budget && phy::tb_capacity_bits(params, cc, n, se) < pending_bytes * 8 {
        n += 1;
    }
    n
}
