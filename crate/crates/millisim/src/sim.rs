//! End-to-end wiring of one replication: traffic, RLC queues, BSR routing,
//! per-carrier MAC scheduling, the link model, and statistics.

use std::collections::BTreeMap;
use std::io::Write;

use crate::ccm::{apply_policy, OccupancyMap, PolicyKind, QciCcMap, Thresholds};
use crate::config::Config;
use crate::engine::{EventKind, EventQueue};
use crate::mac::{
    mac_schedule_subframe, Bsr, EnqueueOutcome, Flow, FlowDemand, FlowId, PacketId, Qci,
    TransportBlock,
};
use crate::metrics::{CcStats, FlowStats, RunStats};
use crate::phy::{self, CarrierComponent, CcId, PhyParams};
use crate::rng::{stream, RngStream};
use crate::scenario::{drop_users, mobility_step, TrafficSource, UePosition};
use crate::time::SimTime;

/// Per-UE channel state: position plus cached per-carrier link quality.
struct UeState {
    pos: UePosition,
    los: bool,
    /// Indexed by carrier id.
    shadow_db: Vec<f64>,
    sinr_db: Vec<f64>,
    se: Vec<f64>,
    edge_db: Vec<f64>,
}

/// An application packet awaiting complete delivery.
struct PacketInfo {
    remaining: u64,
    total: u32,
    lost: bool,
    arrival: SimTime,
}

pub struct Simulation<'a> {
    cfg: Config,
    params: PhyParams,
    carriers: Vec<CarrierComponent>,
    qci_map: QciCcMap,
    thresholds: Thresholds,
    occ: OccupancyMap,

    queue: EventQueue,
    t_end: SimTime,
    subframe_ns: u64,
    bsr_period_ns: u64,

    flows: Vec<Flow>,
    sources: Vec<TrafficSource>,
    next_packet: Vec<(SimTime, PacketId)>,
    /// Routed fresh-queue bytes the MAC believes pending, per carrier per flow.
    pending_tx: Vec<Vec<u64>>,
    inflight_bytes: Vec<u64>,
    packets: Vec<BTreeMap<PacketId, PacketInfo>>,
    rr_counter: Vec<u64>,
    subframe_index: u64,

    ues: Vec<UeState>,
    mobility_tick: u64,

    rng_mobility: RngStream,
    rng_shadowing: RngStream,
    rng_tb: RngStream,

    flow_stats: Vec<FlowStats>,
    tx_sym: Vec<u64>,
    routed_bytes: BTreeMap<(Qci, CcId), u64>,
    trace: Option<&'a mut dyn Write>,
}

impl<'a> Simulation<'a> {
    pub fn new(cfg: &Config, trace: Option<&'a mut dyn Write>) -> Self {
        cfg.validate().expect("invalid configuration");
        let carriers = cfg.carriers();
        let n_cc = carriers.len();

        let mut qci_map = QciCcMap::new();
        let mut thresholds = Thresholds::new();
        match cfg.policy {
            PolicyKind::NoCa => {
                qci_map.insert(Qci::EMBB, 0);
                qci_map.insert(Qci::URLLC, 0);
            }
            PolicyKind::PrimaryOnly | PolicyKind::MilliSlice => {
                qci_map.insert(Qci::EMBB, 0);
                qci_map.insert(Qci::URLLC, 1);
            }
        }
        thresholds.set(
            Qci::URLLC,
            cfg.r_urllc_packets * cfg.urllc_packet_bytes as u64,
        );
        thresholds.set(Qci::EMBB, cfg.r_embb_packets * cfg.embb_packet_bytes as u64);

        let mut rng_mobility = RngStream::new(cfg.seed, stream::MOBILITY);
        let mut rng_shadowing = RngStream::new(cfg.seed, stream::SHADOWING);
        let mut rng_traffic = RngStream::new(cfg.seed, stream::TRAFFIC);
        let rng_tb = RngStream::new(cfg.seed, stream::TB_ERRORS);

        let n_ues = cfg.n_embb_ues + cfg.n_urllc_ues;
        let positions = drop_users(
            n_ues,
            cfg.radius_m,
            cfg.ue_speed_min_mps,
            cfg.ue_speed_max_mps,
            &mut rng_mobility,
        );
        let params = cfg.phy_params();
        let ues: Vec<UeState> = positions
            .into_iter()
            .map(|pos| {
                let d = pos.distance_to_gnb();
                let los = rng_mobility.draw_bernoulli((18.0 / d.max(1e-9)).min(1.0));
                let shadow_db: Vec<f64> = (0..n_cc)
                    .map(|_| rng_shadowing.draw_normal(0.0, params.shadowing_sigma_db))
                    .collect();
                let mut ue = UeState {
                    pos,
                    los,
                    shadow_db,
                    sinr_db: vec![0.0; n_cc],
                    se: vec![0.0; n_cc],
                    edge_db: vec![0.0; n_cc],
                };
                refresh_links(&mut ue, &carriers, &params);
                ue
            })
            .collect();

        // eMBB flows first (ids 0..n_embb), URLLC after; flow i serves UE i.
        let mut flows = Vec::new();
        let mut sources = Vec::new();
        for i in 0..cfg.n_embb_ues {
            flows.push(Flow::new(
                flows.len(),
                Qci::EMBB,
                i,
                qci_map.primary(Qci::EMBB).unwrap(),
                cfg.embb_packet_bytes,
                cfg.embb_rate_bps(),
                cfg.max_tx_buffer_bytes,
                cfg.max_rlc_retx,
            ));
        }
        for i in 0..cfg.n_urllc_ues {
            flows.push(Flow::new(
                flows.len(),
                Qci::URLLC,
                cfg.n_embb_ues + i,
                qci_map.primary(Qci::URLLC).unwrap(),
                cfg.urllc_packet_bytes,
                cfg.urllc_rate_bps(),
                cfg.max_tx_buffer_bytes,
                cfg.max_rlc_retx,
            ));
        }
        for flow in &flows {
            sources.push(TrafficSource::new(
                flow.id,
                flow.source_rate_bps,
                flow.packet_size,
                &mut rng_traffic,
            ));
        }

        let flow_stats = flows
            .iter()
            .map(|f| FlowStats::new(f.qci, f.ue_id))
            .collect();

        let subframe_ns = (1e9 / (cfg.frames_per_second as f64 * cfg.subframes_per_frame as f64))
            .round() as u64;
        let n_flows = flows.len();
        Simulation {
            params,
            qci_map,
            thresholds,
            occ: OccupancyMap::new(SimTime::from_nanos(
                (cfg.occupancy_window_ms * 1e6).round() as u64,
            )),
            queue: EventQueue::new(),
            t_end: SimTime::from_secs_f64(cfg.duration_s),
            subframe_ns,
            bsr_period_ns: (cfg.bsr_period_ms * 1e6).round() as u64,
            flows,
            sources,
            next_packet: vec![(SimTime::ZERO, 0); n_flows],
            pending_tx: vec![vec![0; n_flows]; n_cc],
            inflight_bytes: vec![0; n_flows],
            packets: (0..n_flows).map(|_| BTreeMap::new()).collect(),
            rr_counter: vec![0; n_cc],
            subframe_index: 0,
            ues,
            mobility_tick: 0,
            rng_mobility,
            rng_shadowing,
            rng_tb,
            flow_stats,
            tx_sym: vec![0; n_cc],
            routed_bytes: BTreeMap::new(),
            carriers,
            trace,
            cfg: cfg.clone(),
        }
    }

    /// Runs to completion and returns finalized statistics.
    pub fn run(mut self) -> RunStats {
        // Initial event creation order fixes same-timestamp processing order
        // for the whole run: URLLC BSR timers, then eMBB BSR timers, then the
        // subframe boundary. Reports therefore always precede scheduling at
        // equal timestamps.
        let urllc_first: Vec<FlowId> = self
            .flows
            .iter()
            .filter(|f| f.qci == Qci::URLLC)
            .map(|f| f.id)
            .chain(
                self.flows
                    .iter()
                    .filter(|f| f.qci != Qci::URLLC)
                    .map(|f| f.id),
            )
            .collect();
        for flow in urllc_first {
            self.queue
                .schedule(SimTime::ZERO, EventKind::BsrTimer { flow });
        }
        self.queue
            .schedule(SimTime::ZERO, EventKind::SubframeBoundary);
        self.queue.schedule(
            SimTime::from_nanos((self.cfg.mobility_tick_ms * 1e6).round() as u64),
            EventKind::MobilityTick,
        );
        for flow in 0..self.flows.len() {
            let (t, id) = self.sources[flow].next();
            self.next_packet[flow] = (t, id);
            if t <= self.t_end {
                self.queue.schedule(t, EventKind::PacketArrival { flow });
            }
        }

        while let Some((t, kind)) = self.queue.pop_until(self.t_end) {
            match kind {
                EventKind::BsrTimer { flow } => {
                    self.issue_bsr(flow, t);
                    let next = t + SimTime::from_nanos(self.bsr_period_ns);
                    self.queue.schedule(next, EventKind::BsrTimer { flow });
                }
                EventKind::PacketArrival { flow } => self.on_packet_arrival(flow, t),
                EventKind::SubframeBoundary => {
                    for cc_idx in 0..self.carriers.len() {
                        self.schedule_carrier(cc_idx, t);
                    }
                    self.subframe_index += 1;
                    let next = t + SimTime::from_nanos(self.subframe_ns);
                    self.queue.schedule(next, EventKind::SubframeBoundary);
                }
                EventKind::TbDelivery { flow, tb } => self.on_tb_delivery(flow, tb, t),
                EventKind::MobilityTick => {
                    self.on_mobility_tick();
                    let next = t
                        + SimTime::from_nanos((self.cfg.mobility_tick_ms * 1e6).round() as u64);
                    self.queue.schedule(next, EventKind::MobilityTick);
                }
            }
        }

        self.finalize()
    }

    fn issue_bsr(&mut self, flow_id: FlowId, t: SimTime) {
        let bsr = self.flows[flow_id].generate_bsr(t);
        if self.cfg.policy == PolicyKind::MilliSlice {
            self.occ.update(&bsr, t);
        }
        let routed = apply_policy(
            self.cfg.policy,
            &bsr,
            &self.occ,
            &self.qci_map,
            &self.thresholds,
            t,
        );
        self.trace_bsr(&bsr, &routed, t);
        for (&cc, rbsr) in &routed {
            let total = rbsr.tx_queue_bytes + rbsr.retx_queue_bytes;
            if total > 0 {
                *self.routed_bytes.entry((bsr.qci, cc)).or_insert(0) += total;
            }
        }
        for cc in 0..self.carriers.len() {
            self.pending_tx[cc][flow_id] =
                routed.get(&cc).map(|b| b.tx_queue_bytes).unwrap_or(0);
        }
    }

    fn trace_bsr(&mut self, bsr: &Bsr, routed: &BTreeMap<CcId, Bsr>, t: SimTime) {
        let Some(trace) = self.trace.as_mut() else {
            return;
        };
        let mut aggs = String::new();
        if self.cfg.policy == PolicyKind::MilliSlice {
            for (qci, _) in self.qci_map.iter() {
                if qci == bsr.qci {
                    continue;
                }
                if !aggs.is_empty() {
                    aggs.push('|');
                }
                aggs.push_str(&format!("{}:{}", qci.name(), self.occ.aggregate(qci, t)));
            }
        }
        let routes = routed
            .iter()
            .map(|(cc, b)| format!("{cc}:{}+{}", b.tx_queue_bytes, b.retx_queue_bytes))
            .collect::<Vec<_>>()
            .join("|");
        writeln!(
            trace,
            "bsr t={} flow={} qci={} tx={} retx={} agg={} routes={}",
            t.as_nanos(),
            bsr.flow_id,
            bsr.qci.name(),
            bsr.tx_queue_bytes,
            bsr.retx_queue_bytes,
            if aggs.is_empty() { "-" } else { &aggs },
            routes
        )
        .expect("trace write failed");
    }

    fn on_packet_arrival(&mut self, flow_id: FlowId, t: SimTime) {
        let (at, packet_id) = self.next_packet[flow_id];
        debug_assert_eq!(at, t, "arrival event fired at the wrong time");
        let size = self.flows[flow_id].packet_size;
        let stats = &mut self.flow_stats[flow_id];
        stats.packets_sent += 1;
        stats.bytes_offered += size as u64;

        let was_empty = self.flows[flow_id].queues_empty();
        match self.flows[flow_id].rlc_enqueue(packet_id, size) {
            EnqueueOutcome::Dropped => {
                let stats = &mut self.flow_stats[flow_id];
                stats.packets_dropped += 1;
                stats.bytes_dropped_enqueue += size as u64;
            }
            EnqueueOutcome::Accepted => {
                self.packets[flow_id].insert(
                    packet_id,
                    PacketInfo {
                        remaining: size as u64,
                        total: size,
                        lost: false,
                        arrival: t,
                    },
                );
                // A report straight away instead of waiting out the timer, so
                // an idle flow is not penalized a full BSR period.
                if was_empty {
                    self.issue_bsr(flow_id, t);
                }
            }
        }

        let (next_t, next_id) = self.sources[flow_id].next();
        self.next_packet[flow_id] = (next_t, next_id);
        if next_t <= self.t_end {
            self.queue
                .schedule(next_t, EventKind::PacketArrival { flow: flow_id });
        }
    }

    fn schedule_carrier(&mut self, cc_idx: usize, t: SimTime) {
        let cc = &self.carriers[cc_idx];
        let mut demands = Vec::new();
        for flow in &self.flows {
            let pending = self.pending_tx[cc_idx][flow.id] + flow.retx_bytes_on(cc_idx);
            let se = self.ues[flow.ue_id].se[cc_idx];
            if pending > 0 && se > 0.0 {
                demands.push(FlowDemand {
                    flow_id: flow.id,
                    pending_bytes: pending,
                    se,
                });
            }
        }
        if demands.is_empty() {
            return;
        }
        let rr_pointer = (self.rr_counter[cc_idx] % demands.len() as u64) as usize;
        self.rr_counter[cc_idx] += 1;
        let allocations = mac_schedule_subframe(
            cc,
            &self.params,
            &demands,
            rr_pointer,
            self.subframe_index,
        );

        // TBs occupy consecutive data symbols after the control region; a
        // packet's air latency therefore depends on its position in the
        // subframe.
        let symbol_ns = cc.symbol_duration_s() * 1e9;
        let processing_ns = (self.cfg.processing_delay_ms * 1e6).round() as u64;
        let mut cursor: u32 = 0;
        for alloc in &allocations {
            let flow = &mut self.flows[alloc.flow_id];
            let retx_before = flow.retx_bytes_on(cc_idx);
            let Some(tb) = flow.build_tb(cc_idx, alloc.tb_bits / 8) else {
                continue;
            };
            let retx_served = retx_before - flow.retx_bytes_on(cc_idx);
            let fresh_served = tb.bytes - retx_served;
            self.pending_tx[cc_idx][alloc.flow_id] =
                self.pending_tx[cc_idx][alloc.flow_id].saturating_sub(fresh_served);

            self.tx_sym[cc_idx] += alloc.n_symbols as u64;
            cursor += alloc.n_symbols;

            let ue = &self.ues[flow.ue_id];
            let ok = !self.cfg.tb_errors
                || phy::tb_success(ue.sinr_db[cc_idx], ue.edge_db[cc_idx], &mut self.rng_tb);
            if ok {
                let end_sym = cc.ctrl_symbols + cursor;
                let air_ns = (end_sym as f64 * symbol_ns).round() as u64;
                let deliver_at = t + SimTime::from_nanos(air_ns + processing_ns);
                self.inflight_bytes[alloc.flow_id] += tb.bytes;
                self.queue.schedule(
                    deliver_at,
                    EventKind::TbDelivery {
                        flow: alloc.flow_id,
                        tb,
                    },
                );
            } else {
                let discarded = self.flows[alloc.flow_id].tb_failed(tb, cc_idx);
                for seg in discarded {
                    let stats = &mut self.flow_stats[alloc.flow_id];
                    stats.bytes_discarded_retx += seg.bytes as u64;
                    let entry = self.packets[alloc.flow_id]
                        .get_mut(&seg.packet_id)
                        .expect("discarded segment for unknown packet");
                    entry.remaining -= seg.bytes as u64;
                    if !entry.lost {
                        entry.lost = true;
                        stats.packets_lost += 1;
                    }
                    if entry.remaining == 0 {
                        self.packets[alloc.flow_id].remove(&seg.packet_id);
                    }
                }
            }
        }
        debug_assert!(
            cursor <= cc.data_symbols(),
            "transmitted past the subframe's data region"
        );
    }

    fn on_tb_delivery(&mut self, flow_id: FlowId, tb: TransportBlock, t: SimTime) {
        self.inflight_bytes[flow_id] -= tb.bytes;
        self.flow_stats[flow_id].bytes_delivered_air += tb.bytes;
        for seg in &tb.segments {
            let entry = self.packets[flow_id]
                .get_mut(&seg.packet_id)
                .expect("delivered segment for unknown packet");
            entry.remaining -= seg.bytes as u64;
            if entry.remaining == 0 {
                let total = entry.total as u64;
                let arrival = entry.arrival;
                let lost = entry.lost;
                self.packets[flow_id].remove(&seg.packet_id);
                if !lost {
                    self.flow_stats[flow_id].record_delivery(arrival, t, total);
                }
            }
        }
    }

    fn on_mobility_tick(&mut self) {
        self.mobility_tick += 1;
        let tick_ms = self.cfg.mobility_tick_ms;
        let dt = tick_ms / 1e3;
        let heading_every = (self.cfg.heading_redraw_s * 1e3 / tick_ms).round().max(1.0) as u64;
        let los_every = (self.cfg.los_redraw_s * 1e3 / tick_ms).round().max(1.0) as u64;
        let shadow_every = (self.cfg.shadowing_period_ms / tick_ms).round().max(1.0) as u64;

        for ue in &mut self.ues {
            ue.pos = mobility_step(&ue.pos, dt, self.cfg.radius_m);
            if self.mobility_tick % heading_every == 0 {
                ue.pos.heading = self.rng_mobility.draw_uniform(0.0, std::f64::consts::TAU);
            }
            if self.mobility_tick % los_every == 0 {
                let d = ue.pos.distance_to_gnb();
                ue.los = self
                    .rng_mobility
                    .draw_bernoulli((18.0 / d.max(1e-9)).min(1.0));
            }
            if self.mobility_tick % shadow_every == 0 {
                for s in &mut ue.shadow_db {
                    *s = self
                        .rng_shadowing
                        .draw_normal(0.0, self.params.shadowing_sigma_db);
                }
            }
            refresh_links(ue, &self.carriers, &self.params);
        }
    }

    fn finalize(mut self) -> RunStats {
        for flow in &self.flows {
            let stats = &mut self.flow_stats[flow.id];
            stats.bytes_residual = flow.tx_queue_bytes()
                + flow.retx_queue_bytes()
                + self.inflight_bytes[flow.id];
            stats.packets_inflight =
                self.packets[flow.id].values().filter(|p| !p.lost).count() as u64;
        }
        let ccs = self
            .carriers
            .iter()
            .map(|cc| CcStats {
                cc_id: cc.id,
                tx_sym: self.tx_sym[cc.id],
                bandwidth_share: cc.bandwidth_share,
            })
            .collect();
        RunStats {
            policy: self.cfg.policy.to_string(),
            seed: self.cfg.seed,
            config_hash: self.cfg.config_hash(),
            duration_s: self.cfg.duration_s,
            frames_per_second: self.cfg.frames_per_second,
            subframes_per_frame: self.cfg.subframes_per_frame,
            symbols_per_subframe: self.cfg.symbols_per_subframe,
            flows: self
                .flow_stats
                .into_iter()
                .enumerate()
                .collect(),
            ccs,
            routed_bytes: self.routed_bytes,
        }
    }
}

fn refresh_links(ue: &mut UeState, carriers: &[CarrierComponent], params: &PhyParams) {
    let d = ue.pos.distance_to_gnb();
    for cc in carriers {
        let sinr = phy::sinr_db(params, cc, d, ue.los, ue.shadow_db[cc.id]);
        ue.sinr_db[cc.id] = sinr;
        ue.se[cc.id] = phy::spectral_efficiency(params, sinr);
        ue.edge_db[cc.id] = phy::mcs_edge_db(params, sinr);
    }
}

/// Convenience wrapper: one full replication from a config.
pub fn run_single(cfg: &Config, trace: Option<&mut dyn Write>) -> RunStats {
    Simulation::new(cfg, trace).run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::run_csv;

    fn quiet_cfg() -> Config {
        let mut cfg = Config::default();
        cfg.duration_s = 1.0;
        cfg.n_embb_ues = 2;
        cfg.n_urllc_ues = 2;
        cfg.embb_rate_mbps = 20.0;
        cfg
    }

    #[test]
    fn short_run_completes_and_conserves() {
        for policy in [
            PolicyKind::NoCa,
            PolicyKind::PrimaryOnly,
            PolicyKind::MilliSlice,
        ] {
            let mut cfg = quiet_cfg();
            cfg.policy = policy;
            let stats = run_single(&cfg, None);
            stats.verify_conservation().unwrap();
            let sent: u64 = stats.flows.values().map(|f| f.packets_sent).sum();
            assert!(sent > 0, "{policy}: no traffic generated");
            for (id, f) in &stats.flows {
                assert_eq!(
                    f.packets_sent,
                    f.packets_delivered + f.packets_dropped + f.packets_lost + f.packets_inflight,
                    "{policy}: packet accounting open for flow {id}"
                );
            }
        }
    }

    #[test]
    fn identical_seeds_reproduce_exactly() {
        let cfg = quiet_cfg();
        let a = run_single(&cfg, None);
        let b = run_single(&cfg, None);
        assert_eq!(run_csv(&a), run_csv(&b));
    }

    #[test]
    fn different_seeds_differ() {
        let cfg = quiet_cfg();
        let mut cfg2 = quiet_cfg();
        cfg2.seed = 2;
        let a = run_single(&cfg, None);
        let b = run_single(&cfg2, None);
        assert_ne!(run_csv(&a), run_csv(&b));
    }

    #[test]
    fn lone_flow_reaches_offered_rate() {
        // Static UE, no shadowing, no TB errors: delivered throughput must
        // match the offered 20 Mbit/s within 5%.
        let mut cfg = Config::default();
        cfg.policy = PolicyKind::PrimaryOnly;
        cfg.duration_s = 5.0;
        cfg.n_embb_ues = 1;
        cfg.n_urllc_ues = 0;
        cfg.embb_rate_mbps = 20.0;
        cfg.shadowing_sigma_db = 0.0;
        cfg.ue_speed_min_mps = 0.0;
        cfg.ue_speed_max_mps = 0.0;
        cfg.tb_errors = false;
        let stats = run_single(&cfg, None);
        let got = stats.per_user_throughput_mbps(Qci::EMBB);
        assert!(
            (got - 20.0).abs() / 20.0 < 0.05,
            "throughput {got} Mbit/s, offered 20"
        );
        stats.verify_conservation().unwrap();
    }

    #[test]
    fn urllc_delay_has_sane_floor() {
        // Delay includes at least the processing latency.
        let cfg = quiet_cfg();
        let stats = run_single(&cfg, None);
        let delay = stats.mean_delay_ms(Qci::URLLC);
        assert!(delay >= 1.0, "mean URLLC delay {delay} ms below floor");
        assert!(delay < 10.0, "mean URLLC delay {delay} ms absurdly high");
    }

    #[test]
    fn no_ca_uses_single_carrier() {
        let mut cfg = quiet_cfg();
        cfg.policy = PolicyKind::NoCa;
        let stats = run_single(&cfg, None);
        assert_eq!(stats.ccs.len(), 1);
        assert!(stats.ccs[0].tx_sym > 0);
    }

    #[test]
    fn millislice_never_routes_urllc_to_cc0() {
        let mut cfg = quiet_cfg();
        cfg.policy = PolicyKind::MilliSlice;
        cfg.duration_s = 2.0;
        let stats = run_single(&cfg, None);
        assert_eq!(
            stats.routed_bytes.get(&(Qci::URLLC, 0)).copied().unwrap_or(0),
            0
        );
        assert!(stats.routed_bytes.get(&(Qci::URLLC, 1)).copied().unwrap_or(0) > 0);
    }

    #[test]
    fn trace_records_routing() {
        let mut cfg = quiet_cfg();
        cfg.policy = PolicyKind::MilliSlice;
        cfg.duration_s = 0.1;
        let mut buf = Vec::new();
        run_single(&cfg, Some(&mut buf));
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().count() > 100);
        assert!(text.lines().all(|l| l.starts_with("bsr t=")));
        assert!(text.contains("qci=urllc"));
        assert!(text.contains("agg=urllc:"));
    }
}
