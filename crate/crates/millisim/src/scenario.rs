//! Topology, user mobility and application traffic generation.
//!
//! Users are dropped uniformly over a disc around the gNB and follow a
//! random-direction model: constant speed, heading re-drawn periodically,
//! specular reflection at the cell boundary. Sources are CBR UDP.

use crate::rng::RngStream;
use crate::time::SimTime;

#[derive(Clone, Copy, Debug)]
pub struct UePosition {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub heading: f64,
}

impl UePosition {
    pub fn distance_to_gnb(&self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }
}

/// Uniform drop over the disc of radius `r` (polar method), speed uniform in
/// [speed_min, speed_max], heading uniform in [0, 2pi).
pub fn drop_users(
    n: usize,
    r: f64,
    speed_min: f64,
    speed_max: f64,
    rng: &mut RngStream,
) -> Vec<UePosition> {
    (0..n)
        .map(|_| {
            let radius = r * rng.draw_uniform(0.0, 1.0).sqrt();
            let angle = rng.draw_uniform(0.0, std::f64::consts::TAU);
            UePosition {
                x: radius * angle.cos(),
                y: radius * angle.sin(),
                speed: rng.draw_uniform(speed_min, speed_max),
                heading: rng.draw_uniform(0.0, std::f64::consts::TAU),
            }
        })
        .collect()
}

/// Advances the UE by speed*dt along its heading; crossing the cell boundary
/// reflects the position and mirrors the heading.
pub fn mobility_step(ue: &UePosition, dt: f64, radius: f64) -> UePosition {
    assert!(dt > 0.0, "non-positive mobility step");
    let mut x = ue.x;
    let mut y = ue.y;
    let mut heading = ue.heading;
    let mut remaining = ue.speed * dt;

    // A step can graze the boundary more than once at a corner-like angle.
    for _ in 0..8 {
        let nx = x + remaining * heading.cos();
        let ny = y + remaining * heading.sin();
        if nx * nx + ny * ny <= radius * radius {
            x = nx;
            y = ny;
            break;
        }
        // Find the boundary crossing along the segment, then reflect the
        // direction about the tangent at the crossing point.
        let dx = heading.cos();
        let dy = heading.sin();
        let b = x * dx + y * dy;
        let c = x * x + y * y - radius * radius;
        let disc = (b * b - c).max(0.0);
        let t_hit = (-b + disc.sqrt()).clamp(0.0, remaining);
        x += t_hit * dx;
        y += t_hit * dy;
        remaining -= t_hit;
        let norm = (x * x + y * y).sqrt().max(1e-12);
        let nxu = x / norm;
        let nyu = y / norm;
        let dot = dx * nxu + dy * nyu;
        let rx = dx - 2.0 * dot * nxu;
        let ry = dy - 2.0 * dot * nyu;
        heading = ry.atan2(rx);
        if remaining <= 0.0 {
            break;
        }
    }

    // Guard against floating-point overshoot of the containment invariant.
    let norm = (x * x + y * y).sqrt();
    if norm > radius {
        x *= radius / norm;
        y *= radius / norm;
    }
    UePosition {
        x,
        y,
        speed: ue.speed,
        heading,
    }
}

/// Constant-bitrate source: one packet of `packet_bytes` every
/// packet_bytes*8/rate seconds, starting at a random phase within one
/// inter-arrival period. Exact rational stepping avoids drift.
#[derive(Clone, Debug)]
pub struct TrafficSource {
    pub flow_id: usize,
    pub rate_bps: u64,
    pub packet_bytes: u32,
    next_arrival_ns: u64,
    rem_num: u64,
    next_packet_id: u64,
}

impl TrafficSource {
    pub fn new(flow_id: usize, rate_bps: u64, packet_bytes: u32, rng: &mut RngStream) -> Self {
        assert!(rate_bps > 0, "source rate must be positive");
        assert!(packet_bytes > 0, "packet size must be positive");
        let interval = Self::interval_ns(rate_bps, packet_bytes);
        let phase = rng.draw_uniform(0.0, interval as f64) as u64;
        TrafficSource {
            flow_id,
            rate_bps,
            packet_bytes,
            next_arrival_ns: phase,
            rem_num: 0,
            next_packet_id: 0,
        }
    }

    fn interval_ns(rate_bps: u64, packet_bytes: u32) -> u64 {
        packet_bytes as u64 * 8 * 1_000_000_000 / rate_bps
    }

    pub fn interarrival_ns(&self) -> u64 {
        Self::interval_ns(self.rate_bps, self.packet_bytes)
    }

    /// Returns the next packet's (arrival time, id) and advances the source.
    pub fn next(&mut self) -> (SimTime, u64) {
        let t = SimTime::from_nanos(self.next_arrival_ns);
        let id = self.next_packet_id;
        self.next_packet_id += 1;

        let num = self.packet_bytes as u64 * 8 * 1_000_000_000;
        self.next_arrival_ns += num / self.rate_bps;
        self.rem_num += num % self.rate_bps;
        if self.rem_num >= self.rate_bps {
            self.next_arrival_ns += 1;
            self.rem_num -= self.rate_bps;
        }
        (t, id)
    }
}
