//! SCADA communication layer: request/acknowledge exchanges over per-device
//! channels, DoS injection and RTT-based alerting.

mod alerts;

pub use alerts::{raise_alert, AlertMonitor};

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DeviceKey;

/// Channel name for a controllable device, e.g. `battery:1`.
pub fn channel_id(key: DeviceKey) -> String {
    match key {
        DeviceKey::Capacitor(id) => format!("capacitor:{id}"),
        DeviceKey::Transformer(id) => format!("transformer:{id}"),
        DeviceKey::Battery(id) => format!("battery:{id}"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CyberParams {
    /// One-way base latency, ms.
    pub base_latency_ms: f64,
    /// Standard deviation of the one-way jitter, ms.
    pub jitter_ms: f64,
    /// Per-leg drop probability without attack.
    pub drop_prob: f64,
    /// Added one-way latency at full intensity, as a multiple of the base latency.
    pub dos_latency_factor: f64,
    pub timeout_ms: f64,
    pub alert_window: usize,
    /// Median RTT above this multiple of the base RTT raises an alert.
    pub alert_median_factor: f64,
    pub alert_consecutive_timeouts: usize,
    /// Telemetry polls per environment step besides the step's own poll.
    pub background_polls: usize,
}

impl Default for CyberParams {
    fn default() -> Self {
        Self {
            base_latency_ms: 20.0,
            jitter_ms: 2.0,
            drop_prob: 0.0,
            dos_latency_factor: 10.0,
            timeout_ms: 5000.0,
            alert_window: 10,
            alert_median_factor: 3.0,
            alert_consecutive_timeouts: 3,
            background_polls: 10,
        }
    }
}

impl CyberParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| Err(Error::Config(format!("cyber: {r}")));
        if !(self.base_latency_ms > 0.0) {
            return bad("base latency must be positive");
        }
        if !(self.jitter_ms >= 0.0) {
            return bad("jitter must be non-negative");
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return bad("drop probability must be in [0, 1)");
        }
        if !(self.timeout_ms > 0.0) || self.alert_window == 0 || self.alert_consecutive_timeouts == 0 {
            return bad("timeout and alert thresholds must be positive");
        }
        Ok(())
    }

    pub fn base_rtt_ms(&self) -> f64 {
        2.0 * self.base_latency_ms
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DosAttack {
    pub targets: Vec<String>,
    /// Simulation seconds.
    pub start_s: f64,
    pub duration_s: f64,
    /// 0 is harmless, 1 blocks the channel.
    pub intensity: f64,
}

impl DosAttack {
    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::Config("DoS attack needs at least one target".into()));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::Config("DoS duration must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.intensity) {
            return Err(Error::Config("DoS intensity must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn active(&self, device: &str, t: f64) -> bool {
        t >= self.start_s && t < self.start_s + self.duration_s && self.targets.iter().any(|d| d == device)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RequestSent,
    AckReceived,
    Timeout,
    Alert,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CyberEvent {
    /// Simulation seconds.
    pub t: f64,
    pub kind: EventKind,
    pub device: String,
    pub rtt: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Delivery {
    Delivered { rtt_ms: f64 },
    Dropped,
}

impl Delivery {
    pub fn rtt(&self) -> Option<f64> {
        match self {
            Delivery::Delivered { rtt_ms } => Some(*rtt_ms),
            Delivery::Dropped => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CommChannel {
    pub device: String,
    /// Completion times (s) of exchanges still in flight.
    pub in_flight: VecDeque<f64>,
}

/// Deterministic simulator owning every channel. Each exchange draws the
/// same four random numbers whatever the attack state, so an intensity-0
/// attack reproduces the baseline stream exactly.
#[derive(Clone, Debug)]
pub struct CyberSim {
    params: CyberParams,
    channels: BTreeMap<String, CommChannel>,
    attacks: Vec<DosAttack>,
    rng: ChaCha8Rng,
    jitter: Normal<f64>,
    events: Vec<CyberEvent>,
    monitor: AlertMonitor,
}

impl CyberSim {
    pub fn new(params: CyberParams, devices: &[String], attacks: Vec<DosAttack>, seed: u64) -> Result<Self> {
        params.validate()?;
        for a in &attacks {
            a.validate()?;
        }
        let channels = devices
            .iter()
            .map(|d| (d.clone(), CommChannel { device: d.clone(), in_flight: VecDeque::new() }))
            .collect();
        let jitter = Normal::new(0.0, params.jitter_ms).map_err(|e| Error::Config(e.to_string()))?;
        let monitor = AlertMonitor::new(&params);
        Ok(Self { params, channels, attacks, rng: ChaCha8Rng::seed_from_u64(seed), jitter, events: Vec::new(), monitor })
    }

    pub fn params(&self) -> &CyberParams {
        &self.params
    }

    pub fn devices(&self) -> impl Iterator<Item = &str> {
        self.channels.keys().map(String::as_str)
    }

    pub fn attacks(&self) -> &[DosAttack] {
        &self.attacks
    }

    /// Strongest attack intensity on a device at time `t`.
    pub fn intensity(&self, device: &str, t: f64) -> f64 {
        self.attacks.iter().filter(|a| a.active(device, t)).map(|a| a.intensity).fold(0.0, f64::max)
    }

    /// True when a command sent now cannot get through.
    pub fn is_blocked(&self, device: &str, t: f64) -> bool {
        self.intensity(device, t) >= 1.0
    }

    fn exchange(&mut self, device: &str, now: f64) -> Result<(f64, Delivery)> {
        let ch = self.channels.get_mut(device).ok_or_else(|| Error::UnknownDevice(device.to_string()))?;
        // A channel carries one exchange at a time.
        while ch.in_flight.front().is_some_and(|&done| done <= now) {
            ch.in_flight.pop_front();
        }
        let start = ch.in_flight.back().copied().unwrap_or(now).max(now);
        let p = &self.params;
        let intensity = self.attacks.iter().filter(|a| a.active(device, start)).map(|a| a.intensity).fold(0.0, f64::max);
        let added = intensity * p.dos_latency_factor * p.base_latency_ms;
        let drop = p.drop_prob + (1.0 - p.drop_prob) * intensity;
        let mut rtt = 0.0;
        let mut lost = false;
        for _ in 0..2 {
            let j: f64 = self.jitter.sample(&mut self.rng);
            let u: f64 = self.rng.random();
            rtt += p.base_latency_ms + j.abs() + added;
            lost |= u < drop;
        }
        let delivery = if lost || rtt >= p.timeout_ms { Delivery::Dropped } else { Delivery::Delivered { rtt_ms: rtt } };
        let done = start
            + match delivery {
                Delivery::Delivered { rtt_ms } => rtt_ms,
                Delivery::Dropped => p.timeout_ms,
            } / 1000.0;
        self.channels.get_mut(device).unwrap().in_flight.push_back(done);

        self.events.push(CyberEvent { t: start, kind: EventKind::RequestSent, device: device.to_string(), rtt: None });
        let end = match delivery {
            Delivery::Delivered { rtt_ms } => {
                CyberEvent { t: done, kind: EventKind::AckReceived, device: device.to_string(), rtt: Some(rtt_ms) }
            }
            Delivery::Dropped => CyberEvent { t: done, kind: EventKind::Timeout, device: device.to_string(), rtt: None },
        };
        if let Some(alert) = self.monitor.observe(&end) {
            self.events.push(end);
            self.events.push(alert);
        } else {
            self.events.push(end);
        }
        Ok((done, delivery))
    }

    /// Sends a control command. The device applies it only when delivered.
    pub fn send_command(&mut self, device: &str, now: f64) -> Result<Delivery> {
        Ok(self.exchange(device, now)?.1)
    }

    /// Read request; returns the RTT in ms or `None` on timeout.
    pub fn poll_rtt(&mut self, device: &str, now: f64) -> Result<Option<f64>> {
        Ok(self.exchange(device, now)?.1.rtt())
    }

    pub fn events(&self) -> &[CyberEvent] {
        &self.events
    }

    /// Alerts raised so far.
    pub fn alerts(&self) -> impl Iterator<Item = &CyberEvent> {
        self.events.iter().filter(|e| e.kind == EventKind::Alert)
    }

    /// Devices whose alert condition currently holds.
    pub fn alarmed_devices(&self) -> Vec<String> {
        self.monitor.alarmed()
    }
}

/// One JSON object per line.
pub fn write_ndjson<W: Write, T: Serialize>(mut w: W, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(jitter: f64, attacks: Vec<DosAttack>) -> CyberSim {
        let params = CyberParams { jitter_ms: jitter, ..CyberParams::default() };
        CyberSim::new(params, &["battery:1".to_string()], attacks, 3).unwrap()
    }

    #[test]
    fn deterministic_legs_give_twice_the_base() {
        let mut s = sim(0.0, vec![]);
        assert_eq!(s.send_command("battery:1", 0.0).unwrap(), Delivery::Delivered { rtt_ms: 40.0 });
    }

    #[test]
    fn full_intensity_blocks() {
        let attack = DosAttack { targets: vec!["battery:1".into()], start_s: 0.0, duration_s: 100.0, intensity: 1.0 };
        let mut s = sim(2.0, vec![attack]);
        for k in 0..16 {
            assert_eq!(s.send_command("battery:1", k as f64 * 6.0).unwrap(), Delivery::Dropped);
        }
        assert!(s.is_blocked("battery:1", 50.0));
        assert!(!s.is_blocked("battery:1", 100.0));
        let timeout = s.events().iter().find(|e| e.kind == EventKind::Timeout).unwrap();
        assert_eq!(timeout.t, 5.0);
    }

    #[test]
    fn unknown_device_is_an_error() {
        let mut s = sim(0.0, vec![]);
        assert!(matches!(s.poll_rtt("capacitor:9", 0.0), Err(Error::UnknownDevice(_))));
    }

    #[test]
    fn overlapping_requests_queue_on_the_channel() {
        let mut s = sim(0.0, vec![]);
        s.poll_rtt("battery:1", 0.0).unwrap();
        s.poll_rtt("battery:1", 0.0).unwrap();
        let sent: Vec<f64> = s.events().iter().filter(|e| e.kind == EventKind::RequestSent).map(|e| e.t).collect();
        assert_eq!(sent, vec![0.0, 0.04]);
    }

    #[test]
    fn invalid_attack_rejected() {
        let attack = DosAttack { targets: vec![], start_s: 0.0, duration_s: 1.0, intensity: 0.5 };
        assert!(CyberSim::new(CyberParams::default(), &[], vec![attack], 0).is_err());
    }
}
