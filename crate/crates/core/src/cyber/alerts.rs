use std::collections::{BTreeMap, VecDeque};

use super::{CyberEvent, CyberParams, EventKind};

#[derive(Clone, Debug, Default)]
struct DeviceWindow {
    rtts: VecDeque<f64>,
    consecutive_timeouts: usize,
    alarmed: bool,
}

/// Online alert rule: the median of the last `alert_window` RTT samples above
/// `alert_median_factor` × base RTT, or a run of consecutive timeouts.
/// Timeouts enter the window at the timeout value. One alert is emitted per
/// rising edge of the condition.
#[derive(Clone, Debug)]
pub struct AlertMonitor {
    window: usize,
    threshold_ms: f64,
    timeout_ms: f64,
    max_timeouts: usize,
    devices: BTreeMap<String, DeviceWindow>,
}

impl AlertMonitor {
    pub fn new(p: &CyberParams) -> Self {
        Self {
            window: p.alert_window,
            threshold_ms: p.alert_median_factor * p.base_rtt_ms(),
            timeout_ms: p.timeout_ms,
            max_timeouts: p.alert_consecutive_timeouts,
            devices: BTreeMap::new(),
        }
    }

    pub fn observe(&mut self, e: &CyberEvent) -> Option<CyberEvent> {
        let sample = match e.kind {
            EventKind::AckReceived => e.rtt?,
            EventKind::Timeout => self.timeout_ms,
            _ => return None,
        };
        let w = self.devices.entry(e.device.clone()).or_default();
        if e.kind == EventKind::Timeout {
            w.consecutive_timeouts += 1;
        } else {
            w.consecutive_timeouts = 0;
        }
        w.rtts.push_back(sample);
        if w.rtts.len() > self.window {
            w.rtts.pop_front();
        }
        let median_high = w.rtts.len() == self.window && median(&w.rtts) > self.threshold_ms;
        let now = median_high || w.consecutive_timeouts >= self.max_timeouts;
        let rising = now && !w.alarmed;
        w.alarmed = now;
        rising.then(|| CyberEvent { t: e.t, kind: EventKind::Alert, device: e.device.clone(), rtt: e.rtt })
    }

    pub fn alarmed(&self) -> Vec<String> {
        self.devices.iter().filter(|(_, w)| w.alarmed).map(|(d, _)| d.clone()).collect()
    }
}

fn median(v: &VecDeque<f64>) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().collect();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Replays a time-ordered event stream through the alert rule.
pub fn raise_alert(events: &[CyberEvent], params: &CyberParams) -> Vec<CyberEvent> {
    let mut m = AlertMonitor::new(params);
    events.iter().filter_map(|e| m.observe(e)).collect()
}
