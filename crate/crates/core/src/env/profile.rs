//! Diurnal load profile and per-bus load draws.

use rand::Rng;

/// Relative load at a given hour: 0.6 at 04:00 rising to 1.0 at 18:00 along
/// a half cosine, then falling back.
pub fn profile(hour: usize) -> f64 {
    let h = (hour % 24) as f64;
    let x = if (4.0..=18.0).contains(&h) {
        (h - 4.0) / 14.0
    } else {
        let since_peak = if h > 18.0 { h - 18.0 } else { h + 6.0 };
        1.0 - since_peak / 10.0
    };
    0.6 + 0.4 * 0.5 * (1.0 - (std::f64::consts::PI * x).cos())
}

/// One independent multiplier per bus, uniform in `[lo, 1]`, times the profile.
pub fn draw_loads(rng: &mut impl Rng, buses: usize, hour: usize, lo: f64) -> Vec<f64> {
    let p = profile(hour);
    (0..buses).map(|_| p * rng.random_range(lo..=1.0)).collect()
}
