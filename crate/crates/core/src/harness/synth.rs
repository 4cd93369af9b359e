use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::streams::{stream_rng, Purpose};
use crate::{Error, Result};

pub const SLOTS_PER_DAY: usize = 48;
pub const ARCHETYPES: usize = 3;

/// Half-hourly consumption of one household, in kWh per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub household: usize,
    /// Behaviour archetype the generator drew this household from.
    pub archetype: usize,
    pub series: Vec<f64>,
}

impl LoadProfile {
    pub fn days(&self) -> usize {
        self.series.len() / SLOTS_PER_DAY
    }

    /// Mean consumption per slot of the day over all days.
    pub fn daily_average(&self) -> Vec<f64> {
        let days = self.days().max(1);
        let mut out = vec![0.0; SLOTS_PER_DAY];
        for (t, v) in self.series.iter().enumerate() {
            out[t % SLOTS_PER_DAY] += v;
        }
        out.iter_mut().for_each(|v| *v /= days as f64);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub households: usize,
    pub days: usize,
    pub seed: u64,
    /// Scales both the multiplicative noise and the peak-event rate and size.
    /// Zero gives exactly periodic profiles.
    pub noise_level: f64,
    /// Relative frequency of each archetype.
    pub archetype_weights: [f64; ARCHETYPES],
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            households: 100,
            days: 28,
            seed: 0,
            noise_level: 1.0,
            archetype_weights: [0.5, 0.3, 0.2],
        }
    }
}

struct Archetype {
    base: f64,
    // (amplitude, centre slot)
    peaks: [(f64, f64); 2],
    weekend: f64,
}

const SHAPES: [Archetype; ARCHETYPES] = [
    // out during the day: short morning peak, large evening peak
    Archetype {
        base: 0.15,
        peaks: [(0.5, 15.0), (1.0, 38.0)],
        weekend: 1.15,
    },
    // at home: broad midday use and an early evening peak
    Archetype {
        base: 0.25,
        peaks: [(0.6, 26.0), (0.7, 37.0)],
        weekend: 1.0,
    },
    // late: small late-morning peak, large late-evening peak
    Archetype {
        base: 0.2,
        peaks: [(0.3, 19.0), (1.1, 44.0)],
        weekend: 1.1,
    },
];

const PEAK_SHARPNESS: f64 = 8.0;
const NOISE_STD: f64 = 0.1;
const EVENT_RATE: f64 = 0.01;
// event sizes are uniform on [0.5, 1.5] kWh at noise level 1
const EVENT_MEAN: f64 = 1.0;
const SCALE_SPREAD: f64 = 0.15;

fn bump(slot: f64, centre: f64) -> f64 {
    (PEAK_SHARPNESS * ((TAU * (slot - centre) / SLOTS_PER_DAY as f64).cos() - 1.0)).exp()
}

/// Noise-free consumption of a unit-scale household of `archetype` at
/// `slot` on a weekday.
pub fn archetype_curve(archetype: usize, slot: usize) -> f64 {
    let a = &SHAPES[archetype];
    let t = (slot % SLOTS_PER_DAY) as f64;
    a.base
        + a.peaks
            .iter()
            .map(|&(amp, c)| amp * bump(t, c))
            .sum::<f64>()
}

fn weekly_factor(archetype: usize, day: usize) -> f64 {
    if day % 7 >= 5 {
        SHAPES[archetype].weekend
    } else {
        1.0
    }
}

/// Population mean of the daily-average curve for `archetype` over whole
/// weeks, including the expected contribution of peak events.
pub fn expected_daily_curve(archetype: usize, noise_level: f64) -> Vec<f64> {
    let week = (5.0 + 2.0 * SHAPES[archetype].weekend) / 7.0;
    let events = EVENT_RATE * noise_level * EVENT_MEAN * noise_level;
    (0..SLOTS_PER_DAY)
        .map(|s| week * archetype_curve(archetype, s) + events)
        .collect()
}

/// Default generator with `noise_level` 1.
pub fn gen_synthetic_load(households: usize, days: usize, seed: u64) -> Result<Vec<LoadProfile>> {
    gen_synthetic_load_with(&SynthConfig {
        households,
        days,
        seed,
        ..Default::default()
    })
}

pub fn gen_synthetic_load_with(cfg: &SynthConfig) -> Result<Vec<LoadProfile>> {
    if cfg.households == 0 || cfg.days == 0 {
        return Err(Error::invalid("need at least one household and one day"));
    }
    if !(cfg.noise_level >= 0.0) || !cfg.noise_level.is_finite() {
        return Err(Error::invalid(format!(
            "noise level must be finite and >= 0, got {}",
            cfg.noise_level
        )));
    }
    let total: f64 = cfg.archetype_weights.iter().sum();
    if cfg.archetype_weights.iter().any(|w| !(*w >= 0.0)) || !(total > 0.0) {
        return Err(Error::invalid(
            "archetype weights must be non-negative with a positive sum",
        ));
    }
    let mut labels = stream_rng(cfg.seed, Purpose::Data, 0);
    (0..cfg.households)
        .map(|h| {
            let u: f64 = labels.random::<f64>() * total;
            let mut archetype = ARCHETYPES - 1;
            let mut acc = 0.0;
            for (k, w) in cfg.archetype_weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    archetype = k;
                    break;
                }
            }
            let mut rng = stream_rng(cfg.seed, Purpose::Data, h as u64 + 1);
            let scale = 1.0 + rng.random_range(-SCALE_SPREAD..=SCALE_SPREAD);
            let series = (0..cfg.days * SLOTS_PER_DAY)
                .map(|t| {
                    let clean = scale
                        * weekly_factor(archetype, t / SLOTS_PER_DAY)
                        * archetype_curve(archetype, t);
                    if cfg.noise_level == 0.0 {
                        return clean;
                    }
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let mut v = clean * (1.0 + cfg.noise_level * NOISE_STD * z);
                    if rng.random::<f64>() < EVENT_RATE * cfg.noise_level {
                        v += cfg.noise_level * rng.random_range(0.5..=1.5);
                    }
                    v.max(0.0)
                })
                .collect();
            Ok(LoadProfile {
                household: h,
                archetype,
                series,
            })
        })
        .collect()
}
