//! Synthetic kinematic procedures.
//!
//! Each sequence walks a Markov chain over classes (uniform transitions, no
//! self-loops). A segment of class `c` lasts a clipped-normal number of
//! frames around the class mean. While it lasts, the active hand's sensors
//! oscillate along the class axis at the class frequency and yaw at the class
//! angular rate; the other hand moves at `passive_gain` of that. Slow hand
//! drift and white noise are added on top.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{wrap_degrees, ChannelLayout, SensorSequence, STOPBAND_HZ};

/// Rate at which class mean durations are expressed.
pub const DURATION_RATE_HZ: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveHand {
    Left,
    Right,
    Both,
}

/// Generative description of one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    /// Mean segment length in frames at 30 Hz.
    pub mean_duration: f64,
    pub freq_hz: f64,
    pub amplitude_mm: f64,
    /// Direction of the oscillation; normalised on use.
    pub axis: [f64; 3],
    /// Yaw rate of the active hand's sensors.
    pub angular_rate_deg_s: f64,
    pub hand: ActiveHand,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Class 0 is the background class.
    pub classes: Vec<ClassSpec>,
    /// Sensor count; the first half sits on the left hand.
    pub sensors: usize,
    pub noise_std: f64,
    /// Amplitude of the slow per-hand drift.
    pub drift_mm: f64,
    /// Motion of the non-active hand relative to the active one.
    pub passive_gain: f64,
    /// Relative per-sequence spread of amplitudes and frequencies.
    pub jitter: f64,
    /// Expected number of motion pauses per second. During a pause the
    /// class motion stops while drift and noise continue.
    #[serde(default)]
    pub pause_rate_hz: f64,
    /// Range of pause lengths in frames at 30 Hz.
    #[serde(default = "default_pause_frames")]
    pub pause_frames: [usize; 2],
    pub sequences: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub rate_hz: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// A `c`-class spec with procedurally assigned, well-separated signatures.
    pub fn with_classes(c: usize, seed: u64) -> Self {
        let axes = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let classes = (0..c)
            .map(|k| {
                if k == 0 {
                    return ClassSpec {
                        name: "background".into(),
                        mean_duration: 150.0,
                        freq_hz: 0.5,
                        amplitude_mm: 3.0,
                        axis: axes[0],
                        angular_rate_deg_s: 0.0,
                        hand: ActiveHand::Both,
                    };
                }
                let j = k - 1;
                ClassSpec {
                    name: format!("g{k}"),
                    mean_duration: 180.0 + 30.0 * (j % 3) as f64,
                    freq_hz: 1.0 + (1.7 * j as f64) % 9.0,
                    amplitude_mm: 20.0 - 2.0 * (j % 4) as f64,
                    axis: axes[j % 3],
                    angular_rate_deg_s: if k % 2 == 0 { -30.0 } else { 20.0 } * (1 + j % 2) as f64,
                    hand: if k % 2 == 1 { ActiveHand::Right } else { ActiveHand::Left },
                }
            })
            .collect();
        SynthSpec {
            classes,
            sensors: 6,
            noise_std: 0.5,
            drift_mm: 10.0,
            passive_gain: 0.2,
            jitter: 0.1,
            pause_rate_hz: 0.0,
            pause_frames: default_pause_frames(),
            sequences: 10,
            t_min: 540,
            t_max: 660,
            rate_hz: 30.0,
            seed,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn layout(&self) -> ChannelLayout {
        ChannelLayout::OpenSurgery { sensors: self.sensors }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::invalid("synthetic spec needs at least one class"));
        }
        if self.sensors < 2 || !self.sensors.is_multiple_of(2) {
            return Err(Error::invalid("synthetic spec needs an even number of sensors"));
        }
        if !(self.rate_hz > 0.0) || self.t_min == 0 || self.t_min > self.t_max {
            return Err(Error::invalid("synthetic spec needs a positive rate and 0 < t_min <= t_max"));
        }
        if self.pause_rate_hz < 0.0 || self.pause_frames[0] == 0 || self.pause_frames[0] > self.pause_frames[1] {
            return Err(Error::invalid("pauses need a non-negative rate and 0 < min <= max length"));
        }
        if self.noise_std < 0.0 || self.drift_mm < 0.0 || !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::invalid("noise, drift and jitter must be non-negative, jitter below 1"));
        }
        for c in &self.classes {
            if !(c.mean_duration > 0.0) {
                return Err(Error::invalid(format!("class {} needs a positive mean duration", c.name)));
            }
            if !(0.0..STOPBAND_HZ).contains(&(c.freq_hz * (1.0 + self.jitter))) {
                return Err(Error::invalid(format!("class {} frequency must stay below {STOPBAND_HZ} Hz", c.name)));
            }
            if c.axis.iter().map(|a| a * a).sum::<f64>() == 0.0 {
                return Err(Error::invalid(format!("class {} has a zero axis", c.name)));
            }
        }
        Ok(())
    }
}

fn default_pause_frames() -> [usize; 2] {
    [10, 25]
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec::with_classes(3, 0)
    }
}

/// Class segments `(class, length)` covering exactly `len` frames.
fn segments(spec: &SynthSpec, len: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let c = spec.num_classes();
    let scale = spec.rate_hz / DURATION_RATE_HZ;
    let mut out = Vec::new();
    let mut class = rng.random_range(0..c);
    let mut total = 0;
    while total < len {
        let mean = spec.classes[class].mean_duration * scale;
        let d = Normal::new(mean, 0.25 * mean).expect("positive std").sample(rng);
        let d = (d.clamp(0.5 * mean, 1.5 * mean).round() as usize).clamp(1, len - total);
        out.push((class, d));
        total += d;
        if c > 1 {
            let step = rng.random_range(1..c);
            class = (class + step) % c;
        }
    }
    out
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.map(|a| a / n)
}

/// Generates sequence `index` of `spec`. Each index has its own random
/// stream, so a sequence does not depend on how many are generated.
pub fn synth_sequence(spec: &SynthSpec, index: usize) -> Result<SensorSequence> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let len = rng.random_range(spec.t_min..=spec.t_max);
    let segs = segments(spec, len, &mut rng);

    let jitter = |rng: &mut ChaCha8Rng| 1.0 + spec.jitter * rng.random_range(-1.0..=1.0);
    let amp_scale: Vec<f64> = spec.classes.iter().map(|_| jitter(&mut rng)).collect();
    let freq_scale: Vec<f64> = spec.classes.iter().map(|_| jitter(&mut rng)).collect();

    let s = spec.sensors;
    let half = s / 2;
    // Hands sit on either side of y = 0, the left one at positive y.
    let mut base = vec![[0.0; 3]; s];
    let mut base_euler = vec![[0.0; 3]; s];
    for (k, (b, e)) in base.iter_mut().zip(&mut base_euler).enumerate() {
        let side = if k < half { 1.0 } else { -1.0 };
        let j = (k % half) as f64;
        *b = [
            20.0 * j + rng.random_range(-10.0..10.0),
            side * (150.0 + 10.0 * j) + rng.random_range(-10.0..10.0),
            -5.0 * j + rng.random_range(-10.0..10.0),
        ];
        *e = [
            rng.random_range(-40.0..40.0),
            rng.random_range(-30.0..30.0),
            rng.random_range(-40.0..40.0),
        ];
    }
    let drift: Vec<[(f64, f64); 3]> = (0..2)
        .map(|_| [(); 3].map(|_| (rng.random_range(0.02..0.1), rng.random_range(0.0..std::f64::consts::TAU))))
        .collect();

    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("finite std");
    let draw = |rng: &mut ChaCha8Rng| if spec.noise_std > 0.0 { noise.sample(rng) } else { 0.0 };

    let layout = spec.layout();
    let mut data = Vec::with_capacity(len * layout.width());
    let mut labels = Vec::with_capacity(len);
    let mut phase = 0.0f64;
    let mut yaw = [0.0f64; 2];
    let dt = 1.0 / spec.rate_hz;
    let scale = spec.rate_hz / DURATION_RATE_HZ;
    let pause_len = [0, 1].map(|i| ((spec.pause_frames[i] as f64 * scale).round() as usize).max(1));
    let mut paused = 0usize;
    let mut t = 0usize;
    for &(class, d) in &segs {
        let cs = &spec.classes[class];
        let axis = unit(cs.axis);
        let gain = |hand: usize| match (cs.hand, hand) {
            (ActiveHand::Both, _) | (ActiveHand::Left, 0) | (ActiveHand::Right, 1) => 1.0,
            _ => spec.passive_gain,
        };
        let amp = cs.amplitude_mm * amp_scale[class];
        let freq = cs.freq_hz * freq_scale[class];
        for _ in 0..d {
            if paused > 0 {
                paused -= 1;
            } else if spec.pause_rate_hz > 0.0 && rng.random::<f64>() < spec.pause_rate_hz * dt {
                paused = rng.random_range(pause_len[0]..=pause_len[1]);
            }
            let moving = if paused > 0 { 0.0 } else { 1.0 };
            let time = t as f64 * dt;
            let wave = moving * amp * phase.sin();
            for k in 0..s {
                let hand = usize::from(k >= half);
                let g = gain(hand);
                for a in 0..3 {
                    let (fd, pd) = drift[hand][a];
                    let drift = spec.drift_mm * (std::f64::consts::TAU * fd * time + pd).sin();
                    data.push(base[k][a] + drift + g * wave * axis[a] + draw(&mut rng));
                }
                let e = base_euler[k];
                data.push(wrap_degrees(e[0] + yaw[hand] + draw(&mut rng)));
                data.push(e[1] + draw(&mut rng));
                data.push(wrap_degrees(e[2] + draw(&mut rng)));
            }
            labels.push(class);
            phase = (phase + std::f64::consts::TAU * freq * dt) % std::f64::consts::TAU;
            for (h, y) in yaw.iter_mut().enumerate() {
                *y = wrap_degrees(*y + moving * gain(h) * cs.angular_rate_deg_s * dt);
            }
            t += 1;
        }
    }
    SensorSequence::new(spec.rate_hz, layout, data, labels)
}

pub fn synth_generate(spec: &SynthSpec) -> Result<Vec<SensorSequence>> {
    (0..spec.sequences).map(|i| synth_sequence(spec, i)).collect()
}
