//! Shoebox image-source room impulse responses.
//!
//! Walls share one frequency-independent pressure reflection coefficient,
//! obtained from the requested RT60 through Eyring's formula:
//!
//! ```text
//! beta = exp(-12 ln(10) V / (c S T60))
//! ```
//!
//! Every image contributes `beta^reflections / (4 pi d)` at the nearest
//! integer sample of its propagation delay. Because coincident images add
//! coherently on the integer grid, the response decays slower than the
//! diffuse-field prediction; the coefficient is therefore refined by
//! bisection until the Schroeder decay of the generated response (line fit
//! over -5..-25 dB) hits the requested RT60.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RoomError;
use crate::dsp::TimeSignal;

pub const SPEED_OF_SOUND: f64 = 343.0;

/// Extra samples appended after `rt60 * fs` when no explicit length is set.
pub const RIR_TAIL_SAMPLES: usize = 1024;
/// High-pass corner applied to room responses used in simulation.
pub const RIR_HIGHPASS_HZ: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }

    fn coords(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// Lx, Ly, Lz in meters.
    pub dimensions: [f64; 3],
    pub rt60: f64,
    pub speed_of_sound: f64,
    /// Explicit response length in samples; `None` uses `rt60 * fs + 1024`.
    pub rir_length: Option<usize>,
}

impl RoomSpec {
    pub fn new(dimensions: [f64; 3], rt60: f64) -> Self {
        Self {
            dimensions,
            rt60,
            speed_of_sound: SPEED_OF_SOUND,
            rir_length: None,
        }
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [a, b, c] = self.dimensions;
        2.0 * (a * b + a * c + b * c)
    }

    pub fn validate(&self) -> Result<(), RoomError> {
        if self.dimensions.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(RoomError::Geometry(format!(
                "room dimensions must be positive, got {:?}",
                self.dimensions
            )));
        }
        if !(self.rt60 >= 0.0 && self.rt60.is_finite()) {
            return Err(RoomError::Model(format!("rt60 must be >= 0, got {}", self.rt60)));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(RoomError::Model("speed of sound must be positive".into()));
        }
        Ok(())
    }

    /// Diffuse-field (Eyring) wall pressure reflection coefficient; 0 for an
    /// anechoic room. [`generate_rir`] refines it against the actual decay.
    pub fn reflection_coefficient(&self) -> Result<f64, RoomError> {
        self.validate()?;
        if self.rt60 == 0.0 {
            return Ok(0.0);
        }
        let exponent = -12.0 * std::f64::consts::LN_10 * self.volume()
            / (self.speed_of_sound * self.surface() * self.rt60);
        let beta = exponent.exp();
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(RoomError::Model(format!(
                "rt60 {} s needs reflection coefficient {beta} outside (0, 1] for room {:?}",
                self.rt60, self.dimensions
            )));
        }
        Ok(beta)
    }

    pub fn contains(&self, p: &Point3, clearance: f64) -> bool {
        p.coords()
            .iter()
            .zip(self.dimensions)
            .all(|(&c, d)| c >= clearance && c <= d - clearance)
    }
}

/// Direct-path propagation delay in (fractional) samples.
pub fn direct_path_delay(room: &RoomSpec, source: &Point3, mic: &Point3, fs: u32) -> f64 {
    source.distance(mic) / room.speed_of_sound * f64::from(fs)
}

pub fn generate_rir(
    room: &RoomSpec,
    source: &Point3,
    mic: &Point3,
    fs: u32,
) -> Result<TimeSignal, RoomError> {
    let eyring = room.reflection_coefficient()?;
    for (name, p) in [("source", source), ("microphone", mic)] {
        if !room.contains(p, 0.0) || on_wall(room, p) {
            return Err(RoomError::Geometry(format!(
                "{name} {p:?} is not strictly inside room {:?}",
                room.dimensions
            )));
        }
    }
    if source.distance(mic) == 0.0 {
        return Err(RoomError::Geometry("source and microphone coincide".into()));
    }

    let fsf = f64::from(fs);
    let direct = direct_path_delay(room, source, mic, fs).round() as usize;
    let len = room
        .rir_length
        .unwrap_or_else(|| (room.rt60 * fsf).ceil() as usize + RIR_TAIL_SAMPLES)
        .max(direct + 1);

    let max_dist = len as f64 / fsf * room.speed_of_sound;
    let s = source.coords();
    let m = mic.coords();
    // Per axis: (squared offset, reflection count) for every image coordinate
    // within range.
    let axes: Vec<Vec<(f64, u32)>> = (0..3)
        .map(|a| {
            let l = room.dimensions[a];
            let n_max = (max_dist / (2.0 * l)).ceil() as i64 + 1;
            let mut v = Vec::new();
            for n in -n_max..=n_max {
                for q in 0..=1i64 {
                    let pos = (1 - 2 * q) as f64 * s[a] + 2.0 * n as f64 * l;
                    let off = pos - m[a];
                    if off.abs() <= max_dist {
                        let refl = ((n - q).abs() + n.abs()) as u32;
                        if eyring > 0.0 || refl == 0 {
                            v.push((off * off, refl));
                        }
                    }
                }
            }
            v
        })
        .collect();

    let max_refl = axes
        .iter()
        .map(|v| v.iter().map(|e| e.1).max().unwrap_or(0))
        .sum::<u32>() as usize;
    let orders = max_refl + 1;
    let max_d2 = max_dist * max_dist;
    let scale = fsf / room.speed_of_sound;
    let norm = 1.0 / (4.0 * std::f64::consts::PI);

    // amplitudes[tap * orders + k]: summed 1/(4 pi d) of the images with k
    // wall reflections arriving at `tap`
    let mut amplitudes = vec![0.0; len * orders];
    for &(dx2, rx) in &axes[0] {
        if dx2 > max_d2 {
            continue;
        }
        for &(dy2, ry) in &axes[1] {
            let dxy = dx2 + dy2;
            if dxy > max_d2 {
                continue;
            }
            for &(dz2, rz) in &axes[2] {
                let d2 = dxy + dz2;
                if d2 > max_d2 {
                    continue;
                }
                let d = d2.sqrt();
                let tap = (d * scale).round() as usize;
                if tap < len {
                    amplitudes[tap * orders + (rx + ry + rz) as usize] += norm / d;
                }
            }
        }
    }

    let beta = if eyring > 0.0 {
        calibrate_reflection(&amplitudes, orders, fsf, room.rt60, eyring).unwrap_or(eyring)
    } else {
        0.0
    };
    let h = evaluate_response(&amplitudes, orders, beta);
    Ok(TimeSignal::new(h, fs).expect("finite image contributions"))
}

fn evaluate_response(amplitudes: &[f64], orders: usize, beta: f64) -> Vec<f64> {
    amplitudes
        .chunks_exact(orders)
        .map(|a| a.iter().rev().fold(0.0, |acc, &c| acc * beta + c))
        .collect()
}

/// Bisects the wall reflection coefficient until the Schroeder decay of the
/// generated response matches `rt60`. Images landing on the same tap add
/// coherently, which stretches the decay well beyond the diffuse-field
/// (Eyring) prediction, so the closed-form coefficient alone overshoots.
fn calibrate_reflection(
    amplitudes: &[f64],
    orders: usize,
    fs: f64,
    rt60: f64,
    eyring: f64,
) -> Option<f64> {
    let measure = |beta: f64| edc_rt60(&evaluate_response(amplitudes, orders, beta), fs, 20.0);
    // The estimate is monotone in beta only until the tail gets truncated by
    // the response length, so grow the upper bracket from the Eyring value
    // instead of starting near 1.
    let (mut lo, mut hi) = (1e-4_f64, eyring);
    let mut t_hi = measure(hi)?;
    while t_hi < rt60 {
        let next = 1.0 - 0.5 * (1.0 - hi);
        let t = measure(next)?;
        if t <= t_hi || next >= 1.0 - 1e-6 {
            return Some(hi);
        }
        lo = hi;
        hi = next;
        t_hi = t;
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        match measure(mid) {
            Some(t) if t > rt60 => hi = mid,
            _ => lo = mid,
        }
    }
    Some(0.5 * (lo + hi))
}

fn edc_rt60(x: &[f64], fs: f64, span_db: f64) -> Option<f64> {
    let total: f64 = x.iter().map(|v| v * v).sum();
    if total <= 0.0 {
        return None;
    }
    let mut acc = 0.0;
    let mut edc = vec![0.0; x.len()];
    for i in (0..x.len()).rev() {
        acc += x[i] * x[i];
        edc[i] = 10.0 * (acc / total).log10();
    }
    let (mut n, mut st, mut sd, mut stt, mut std_) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &db) in edc.iter().enumerate() {
        if db <= -5.0 && db >= -5.0 - span_db {
            let t = i as f64 / fs;
            n += 1.0;
            st += t;
            sd += db;
            stt += t * t;
            std_ += t * db;
        }
    }
    if n < 2.0 {
        return None;
    }
    let slope = (n * std_ - st * sd) / (n * stt - st * st);
    (slope < 0.0).then(|| -60.0 / slope)
}

fn on_wall(room: &RoomSpec, p: &Point3) -> bool {
    p.coords()
        .iter()
        .zip(room.dimensions)
        .any(|(&c, d)| c == 0.0 || c == d)
}

/// RT60 estimated from the Schroeder backward-integrated energy decay curve,
/// by a least-squares line through the `-5 dB .. -(5 + span) dB` range,
/// extrapolated to -60 dB.
pub fn schroeder_rt60(h: &TimeSignal, span_db: f64) -> Option<f64> {
    edc_rt60(h.samples(), f64::from(h.sample_rate()), span_db)
}

/// Sampling ranges for random rooms and source placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RirSamplingRanges {
    pub length_x: (f64, f64),
    pub length_y: (f64, f64),
    pub height: (f64, f64),
    pub rt60: (f64, f64),
    pub wall_clearance: f64,
    pub min_source_mic_distance: f64,
}

impl Default for RirSamplingRanges {
    fn default() -> Self {
        Self {
            length_x: (3.0, 10.0),
            length_y: (3.0, 10.0),
            height: (2.5, 4.0),
            rt60: (0.0, 0.6),
            wall_clearance: 0.2,
            min_source_mic_distance: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub room: RoomSpec,
    pub mic: Point3,
    pub loudspeaker: Point3,
    pub talker: Point3,
    pub noise: Point3,
}

/// Responses from the loudspeaker, the near-end talker and the noise source
/// to the single microphone.
#[derive(Debug, Clone, PartialEq)]
pub struct RirSet {
    pub h_loudspeaker: TimeSignal,
    pub h_nearend: TimeSignal,
    pub h_noise: TimeSignal,
    /// `None` for synthetic paths that do not come from a room.
    pub geometry: Option<Geometry>,
}

/// Second-order Butterworth high-pass, same length as the input.
///
/// With a frequency-independent positive reflection coefficient every image
/// adds with the same sign, so raw responses carry a large DC gain that no
/// transducer passes. In a closed loop that gain latches the system at DC.
pub fn highpass(h: &TimeSignal, cutoff_hz: f64) -> TimeSignal {
    let fs = f64::from(h.sample_rate());
    let w0 = 2.0 * std::f64::consts::PI * cutoff_hz / fs;
    let alpha = w0.sin() / std::f64::consts::SQRT_2;
    let cw = w0.cos();
    let a0 = 1.0 + alpha;
    let (b0, b1, b2) = ((1.0 + cw) / 2.0 / a0, -(1.0 + cw) / a0, (1.0 + cw) / 2.0 / a0);
    let (a1, a2) = (-2.0 * cw / a0, (1.0 - alpha) / a0);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    let out: Vec<f64> = h
        .samples()
        .iter()
        .map(|&x| {
            let y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
            (x2, x1, y2, y1) = (x1, x, y1, y);
            y
        })
        .collect();
    TimeSignal::new(out, h.sample_rate()).expect("finite filter output")
}

impl RirSet {
    /// Image-method responses for the three sources, high-passed at
    /// [`RIR_HIGHPASS_HZ`].
    pub fn from_geometry(geometry: Geometry, fs: u32) -> Result<Self, RoomError> {
        let room = &geometry.room;
        Ok(Self {
            h_loudspeaker: highpass(&generate_rir(room, &geometry.loudspeaker, &geometry.mic, fs)?, RIR_HIGHPASS_HZ),
            h_nearend: highpass(&generate_rir(room, &geometry.talker, &geometry.mic, fs)?, RIR_HIGHPASS_HZ),
            h_noise: highpass(&generate_rir(room, &geometry.noise, &geometry.mic, fs)?, RIR_HIGHPASS_HZ),
            geometry: Some(geometry),
        })
    }

    /// Scalar toy path: loudspeaker response `a * delta`, unit impulses for
    /// the talker and noise paths.
    pub fn scalar(a: f64, fs: u32) -> Self {
        Self {
            h_loudspeaker: TimeSignal::impulse(1, fs).scaled(a),
            h_nearend: TimeSignal::impulse(1, fs),
            h_noise: TimeSignal::impulse(1, fs),
            geometry: None,
        }
    }

    pub fn sample_rate(&self) -> u32 {
        self.h_loudspeaker.sample_rate()
    }
}

fn check_ranges(r: &RirSamplingRanges) -> Result<(), RoomError> {
    let ok_range = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
    if ![r.length_x, r.length_y, r.height, r.rt60].into_iter().all(ok_range) {
        return Err(RoomError::Unsatisfiable("empty or non-finite range".into()));
    }
    if r.rt60.0 < 0.0 {
        return Err(RoomError::Unsatisfiable("rt60 range must be non-negative".into()));
    }
    let min_side = r.length_x.0.min(r.length_y.0).min(r.height.0);
    if r.wall_clearance < 0.0 || min_side - 2.0 * r.wall_clearance <= 0.0 {
        return Err(RoomError::Unsatisfiable(format!(
            "wall clearance {} leaves no interior in a {min_side} m room",
            r.wall_clearance
        )));
    }
    let diag = ((r.length_x.0 - 2.0 * r.wall_clearance).powi(2)
        + (r.length_y.0 - 2.0 * r.wall_clearance).powi(2)
        + (r.height.0 - 2.0 * r.wall_clearance).powi(2))
    .sqrt();
    if r.min_source_mic_distance >= diag / 2.0 {
        return Err(RoomError::Unsatisfiable(format!(
            "source-mic separation {} cannot be guaranteed in the smallest room",
            r.min_source_mic_distance
        )));
    }
    Ok(())
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Draws a random room and source layout without computing responses.
pub fn sample_geometry<R: Rng + ?Sized>(
    rng: &mut R,
    ranges: &RirSamplingRanges,
) -> Result<Geometry, RoomError> {
    check_ranges(ranges)?;
    let room = RoomSpec::new(
        [
            uniform(rng, ranges.length_x),
            uniform(rng, ranges.length_y),
            uniform(rng, ranges.height),
        ],
        // 1 ms resolution; anything shorter is treated as anechoic
        (uniform(rng, ranges.rt60) * 1000.0).round() / 1000.0,
    );
    room.reflection_coefficient()?;
    let c = ranges.wall_clearance;
    let point = |rng: &mut R| {
        Point3::new(
            uniform(rng, (c, room.dimensions[0] - c)),
            uniform(rng, (c, room.dimensions[1] - c)),
            uniform(rng, (c, room.dimensions[2] - c)),
        )
    };
    let mic = point(rng);
    let source = |rng: &mut R| -> Result<Point3, RoomError> {
        for _ in 0..10_000 {
            let p = point(rng);
            if p.distance(&mic) >= ranges.min_source_mic_distance {
                return Ok(p);
            }
        }
        Err(RoomError::Unsatisfiable(
            "could not place a source far enough from the microphone".into(),
        ))
    };
    let loudspeaker = source(rng)?;
    let talker = source(rng)?;
    let noise = source(rng)?;
    Ok(Geometry {
        room,
        mic,
        loudspeaker,
        talker,
        noise,
    })
}

/// Random room, layout and the three microphone responses.
pub fn sample_rir_set<R: Rng + ?Sized>(
    rng: &mut R,
    ranges: &RirSamplingRanges,
    fs: u32,
) -> Result<RirSet, RoomError> {
    let geometry = sample_geometry(rng, ranges)?;
    RirSet::from_geometry(geometry, fs)
}
