//! Physical signal model for bearing fault vibrations.
//!
//! A localized fault produces one impact per ball pass. Each impact excites a
//! structural resonance that rings down exponentially, so the sensor records
//! the impulse train convolved with a decaying cosine plus measurement noise.
//! The same model generates "vibration concepts": families of signals that
//! share a modulation frequency and differ in everything else.

use std::f64::consts::PI;

use rand::{Rng as _, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Kinematic parameters of a rolling element bearing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BearingGeometry {
    pub ball_count: u32,
    /// Ball diameter in mm.
    pub ball_diameter: f64,
    /// Pitch diameter in mm.
    pub pitch_diameter: f64,
    /// Contact angle in radians.
    pub contact_angle: f64,
}

impl BearingGeometry {
    pub fn new(
        ball_count: u32,
        ball_diameter: f64,
        pitch_diameter: f64,
        contact_angle: f64,
    ) -> Result<Self> {
        let g = Self {
            ball_count,
            ball_diameter,
            pitch_diameter,
            contact_angle,
        };
        g.validate()?;
        Ok(g)
    }

    /// SKF 6205-2RS JEM deep groove bearing used at the drive end of the
    /// Case Western Reserve test rig.
    pub fn cwru_drive_end() -> Self {
        Self {
            ball_count: 9,
            ball_diameter: 7.94,
            pitch_diameter: 39.04,
            contact_angle: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ball_count == 0 {
            return Err(Error::domain("bearing needs at least one ball"));
        }
        if !(self.ball_diameter > 0.0 && self.ball_diameter < self.pitch_diameter)
            || !self.pitch_diameter.is_finite()
        {
            return Err(Error::domain(format!(
                "ball diameter {} must lie in (0, pitch diameter {})",
                self.ball_diameter, self.pitch_diameter
            )));
        }
        if !(0.0..PI / 2.0).contains(&self.contact_angle) {
            return Err(Error::domain(format!(
                "contact angle {} rad outside [0, pi/2)",
                self.contact_angle
            )));
        }
        Ok(())
    }

    fn diameter_ratio(&self) -> f64 {
        self.ball_diameter / self.pitch_diameter * self.contact_angle.cos()
    }
}

fn check_rotation(f_r: f64) -> Result<()> {
    if f_r >= 0.0 && f_r.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("rotation frequency {f_r} Hz must be finite and >= 0")))
    }
}

/// Ball passing frequency of the outer ring, in Hz, for shaft frequency `f_r`.
pub fn bpfo(geometry: &BearingGeometry, f_r: f64) -> Result<f64> {
    geometry.validate()?;
    check_rotation(f_r)?;
    Ok(geometry.ball_count as f64 / 2.0 * f_r * (1.0 - geometry.diameter_ratio()))
}

/// Ball passing frequency of the inner ring, in Hz, for shaft frequency `f_r`.
pub fn bpfi(geometry: &BearingGeometry, f_r: f64) -> Result<f64> {
    geometry.validate()?;
    check_rotation(f_r)?;
    Ok(geometry.ball_count as f64 / 2.0 * f_r * (1.0 + geometry.diameter_ratio()))
}

/// A uniformly sampled waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("signal must contain at least one sample"));
        }
        check_sample_rate(sample_rate)?;
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

fn check_sample_rate(sample_rate: f64) -> Result<()> {
    if sample_rate > 0.0 && sample_rate.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("sample rate {sample_rate} must be positive")))
    }
}

fn check_length(length: usize) -> Result<()> {
    if length == 0 {
        Err(Error::domain("signal length must be at least one sample"))
    } else {
        Ok(())
    }
}

/// Periodic impulse train with impacts at `k / f_char - t0` seconds, each
/// placed on the nearest sample.
pub fn impulse_train(
    f_char: f64,
    amplitude: f64,
    t0: f64,
    length: usize,
    sample_rate: f64,
) -> Result<Signal> {
    if !(f_char > 0.0 && f_char.is_finite()) {
        return Err(Error::domain(format!("characteristic frequency {f_char} must be positive")));
    }
    if !t0.is_finite() {
        return Err(Error::domain("time offset must be finite"));
    }
    check_length(length)?;
    check_sample_rate(sample_rate)?;

    let mut samples = vec![0.0; length];
    for index in impulse_indices(f_char, t0, length, sample_rate) {
        samples[index] = amplitude;
    }
    Signal::new(samples, sample_rate)
}

fn impulse_indices(f_char: f64, t0: f64, length: usize, sample_rate: f64) -> Vec<usize> {
    // First k whose impulse time is at or just before the window start.
    let mut k = (t0 * f_char).floor() - 1.0;
    let mut out = Vec::new();
    loop {
        let position = ((k / f_char - t0) * sample_rate).round();
        if position >= length as f64 {
            break;
        }
        if position >= 0.0 {
            let index = position as usize;
            if out.last() != Some(&index) {
                out.push(index);
            }
        }
        k += 1.0;
    }
    out
}

/// Exponentially decaying resonance `exp(-t / tau) cos(2 pi f_res t)`.
pub fn impulse_response(f_res: f64, tau: f64, length: usize, sample_rate: f64) -> Result<Signal> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::domain(format!("decay time {tau} must be positive")));
    }
    if !(f_res.is_finite() && f_res >= 0.0) {
        return Err(Error::domain(format!("resonance frequency {f_res} must be >= 0")));
    }
    check_length(length)?;
    check_sample_rate(sample_rate)?;
    let samples = (0..length)
        .map(|k| {
            let t = k as f64 / sample_rate;
            (-t / tau).exp() * (2.0 * PI * f_res * t).cos()
        })
        .collect();
    Signal::new(samples, sample_rate)
}

/// Inputs of one simulated concept example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConceptParams {
    pub f_char: f64,
    pub f_res: f64,
    pub amplitude: f64,
    pub tau: f64,
    pub sigma: f64,
    pub t0: f64,
}

impl ConceptParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.f_char > 0.0
            && self.f_res >= 0.0
            && self.tau > 0.0
            && self.sigma >= 0.0
            && self.amplitude >= 0.0
            && self.t0.is_finite()
            && [self.f_char, self.f_res, self.tau, self.sigma, self.amplitude]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid concept parameters {self:?}")))
        }
    }

    pub fn period(&self) -> f64 {
        1.0 / self.f_char
    }
}

/// Causal convolution of `input` with `kernel`, truncated to `input.len()`.
///
/// Zero input samples are skipped, which makes sparse impulse trains cheap.
pub fn convolve_truncated(input: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = input.len();
    let mut out = vec![0.0; n];
    for (m, &value) in input.iter().enumerate() {
        if value == 0.0 {
            continue;
        }
        let span = (n - m).min(kernel.len());
        for (o, &h) in out[m..m + span].iter_mut().zip(&kernel[..span]) {
            *o += value * h;
        }
    }
    out
}

/// Simulates `h * i + noise` for one parameter draw. Noise is drawn from
/// `seed`; with `sigma == 0` no noise is added at all.
pub fn simulate_concept(
    params: &ConceptParams,
    length: usize,
    sample_rate: f64,
    seed: u64,
) -> Result<Signal> {
    params.validate()?;
    // unit impacts, scaled afterwards: the output is then linear in the
    // amplitude to rounding on every sample, cancellations included
    let train = impulse_train(params.f_char, 1.0, params.t0, length, sample_rate)?;
    let response = impulse_response(params.f_res, params.tau, length, sample_rate)?;
    let mut samples = convolve_truncated(&train.samples, &response.samples);
    if params.amplitude != 1.0 {
        for s in &mut samples {
            *s *= params.amplitude;
        }
    }
    if params.sigma > 0.0 {
        let normal = Normal::new(0.0, params.sigma)
            .map_err(|e| Error::domain(format!("noise distribution: {e}")))?;
        let mut rng = rng_from_seed(seed);
        for s in &mut samples {
            *s += normal.sample(&mut rng);
        }
    }
    Signal::new(samples, sample_rate)
}

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    pub fn point(v: f64) -> Self {
        Interval(v, v)
    }

    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    pub fn width(&self) -> f64 {
        self.1 - self.0
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.0 && v <= self.1
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.0 + (self.1 - self.0) * u
    }

    fn check(&self, name: &str, positive: bool) -> Result<()> {
        if !(self.0.is_finite() && self.1.is_finite() && self.0 <= self.1) {
            return Err(Error::config(format!(
                "{name} range [{}, {}] is empty or not finite",
                self.0, self.1
            )));
        }
        if positive && self.0 <= 0.0 {
            return Err(Error::config(format!("{name} range must be strictly positive")));
        }
        if !positive && self.0 < 0.0 {
            return Err(Error::config(format!("{name} range must be non-negative")));
        }
        Ok(())
    }
}

/// Sampling distribution over concept examples.
///
/// `target_f_char = None` describes a random concept: positives and negatives
/// then both draw their modulation frequency from `f_char_interval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSpec {
    pub target_f_char: Option<f64>,
    pub f_char_interval: Interval,
    /// Relative half-width of the band around the target that negatives avoid.
    pub exclusion_band: f64,
    pub f_res_range: Interval,
    pub a_range: Interval,
    pub tau_range: Interval,
    pub sigma_range: Interval,
    pub t0_range: Interval,
    pub sample_rate: f64,
    pub length: usize,
}

impl ConceptSpec {
    /// Default concept around `target` Hz: negatives in `[0.5, 1.5] * target`
    /// outside a 5% band, resonances in `[fs/8, fs/4]`, decay of 2 to 10
    /// impulse periods and offsets within one period.
    pub fn for_target(target: f64, sample_rate: f64, length: usize) -> Self {
        let period = 1.0 / target;
        Self {
            target_f_char: Some(target),
            f_char_interval: Interval(0.5 * target, 1.5 * target),
            exclusion_band: 0.05,
            f_res_range: Interval(sample_rate / 8.0, sample_rate / 4.0),
            a_range: Interval(0.5, 2.0),
            tau_range: Interval(2.0 * period, 10.0 * period),
            sigma_range: Interval(0.0, 0.2),
            t0_range: Interval(0.0, period),
            sample_rate,
            length,
        }
    }

    /// Same ranges, but the modulation frequency is random on both sides.
    pub fn random_counterpart(&self) -> Self {
        Self {
            target_f_char: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_sample_rate(self.sample_rate)?;
        check_length(self.length)?;
        if let Some(t) = self.target_f_char {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config(format!("target frequency {t} must be positive")));
            }
        }
        self.f_char_interval.check("f_char", true)?;
        self.f_res_range.check("f_res", false)?;
        self.a_range.check("amplitude", false)?;
        self.tau_range.check("tau", true)?;
        self.sigma_range.check("sigma", false)?;
        if !(self.t0_range.0.is_finite() && self.t0_range.1.is_finite())
            || self.t0_range.0 > self.t0_range.1
        {
            return Err(Error::config("t0 range is empty"));
        }
        if !(self.exclusion_band >= 0.0 && self.exclusion_band.is_finite()) {
            return Err(Error::config("exclusion band must be >= 0"));
        }
        if self.f_res_range.hi() >= self.sample_rate / 2.0 {
            return Err(Error::config(format!(
                "resonance upper bound {} Hz must stay below Nyquist ({} Hz)",
                self.f_res_range.hi(),
                self.sample_rate / 2.0
            )));
        }
        Ok(())
    }

    /// The portions of `f_char_interval` that negatives may use.
    pub fn negative_pieces(&self) -> Vec<Interval> {
        let iv = self.f_char_interval;
        let Some(target) = self.target_f_char else {
            return vec![iv];
        };
        let band = Interval(
            target * (1.0 - self.exclusion_band),
            target * (1.0 + self.exclusion_band),
        );
        let mut pieces = Vec::new();
        if iv.lo() < band.lo() {
            pieces.push(Interval(iv.lo(), iv.hi().min(band.lo())));
        }
        if iv.hi() > band.hi() {
            pieces.push(Interval(iv.lo().max(band.hi()), iv.hi()));
        }
        pieces.retain(|p| p.width() > 0.0);
        pieces
    }

    pub(crate) fn draw_params<R: RngCore + ?Sized>(&self, f_char: f64, rng: &mut R) -> ConceptParams {
        ConceptParams {
            f_char,
            f_res: self.f_res_range.sample(rng),
            amplitude: self.a_range.sample(rng),
            tau: self.tau_range.sample(rng),
            sigma: self.sigma_range.sample(rng),
            t0: self.t0_range.sample(rng),
        }
    }
}

/// Draws uniformly from the union of disjoint `pieces`.
fn sample_pieces<R: RngCore + ?Sized>(pieces: &[Interval], rng: &mut R) -> f64 {
    let total: f64 = pieces.iter().map(Interval::width).sum();
    let mut u = rng.random::<f64>() * total;
    for p in pieces {
        if u <= p.width() {
            return p.lo() + u;
        }
        u -= p.width();
    }
    pieces.last().map_or(f64::NAN, Interval::hi)
}

/// Positive and negative example signals for one concept.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptSet {
    pub positives: Vec<Signal>,
    pub negatives: Vec<Signal>,
    pub positive_params: Vec<ConceptParams>,
    pub negative_params: Vec<ConceptParams>,
}

/// Samples `count` positives with the target modulation frequency and
/// `count` negatives whose frequency avoids the exclusion band. All other
/// parameters come from the same ranges on both sides.
pub fn sample_concept_set(spec: &ConceptSpec, count: usize, seed: u64) -> Result<ConceptSet> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::config("concept set needs at least one example per side"));
    }
    let negative_pieces = spec.negative_pieces();
    if negative_pieces.is_empty() {
        return Err(Error::config(format!(
            "no feasible negative frequency in {:?} after excluding +-{} around {:?}",
            spec.f_char_interval, spec.exclusion_band, spec.target_f_char
        )));
    }
    let full = [spec.f_char_interval];
    let mut rng = rng_from_seed(seed);

    let mut draw_side = |pieces: &[Interval], fixed: Option<f64>| -> Result<(Vec<Signal>, Vec<ConceptParams>)> {
        let mut signals = Vec::with_capacity(count);
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let f_char = fixed.unwrap_or_else(|| sample_pieces(pieces, &mut rng));
            let p = spec.draw_params(f_char, &mut rng);
            let noise_seed = rng.next_u64();
            signals.push(simulate_concept(&p, spec.length, spec.sample_rate, noise_seed)?);
            params.push(p);
        }
        Ok((signals, params))
    };

    let (positives, positive_params) = draw_side(&full, spec.target_f_char)?;
    let (negatives, negative_params) = draw_side(&negative_pieces, None)?;
    Ok(ConceptSet {
        positives,
        negatives,
        positive_params,
        negative_params,
    })
}
