//! Far-field mixture simulation.
//!
//! Mixtures are built in the STFT domain as `X_{f,t} = A_f S_{f,t} + B_{f,t}`
//! with `A_f` from [`mixing_matrix`]. Noise is white Gaussian in the time
//! domain, scaled so that its power matches the summed source-image power
//! at the requested SNR, and analyzed with the same STFT. The time-domain
//! mixture is the sum of the resynthesized images plus the noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::fft_convolve;
use crate::error::{invalid_config, invalid_input, Result};
use crate::geometry::{has_coincident_directions, mixing_matrix, ArrayGeometry, Direction, GeometryDocument, MixingSystem};
use crate::stft::{istft, stft, Spectrogram, StftConfig, TimeSignal};

/// Onset of the reverberant tail after the direct path, in seconds.
const TAIL_ONSET: f64 = 0.001;

/// Seeded exponential-decay room response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReverbSpec {
    /// Time for the envelope to decay by 60 dB, in seconds.
    pub t60: f64,
    /// Energy ratio of the direct path to the tail, in dB.
    #[serde(default)]
    pub direct_to_reverberant_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub directions: Vec<Direction>,
    /// One channel per source.
    pub sources: TimeSignal,
    /// `None` leaves the mixture noiseless.
    pub snr_db: Option<f64>,
    pub reverb: Option<ReverbSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub mixture: TimeSignal,
    pub mixture_spec: Spectrogram,
    /// Per-source images at every microphone.
    pub images: Vec<TimeSignal>,
    pub image_specs: Vec<Spectrogram>,
    pub noise: TimeSignal,
    pub mixing: MixingSystem,
    /// STFT of the dry source signals, one channel per source.
    pub source_spec: Spectrogram,
    /// Impulse responses `[source][mic]` when reverberation was requested.
    pub impulse_responses: Option<Vec<Vec<Vec<f64>>>>,
}

impl Scenario {
    fn validate(&self) -> Result<()> {
        let n = self.directions.len();
        let m = self.geometry.n_mics();
        if n == 0 {
            return invalid_config("scenario has no sources");
        }
        if n > m {
            return invalid_config(format!("{n} sources exceed {m} microphones"));
        }
        if self.sources.n_channels() != n {
            return invalid_config(format!("{} source signals for {n} directions", self.sources.n_channels()));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return invalid_config("SNR must be finite");
            }
        }
        if let Some(r) = self.reverb {
            if !(r.t60 > 0.0 && r.t60.is_finite() && r.direct_to_reverberant_db.is_finite()) {
                return invalid_config("reverberation needs a positive T60");
            }
        }
        if has_coincident_directions(&self.directions) {
            log::warn!("scenario has coincident source directions; the mixing matrix is rank deficient");
        }
        Ok(())
    }
}

/// Exponential-decay impulse response with a unit direct path at lag 0.
pub fn exponential_ir(spec: &ReverbSpec, sample_rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = (spec.t60 * sample_rate).ceil().max(2.0) as usize;
    let onset = ((TAIL_ONSET * sample_rate).round() as usize).clamp(1, len - 1);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let decay = 3.0 * std::f64::consts::LN_10 / (spec.t60 * sample_rate);
    let mut h = vec![0.0; len];
    h[0] = 1.0;
    for (k, v) in h.iter_mut().enumerate().skip(onset) {
        *v = normal.sample(rng) * (-decay * k as f64).exp();
    }
    let tail: f64 = h[onset..].iter().map(|v| v * v).sum();
    if tail > 0.0 {
        let want = 10f64.powf(-spec.direct_to_reverberant_db / 10.0);
        let g = (want / tail).sqrt();
        h[onset..].iter_mut().for_each(|v| *v *= g);
    }
    h
}

pub fn simulate_farfield(sc: &Scenario, cfg: &StftConfig) -> Result<Simulation> {
    sc.validate()?;
    let m = sc.geometry.n_mics();
    let n = sc.directions.len();
    let len = sc.sources.len();
    let fs = sc.sources.sample_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);

    let source_spec = stft(&sc.sources, cfg)?;
    let freqs = source_spec.frequencies();
    let mixing = mixing_matrix(&sc.geometry, &sc.directions, &freqs)?;

    // Per-source, per-mic excitation: the dry source or its reverberant copy.
    let impulse_responses = sc.reverb.map(|r| {
        (0..n).map(|_| (0..m).map(|_| exponential_ir(&r, fs, &mut rng)).collect::<Vec<_>>()).collect::<Vec<_>>()
    });
    let excitations: Vec<Spectrogram> = match &impulse_responses {
        None => vec![],
        Some(irs) => irs
            .par_iter()
            .enumerate()
            .map(|(src, per_mic)| {
                let chans = per_mic.iter().map(|h| fft_convolve(sc.sources.channel(src), h)).collect();
                stft(&TimeSignal::new(chans, fs)?, cfg)
            })
            .collect::<Result<Vec<_>>>()?,
    };

    let frames = source_spec.n_frames();
    let mut image_specs = Vec::with_capacity(n);
    for src in 0..n {
        let mut img = Spectrogram::zeros(m, frames, *cfg, fs);
        for f in 0..source_spec.n_freqs() {
            for mic in 0..m {
                let a = mixing.matrices[[f, mic, src]];
                for t in 0..frames {
                    let s = if excitations.is_empty() {
                        source_spec.data[[src, f, t]]
                    } else {
                        excitations[src].data[[mic, f, t]]
                    };
                    img.data[[mic, f, t]] = a * s;
                }
            }
        }
        image_specs.push(img);
    }
    let images = image_specs.iter().map(|s| istft(s, len)).collect::<Result<Vec<_>>>()?;

    let mut clean = vec![vec![0.0; len]; m];
    for img in &images {
        for (acc, ch) in clean.iter_mut().zip(&img.channels) {
            acc.iter_mut().zip(ch).for_each(|(a, v)| *a += v);
        }
    }
    let signal_power = clean.iter().flatten().map(|v| v * v).sum::<f64>() / (m * len) as f64;
    let noise_channels: Vec<Vec<f64>> = match sc.snr_db {
        None => vec![vec![0.0; len]; m],
        Some(snr) => {
            let sigma = (signal_power / 10f64.powf(snr / 10.0)).sqrt();
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            (0..m).map(|_| (0..len).map(|_| sigma * normal.sample(&mut rng)).collect()).collect()
        }
    };
    let noise = TimeSignal::new(noise_channels, fs)?;
    let mut mixture_spec = stft(&noise, cfg)?;
    if sc.snr_db.is_none() {
        mixture_spec.data.fill(num_complex::Complex64::new(0.0, 0.0));
    }
    for img in &image_specs {
        mixture_spec.data += &img.data;
    }
    let mixture_channels =
        clean.iter().zip(&noise.channels).map(|(c, b)| c.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
    let mixture = TimeSignal::new(mixture_channels, fs)?;
    Ok(Simulation { mixture, mixture_spec, images, image_specs, noise, mixing, source_spec, impulse_responses })
}

/// White Gaussian noise under a random syllable-rate envelope: 80–250 ms
/// segments, about one in five of them silent.
pub fn speech_like(len: usize, sample_rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut env = Vec::with_capacity(len);
    while env.len() < len {
        let seg = ((rng.gen_range(0.08..0.25) * sample_rate) as usize).max(1);
        let level = if rng.gen::<f64>() < 0.2 { 0.0 } else { rng.gen_range(0.1..1.0f64) };
        for i in 0..seg {
            // raised-cosine attack and release inside each segment
            let x = i as f64 / seg as f64;
            env.push(level * (std::f64::consts::PI * x).sin());
        }
    }
    env.truncate(len);
    env.iter().map(|e| e * normal.sample(rng)).collect()
}

/// Independent Laplacian samples with unit variance.
pub fn laplacian(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let b = 1.0 / 2f64.sqrt();
    (0..len)
        .map(|_| {
            let u: f64 = rng.gen_range(-0.5..0.5);
            -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
        })
        .collect()
}

/// Scenario file: geometry, directions in degrees and generated signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDocument {
    pub geometry: GeometryDocument,
    pub sources: Vec<SourceEntry>,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    pub duration: f64,
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub reverb: Option<ReverbSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub signal: SignalKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub azimuth_deg: f64,
    #[serde(default = "default_elevation")]
    pub elevation_deg: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    #[default]
    SpeechLike,
    Laplacian,
}

fn default_sample_rate() -> f64 {
    16000.0
}

fn default_elevation() -> f64 {
    90.0
}

impl ScenarioDocument {
    /// Generates the source signals and resolves the geometry.
    pub fn build(&self) -> Result<Scenario> {
        if !(self.duration > 0.0 && self.sample_rate > 0.0) {
            return invalid_input("duration and sample rate must be positive");
        }
        let geometry = ArrayGeometry::from_document(self.geometry.clone())?;
        let directions = self
            .sources
            .iter()
            .map(|s| Direction::from_degrees(s.azimuth_deg, s.elevation_deg))
            .collect::<Result<Vec<_>>>()?;
        let len = (self.duration * self.sample_rate).round() as usize;
        // Source signals use a stream separate from the noise and reverb draws.
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        let channels = (0..directions.len())
            .map(|_| match self.signal {
                SignalKind::SpeechLike => speech_like(len, self.sample_rate, &mut rng),
                SignalKind::Laplacian => laplacian(len, &mut rng),
            })
            .collect();
        Ok(Scenario {
            geometry,
            directions,
            sources: TimeSignal::new(channels, self.sample_rate)?,
            snr_db: self.snr_db,
            reverb: self.reverb,
            seed: self.seed,
        })
    }
}
