pub mod doa;
pub mod eval;
pub mod loss;
pub mod separate;
pub mod simulate;

use std::path::Path;

use arraysep::doa::{ClusterConfig, MusicConfig, MusicGrid, SlidingConfig};
use arraysep::stft::{istft, stft};
use arraysep::wpe::{wpe_with_trace, WpeTrace};
use arraysep::{ArrayGeometry, Error, Result, Spectrogram, StftConfig, TimeSignal, WpeConfig};
use serde::Serialize;

use crate::args::{FrontEndArgs, MusicArgs};
use crate::io;

/// Resolved front-end settings, echoed in every report.
#[derive(Debug, Clone, Serialize)]
pub struct FrontEndConfig {
    pub input: String,
    pub n_sources: usize,
    pub channels: Vec<usize>,
    pub wpe: Option<WpeConfig>,
    pub stft_wpe: StftConfig,
    pub stft_sep: StftConfig,
}

/// Recording after channel selection, WPE and re-analysis.
pub struct FrontEnd {
    pub config: FrontEndConfig,
    pub input_len: usize,
    pub sample_rate: f64,
    pub spec: Spectrogram,
    pub wpe_trace: Option<WpeTrace>,
}

/// `count` channels spread evenly over `available`, starting at 0.
pub fn spread_channels(available: usize, count: usize) -> Vec<usize> {
    (0..count).map(|k| k * available / count).collect()
}

pub fn check_channels(channels: &[usize], available: usize) -> Result<()> {
    if channels.is_empty() {
        return Err(Error::InvalidConfig("no channels selected".into()));
    }
    if let Some(&c) = channels.iter().find(|&&c| c >= available) {
        return Err(Error::InvalidConfig(format!("channel {c} out of range for {available} channels")));
    }
    let mut sorted = channels.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != channels.len() {
        return Err(Error::InvalidConfig("channel list has duplicates".into()));
    }
    Ok(())
}

impl FrontEndArgs {
    fn stft_configs(&self) -> Result<(StftConfig, StftConfig)> {
        let fine = StftConfig::new(self.wpe_n_fft, self.wpe_hop);
        let coarse = StftConfig::new(self.sep_n_fft, self.sep_hop);
        fine.validate()?;
        coarse.validate()?;
        Ok((fine, coarse))
    }

    fn wpe_config(&self) -> Result<Option<WpeConfig>> {
        if self.no_wpe {
            return Ok(None);
        }
        let cfg = WpeConfig { taps: self.wpe_taps, delay: self.wpe_delay, iterations: self.wpe_iterations, ..WpeConfig::default() };
        cfg.validate()?;
        Ok(Some(cfg))
    }
}

/// Reads the recording and runs WPE at the fine STFT, resynthesis and
/// analysis at the separation STFT. `default_channels` picks the subset
/// when none was given on the command line.
pub fn front_end(args: &FrontEndArgs, default_channels: impl FnOnce(usize) -> Vec<usize>) -> Result<FrontEnd> {
    if args.n_sources == 0 {
        return Err(Error::InvalidConfig("at least one source is required".into()));
    }
    let (stft_wpe, stft_sep) = args.stft_configs()?;
    let wpe_cfg = args.wpe_config()?;
    let recording = io::read_wav(&args.input)?;
    let available = recording.n_channels();
    let channels = args.channels.clone().unwrap_or_else(|| default_channels(available));
    check_channels(&channels, available)?;
    if channels.len() < args.n_sources {
        return Err(Error::InvalidConfig(format!("{} channels cannot separate {} sources", channels.len(), args.n_sources)));
    }
    let x = recording.select_channels(&channels)?;
    let len = x.len();
    let (dry, wpe_trace) = match &wpe_cfg {
        Some(cfg) => {
            let spec = stft(&x, &stft_wpe)?;
            let (d, trace) = wpe_with_trace(&spec, cfg)?;
            (istft(&d, len)?, Some(trace))
        }
        None => (x, None),
    };
    let spec = stft(&dry, &stft_sep)?;
    Ok(FrontEnd {
        config: FrontEndConfig {
            input: args.input.display().to_string(),
            n_sources: args.n_sources,
            channels,
            wpe: wpe_cfg,
            stft_wpe,
            stft_sep,
        },
        input_len: len,
        sample_rate: recording.sample_rate,
        spec,
        wpe_trace,
    })
}

impl MusicArgs {
    pub fn sliding_config(&self) -> Result<SlidingConfig> {
        if !(self.music_resolution > 0.0 && self.music_fmin >= 0.0 && self.music_fmax > self.music_fmin) {
            return Err(Error::InvalidConfig("MUSIC grid resolution and band must be positive and ordered".into()));
        }
        Ok(SlidingConfig {
            window_frames: self.music_l,
            shift_frames: self.music_s,
            cluster: ClusterConfig {
                n_clusters: self.music_k,
                e_thres_ratio: self.e_thres_ratio,
                theta_thres: self.theta_thres.to_radians(),
                seed: self.kmeans_seed,
                ..ClusterConfig::default()
            },
            music: MusicConfig {
                grid: MusicGrid::Azimuth { resolution: self.music_resolution.to_radians(), elevation: std::f64::consts::FRAC_PI_2 },
                freq_band: (self.music_fmin, self.music_fmax),
                ..MusicConfig::default()
            },
        })
    }
}

/// Geometry restricted to `channels`; missing geometry is a configuration error.
pub fn load_geometry(path: Option<&Path>, channels: &[usize], why: &str) -> Result<ArrayGeometry> {
    let path = path.ok_or_else(|| Error::InvalidConfig(format!("{why} requires --geometry")))?;
    let geom = io::read_geometry(path)?;
    check_channels(channels, geom.n_mics()).map_err(|_| {
        Error::InvalidConfig(format!("geometry has {} microphones but channel list is {channels:?}", geom.n_mics()))
    })?;
    geom.select(channels)
}

pub fn mono_files(sig: &TimeSignal) -> Vec<TimeSignal> {
    sig.channels.iter().map(|c| TimeSignal { channels: vec![c.clone()], sample_rate: sig.sample_rate }).collect()
}
