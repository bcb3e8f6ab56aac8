use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "arraysep", version, about = "Multichannel source separation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dereverberate and separate a multichannel recording.
    Separate(SeparateArgs),
    /// Estimate source directions with sliding-window MUSIC and clustering.
    Doa(DoaArgs),
    /// Evaluate a spatial, signal or combined loss.
    Loss(LossArgs),
    /// Render a far-field mixture from a scenario document.
    Simulate(SimulateArgs),
    /// Permutation-invariant SI-SDR of estimates against references.
    Eval(EvalArgs),
}

/// Options shared by `separate` and `doa`.
#[derive(Debug, Clone, Args)]
pub struct FrontEndArgs {
    /// Multichannel WAV recording.
    #[arg(long)]
    pub input: PathBuf,
    /// Number of sources N.
    #[arg(long)]
    pub n_sources: usize,
    /// Recording channels to use, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    /// Skip WPE dereverberation.
    #[arg(long)]
    pub no_wpe: bool,
    #[arg(long, default_value_t = 10)]
    pub wpe_taps: usize,
    #[arg(long, default_value_t = 3)]
    pub wpe_delay: usize,
    #[arg(long, default_value_t = 3)]
    pub wpe_iterations: usize,
    #[arg(long, default_value_t = 512)]
    pub wpe_n_fft: usize,
    #[arg(long, default_value_t = 128)]
    pub wpe_hop: usize,
    #[arg(long, default_value_t = 4096)]
    pub sep_n_fft: usize,
    #[arg(long, default_value_t = 1024)]
    pub sep_hop: usize,
}

/// Sliding-window MUSIC and clustering parameters.
#[derive(Debug, Clone, Args)]
pub struct MusicArgs {
    /// Window length L in frames.
    #[arg(long = "music-L", default_value_t = 15)]
    pub music_l: usize,
    /// Window shift S in frames.
    #[arg(long = "music-S", default_value_t = 1)]
    pub music_s: usize,
    /// k-means cluster count K.
    #[arg(long = "music-K", default_value_t = 3)]
    pub music_k: usize,
    /// Minimum azimuth separation in degrees.
    #[arg(long, default_value_t = 10.0)]
    pub theta_thres: f64,
    /// Clusters below this share of all window estimates are dropped.
    #[arg(long, default_value_t = 0.1)]
    pub e_thres_ratio: f64,
    /// Azimuth grid resolution in degrees.
    #[arg(long, default_value_t = 1.0)]
    pub music_resolution: f64,
    #[arg(long, default_value_t = 300.0)]
    pub music_fmin: f64,
    #[arg(long, default_value_t = 3500.0)]
    pub music_fmax: f64,
    #[arg(long, default_value_t = 0x5eed)]
    pub kmeans_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Iva,
    MvdrDoa,
    MvdrMask,
}

#[derive(Debug, Clone, Args)]
pub struct SeparateArgs {
    #[command(flatten)]
    pub front: FrontEndArgs,
    #[command(flatten)]
    pub music: MusicArgs,
    /// Array geometry document; required by `mvdr-doa`.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Iva)]
    pub method: Method,
    /// Mask dump at the separation STFT, one mask per source.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Recording channel the outputs are scaled to; defaults to the first selected channel.
    #[arg(long)]
    pub reference: Option<usize>,
    /// IVA sweeps; defaults depend on the channel count.
    #[arg(long)]
    pub iva_iterations: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DoaArgs {
    #[command(flatten)]
    pub front: FrontEndArgs,
    #[command(flatten)]
    pub music: MusicArgs,
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    /// Report file; printed to stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Exit with a distinct code when fewer than N directions are found.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossKind {
    Doa1,
    Doa2,
    Kld,
    Cisdr,
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignalLossKind {
    Kld,
    Cisdr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpatialKind {
    Doa1,
    Doa2,
}

#[derive(Debug, Clone, Args)]
pub struct LossArgs {
    #[arg(value_enum)]
    pub kind: LossKind,
    /// Demixing dump written by `separate`.
    #[arg(long)]
    pub demixing: Option<PathBuf>,
    /// DOA report written by `doa`.
    #[arg(long)]
    pub doa: Option<PathBuf>,
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    /// Also report the loss of the identity demixing system.
    #[arg(long)]
    pub baseline_identity: bool,
    /// Estimated source WAVs, in order.
    #[arg(long, num_args = 1..)]
    pub est: Vec<PathBuf>,
    /// Target source WAVs, in order.
    #[arg(long, num_args = 1..)]
    pub target: Vec<PathBuf>,
    #[arg(long, default_value_t = arraysep::losses::DEFAULT_CISDR_TAPS)]
    pub cisdr_taps: usize,
    /// STFT size for the KLD loss.
    #[arg(long, default_value_t = 4096)]
    pub n_fft: usize,
    #[arg(long, default_value_t = 1024)]
    pub hop: usize,
    /// Spatial term of the combined loss.
    #[arg(long, value_enum, default_value_t = SpatialKind::Doa2)]
    pub spatial: SpatialKind,
    /// Signal term of the combined loss.
    #[arg(long, value_enum, default_value_t = SignalLossKind::Cisdr)]
    pub signal: SignalLossKind,
    /// Weight of the signal term in the combined loss.
    #[arg(long, default_value_t = arraysep::losses::ALPHA_IVA)]
    pub alpha: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Microphone of the reference images.
    #[arg(long, default_value_t = 0)]
    pub reference_mic: usize,
    /// STFT used to apply the far-field mixing.
    #[arg(long, default_value_t = 4096)]
    pub n_fft: usize,
    #[arg(long, default_value_t = 1024)]
    pub hop: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Estimate WAVs; every channel of every file is one estimate.
    #[arg(long, num_args = 1.., required = true)]
    pub est: Vec<PathBuf>,
    /// Reference WAVs; every channel of every file is one reference.
    #[arg(long = "ref", num_args = 1.., required = true)]
    pub reference: Vec<PathBuf>,
    /// Unprocessed mixture; adds the improvement over it to the report.
    #[arg(long)]
    pub mixture: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub mixture_channel: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}
