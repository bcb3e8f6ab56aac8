use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use arraysep::doa::DoaDocument;
use arraysep::formats::{read_demixing, DemixingDump};
use arraysep::geometry::mixing_matrix;
use arraysep::iva::DEFAULT_VARIANCE_FLOOR;
use arraysep::losses::{cisdr_loss, combined_loss, kld_loss, spatial_loss, spatial_loss_per_frequency, SpatialLossMode};
use arraysep::stft::stft;
use arraysep::{Assignment, DemixingSystem, DoaEstimate, Error, Result, Spectrogram, StftConfig};
use ndarray::Array3;
use serde::Serialize;

use super::load_geometry;
use crate::args::{LossArgs, LossKind, SignalLossKind, SpatialKind};
use crate::io;

#[derive(Serialize)]
struct FrequencyLoss {
    frequency: f64,
    loss: f64,
}

#[derive(Serialize)]
struct SpatialReport {
    mode: SpatialLossMode,
    loss: f64,
    /// `assignment[n]` is the demixing row matched to DOA source `n`.
    assignment: Vec<usize>,
    per_frequency: Vec<FrequencyLoss>,
    identity_loss: Option<f64>,
}

#[derive(Serialize)]
struct SignalReport {
    kind: &'static str,
    loss: f64,
    /// `assignment[n]` is the estimate matched to target `n`.
    assignment: Vec<usize>,
}

#[derive(Serialize)]
struct LossConfig {
    kind: &'static str,
    demixing: Option<String>,
    doa: Option<String>,
    geometry: Option<String>,
    est: Vec<String>,
    target: Vec<String>,
    cisdr_taps: usize,
    stft: StftConfig,
    alpha: Option<f64>,
    variance_floor: f64,
}

#[derive(Serialize)]
struct LossReport {
    loss: f64,
    /// Assignment of the single loss, or of the spatial term when combined.
    assignment: Vec<usize>,
    spatial: Option<SpatialReport>,
    signal: Option<SignalReport>,
    config: LossConfig,
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str, kind: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::InvalidConfig(format!("{kind} loss requires --{flag}")))
}

fn read_dump(path: &Path) -> Result<DemixingDump> {
    let file = File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_demixing(&mut BufReader::new(file))
}

fn spatial(args: &LossArgs, mode: SpatialLossMode, kind: &str) -> Result<SpatialReport> {
    let dump = read_dump(require(&args.demixing, "demixing", kind)?)?;
    let doc: DoaDocument = io::read_json(require(&args.doa, "doa", kind)?)?;
    let est = DoaEstimate::from_document(&doc)?;
    if !est.complete {
        return Err(Error::InvalidInput(format!("DOA estimate is incomplete ({} of {})", est.directions.len(), est.n_sources)));
    }
    if est.directions.len() != dump.system.n_sources() {
        return Err(Error::InvalidInput(format!(
            "{} DOA directions for a demixing system with {} rows",
            est.directions.len(),
            dump.system.n_sources()
        )));
    }
    let geom = load_geometry(args.geometry.as_deref(), &dump.channels, "a spatial loss")?;
    let freqs = dump.frequencies();
    let a = mixing_matrix(&geom, &est.directions, &freqs)?;
    let (loss, pi) = spatial_loss(&dump.system, &a, mode)?;
    let per = spatial_loss_per_frequency(&dump.system, &a, mode, &pi)?;
    let identity_loss = if args.baseline_identity {
        let n = dump.system.n_sources();
        let eye = DemixingSystem::identity(dump.system.n_freqs(), dump.system.n_mics()).select_rows(&(0..n).collect::<Vec<_>>());
        Some(spatial_loss(&eye, &a, mode)?.0)
    } else {
        None
    };
    Ok(SpatialReport {
        mode,
        loss,
        assignment: pi.permutation,
        per_frequency: freqs.into_iter().zip(per).map(|(frequency, loss)| FrequencyLoss { frequency, loss }).collect(),
        identity_loss,
    })
}

/// `|Y|²` floored at a fraction of the mean power.
fn variances(spec: &Spectrogram) -> Array3<f64> {
    let floor = (DEFAULT_VARIANCE_FLOOR * spec.mean_power()).max(f64::MIN_POSITIVE);
    spec.data.mapv(|z| z.norm_sqr().max(floor))
}

fn signal(args: &LossArgs, kind: SignalLossKind, stft_cfg: &StftConfig) -> Result<SignalReport> {
    if args.est.is_empty() || args.target.is_empty() {
        return Err(Error::InvalidConfig("signal losses require --est and --target".into()));
    }
    let est = io::read_stack(&args.est)?;
    let target = io::read_stack(&args.target)?;
    if est.n_channels() != target.n_channels() || est.len() != target.len() {
        return Err(Error::InvalidInput(format!(
            "{} estimates of {} samples against {} targets of {} samples",
            est.n_channels(),
            est.len(),
            target.n_channels(),
            target.len()
        )));
    }
    let (loss, pi, name): (f64, Assignment, &'static str) = match kind {
        SignalLossKind::Cisdr => {
            let (l, p) = cisdr_loss(&target, &est, args.cisdr_taps)?;
            (l, p, "cisdr")
        }
        SignalLossKind::Kld => {
            stft_cfg.validate()?;
            let y_hat = stft(&est, stft_cfg)?;
            let y_bar = stft(&target, stft_cfg)?;
            let (l, p) = kld_loss(&y_hat, &variances(&y_hat), &y_bar, &variances(&y_bar))?;
            (l, p, "kld")
        }
    };
    Ok(SignalReport { kind: name, loss, assignment: pi.permutation })
}

fn mode_of(kind: SpatialKind) -> SpatialLossMode {
    match kind {
        SpatialKind::Doa1 => SpatialLossMode::Doa1,
        SpatialKind::Doa2 => SpatialLossMode::Doa2,
    }
}

pub fn run(args: LossArgs) -> Result<u8> {
    let stft_cfg = StftConfig::new(args.n_fft, args.hop);
    let (kind, spatial_report, signal_report) = match args.kind {
        LossKind::Doa1 => ("doa1", Some(spatial(&args, SpatialLossMode::Doa1, "doa1")?), None),
        LossKind::Doa2 => ("doa2", Some(spatial(&args, SpatialLossMode::Doa2, "doa2")?), None),
        LossKind::Kld => ("kld", None, Some(signal(&args, SignalLossKind::Kld, &stft_cfg)?)),
        LossKind::Cisdr => ("cisdr", None, Some(signal(&args, SignalLossKind::Cisdr, &stft_cfg)?)),
        LossKind::Combined => {
            if !(args.alpha >= 0.0) {
                return Err(Error::InvalidConfig(format!("alpha must be nonnegative, got {}", args.alpha)));
            }
            let sp = spatial(&args, mode_of(args.spatial), "combined")?;
            let sg = signal(&args, args.signal, &stft_cfg)?;
            ("combined", Some(sp), Some(sg))
        }
    };
    let (loss, assignment) = match (&spatial_report, &signal_report) {
        (Some(sp), Some(sg)) => (combined_loss(sp.loss, sg.loss, args.alpha)?, sp.assignment.clone()),
        (Some(sp), None) => (sp.loss, sp.assignment.clone()),
        (None, Some(sg)) => (sg.loss, sg.assignment.clone()),
        (None, None) => unreachable!("every loss kind has a term"),
    };
    let show = |v: &[PathBuf]| v.iter().map(|p| p.display().to_string()).collect::<Vec<_>>();
    let report = LossReport {
        loss,
        assignment,
        spatial: spatial_report,
        signal: signal_report,
        config: LossConfig {
            kind,
            demixing: args.demixing.as_ref().map(|p| p.display().to_string()),
            doa: args.doa.as_ref().map(|p| p.display().to_string()),
            geometry: args.geometry.as_ref().map(|p| p.display().to_string()),
            est: show(&args.est),
            target: show(&args.target),
            cisdr_taps: args.cisdr_taps,
            stft: stft_cfg,
            alpha: (args.kind == LossKind::Combined).then_some(args.alpha),
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        },
    };
    io::emit(args.output.as_deref(), &report)?;
    Ok(0)
}
