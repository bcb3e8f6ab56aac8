use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use arraysep::doa::{sliding_doa_cluster, DoaDocument, SlidingConfig};
use arraysep::formats::{read_masks, write_demixing, DemixingDump};
use arraysep::iva::{auxiva_iss, default_iterations, DEFAULT_VARIANCE_FLOOR};
use arraysep::metrics::select_by_power;
use arraysep::mvdr::{doa_mvdr, mask_mvdr, rescale_to_reference, BeamformerWeights};
use arraysep::stft::istft;
use arraysep::{DemixingSystem, Error, MaskSet, ProjectionReference, Result, SourceVarianceModel, Spectrogram};
use serde::Serialize;

use super::{front_end, load_geometry, mono_files, spread_channels, FrontEndConfig};
use crate::args::{Method, SeparateArgs};
use crate::io;

#[derive(Serialize)]
struct SeparateConfig {
    #[serde(flatten)]
    front_end: FrontEndConfig,
    method: &'static str,
    /// Recording channel the outputs are scaled to.
    reference: usize,
    masks: Option<String>,
    geometry: Option<String>,
    iva_iterations: Option<usize>,
    doa: Option<SlidingConfig>,
}

#[derive(Serialize)]
struct SeparateReport {
    config: SeparateConfig,
    /// Demixing rows kept by output power, in index order.
    selected_outputs: Vec<usize>,
    outputs: Vec<String>,
    demixing: String,
    wpe_objective: Option<Vec<f64>>,
    iva_cost: Option<Vec<f64>>,
    doa: Option<DoaDocument>,
}

fn load_masks(path: &Path) -> Result<MaskSet> {
    let file = File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_masks(&mut BufReader::new(file))
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Iva => "iva",
        Method::MvdrDoa => "mvdr-doa",
        Method::MvdrMask => "mvdr-mask",
    }
}

/// Demixing rows `conj(w)` of a beamformer, so that `y = W x`.
fn beamformer_rows(bw: &BeamformerWeights, reference: usize) -> DemixingSystem {
    let matrices = bw.weights.mapv(|z| z.conj()).permuted_axes([1, 0, 2]).as_standard_layout().into_owned();
    DemixingSystem { matrices, reference: ProjectionReference::Channel(reference) }
}

fn check_masks(masks: &MaskSet, spec: &Spectrogram, n: usize) -> Result<()> {
    if masks.n_freqs() != spec.n_freqs() || masks.n_frames() != spec.n_frames() {
        return Err(Error::InvalidInput(format!(
            "masks are {}×{} but the separation STFT is {}×{}",
            masks.n_freqs(),
            masks.n_frames(),
            spec.n_freqs(),
            spec.n_frames()
        )));
    }
    if masks.n_sources() < n {
        return Err(Error::InvalidInput(format!("{} masks for {n} sources", masks.n_sources())));
    }
    Ok(())
}

pub fn run(args: SeparateArgs) -> Result<u8> {
    let n = args.front.n_sources;
    if args.method == Method::MvdrDoa && args.geometry.is_none() {
        return Err(Error::InvalidConfig("mvdr-doa requires --geometry".into()));
    }
    if args.method == Method::MvdrMask && args.masks.is_none() {
        return Err(Error::InvalidConfig("mvdr-mask requires --masks".into()));
    }
    let sliding = match args.method {
        Method::MvdrDoa => Some(args.music.sliding_config()?),
        _ => None,
    };
    let masks = args.masks.as_deref().map(load_masks).transpose()?;

    let method = args.method;
    let fe = front_end(&args.front, |m| if method == Method::Iva { spread_channels(m, n) } else { (0..m).collect() })?;
    let channels = fe.config.channels.clone();
    let reference = args.reference.unwrap_or(channels[0]);
    let ref_pos = channels
        .iter()
        .position(|&c| c == reference)
        .ok_or_else(|| Error::InvalidConfig(format!("reference channel {reference} is not among the selected channels")))?;
    if let Some(mk) = &masks {
        check_masks(mk, &fe.spec, n)?;
    }

    let mut iva_iterations = None;
    let mut iva_cost = None;
    let mut doa = None;
    let (system, outputs) = match method {
        Method::Iva => {
            let iters = args.iva_iterations.unwrap_or_else(|| default_iterations(channels.len()));
            iva_iterations = Some(iters);
            let model = match &masks {
                Some(mk) if mk.n_sources() == channels.len() => {
                    SourceVarianceModel::ExternalMask { masks: mk.clone(), floor: DEFAULT_VARIANCE_FLOOR }
                }
                Some(mk) => {
                    return Err(Error::InvalidInput(format!(
                        "IVA on {} channels needs {} masks, got {}",
                        channels.len(),
                        channels.len(),
                        mk.n_sources()
                    )))
                }
                None => SourceVarianceModel::GaussSpherical { floor: DEFAULT_VARIANCE_FLOOR },
            };
            let out = auxiva_iss(&fe.spec, iters, &model, ProjectionReference::Channel(ref_pos))?;
            iva_cost = Some(out.trace.iter().map(|s| s.after).collect());
            (out.demixing, out.projected)
        }
        Method::MvdrDoa => {
            let geom = load_geometry(args.geometry.as_deref(), &channels, "mvdr-doa")?;
            let cfg = sliding.as_ref().expect("sliding config for mvdr-doa");
            let est = sliding_doa_cluster(&fe.spec, &geom, n, cfg)?;
            if !est.complete {
                return Err(Error::Numerical(format!("found {} of {n} source directions", est.directions.len())));
            }
            doa = Some(est.to_document());
            let (bw, y) = doa_mvdr(&fe.spec, &geom, &est.directions, masks.as_ref())?;
            let y = rescale_to_reference(&y, &bw, ref_pos)?;
            (beamformer_rows(&bw, ref_pos), y)
        }
        Method::MvdrMask => {
            let mk = masks.as_ref().expect("masks checked above");
            let (bw, y) = mask_mvdr(&fe.spec, mk, ref_pos)?;
            (beamformer_rows(&bw, ref_pos), y)
        }
    };

    let selected = select_by_power(&outputs, n)?;
    let kept = outputs.select_channels(&selected);
    let signals = istft(&kept, fe.input_len)?;
    let dump = DemixingDump {
        system: system.select_rows(&selected),
        n_fft: fe.config.stft_sep.n_fft,
        sample_rate: fe.sample_rate,
        channels: channels.clone(),
    };
    let mut dump_bytes = Vec::new();
    write_demixing(&mut dump_bytes, &dump)?;

    // Everything is computed before the first file is created.
    io::create_dir(&args.out_dir)?;
    let mut names = Vec::with_capacity(n);
    for (k, sig) in mono_files(&signals).iter().enumerate() {
        let name = format!("source_{k}.wav");
        io::write_wav(&args.out_dir.join(&name), sig)?;
        names.push(name);
    }
    let mut w = BufWriter::new(File::create(args.out_dir.join("demixing.bin"))?);
    w.write_all(&dump_bytes)?;
    w.flush()?;

    let report = SeparateReport {
        config: SeparateConfig {
            front_end: fe.config,
            method: method_name(method),
            reference,
            masks: args.masks.as_ref().map(|p| p.display().to_string()),
            geometry: args.geometry.as_ref().map(|p| p.display().to_string()),
            iva_iterations,
            doa: sliding,
        },
        selected_outputs: selected,
        outputs: names,
        demixing: "demixing.bin".into(),
        wpe_objective: fe.wpe_trace.map(|t| t.objective),
        iva_cost,
        doa,
    };
    io::write_json(&args.out_dir.join("report.json"), &report)?;
    log::info!("wrote {} sources to {}", n, args.out_dir.display());
    Ok(0)
}
