use arraysep::doa::{DoaDocument, DoaSourceEntry};
use arraysep::sim::{simulate_farfield, ScenarioDocument};
use arraysep::{Error, Result, StftConfig, TimeSignal};
use serde::Serialize;

use super::mono_files;
use crate::args::SimulateArgs;
use crate::io;

#[derive(Serialize)]
struct SimulateConfig {
    scenario: ScenarioDocument,
    reference_mic: usize,
    stft: StftConfig,
}

/// True directions in the DOA document layout, plus the files written.
#[derive(Serialize)]
struct Truth {
    #[serde(flatten)]
    doa: DoaDocument,
    mixture: String,
    images: Vec<String>,
    references: Vec<String>,
    dry: Vec<String>,
    noise: String,
    geometry: String,
    config: SimulateConfig,
}

pub fn run(args: SimulateArgs) -> Result<u8> {
    let doc: ScenarioDocument = io::read_json(&args.scenario)?;
    let stft_cfg = StftConfig::new(args.n_fft, args.hop);
    stft_cfg.validate()?;
    let scenario = doc.build()?;
    let m = scenario.geometry.n_mics();
    if args.reference_mic >= m {
        return Err(Error::InvalidConfig(format!("reference microphone {} out of range for {m} microphones", args.reference_mic)));
    }
    let sim = simulate_farfield(&scenario, &stft_cfg)?;
    let n = scenario.directions.len();

    io::create_dir(&args.out_dir)?;
    let dir = &args.out_dir;
    io::write_wav(&dir.join("mixture.wav"), &sim.mixture)?;
    io::write_wav(&dir.join("noise.wav"), &sim.noise)?;
    let mut images = Vec::with_capacity(n);
    let mut references = Vec::with_capacity(n);
    for (k, img) in sim.images.iter().enumerate() {
        let name = format!("image_{k}.wav");
        io::write_wav(&dir.join(&name), img)?;
        images.push(name);
        let name = format!("reference_{k}.wav");
        let at_ref = TimeSignal::mono(img.channel(args.reference_mic).to_vec(), img.sample_rate)?;
        io::write_wav(&dir.join(&name), &at_ref)?;
        references.push(name);
    }
    let mut dry = Vec::with_capacity(n);
    for (k, sig) in mono_files(&scenario.sources).iter().enumerate() {
        let name = format!("dry_{k}.wav");
        io::write_wav(&dir.join(&name), sig)?;
        dry.push(name);
    }
    io::write_json(&dir.join("geometry.json"), &scenario.geometry.to_document())?;

    let truth = Truth {
        doa: DoaDocument {
            n_sources: n,
            complete: true,
            sources: scenario
                .directions
                .iter()
                .map(|d| DoaSourceEntry {
                    azimuth_deg: d.azimuth().to_degrees(),
                    elevation_deg: d.elevation().to_degrees(),
                    cluster_size: 0,
                })
                .collect(),
        },
        mixture: "mixture.wav".into(),
        images,
        references,
        dry,
        noise: "noise.wav".into(),
        geometry: "geometry.json".into(),
        config: SimulateConfig { scenario: doc, reference_mic: args.reference_mic, stft: stft_cfg },
    };
    io::write_json(&dir.join("truth.json"), &truth)?;
    Ok(0)
}
