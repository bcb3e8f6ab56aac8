use arraysep::metrics::{permutation_sdr, si_sdr};
use arraysep::{Error, Result};
use serde::Serialize;

use crate::args::EvalArgs;
use crate::io;

#[derive(Serialize)]
struct EvalConfig {
    est: Vec<String>,
    reference: Vec<String>,
    mixture: Option<String>,
    mixture_channel: usize,
}

#[derive(Serialize)]
struct MixtureBaseline {
    /// SI-SDR of the mixture channel against each reference.
    per_source: Vec<f64>,
    mean: f64,
    /// Mean SI-SDR of the matched estimates minus that of the mixture.
    improvement: f64,
    per_source_improvement: Vec<f64>,
}

#[derive(Serialize)]
struct EvalReport {
    si_sdr: f64,
    per_source: Vec<f64>,
    /// `assignment[n]` is the estimate matched to reference `n`.
    assignment: Vec<usize>,
    mixture: Option<MixtureBaseline>,
    config: EvalConfig,
}

pub fn run(args: EvalArgs) -> Result<u8> {
    let est = io::read_stack(&args.est)?;
    let refs = io::read_stack(&args.reference)?;
    if est.len() != refs.len() {
        return Err(Error::InvalidInput(format!("estimates have {} samples, references {}", est.len(), refs.len())));
    }
    let score = permutation_sdr(&est, &refs)?;
    let mixture = match &args.mixture {
        None => None,
        Some(path) => {
            let mix = io::read_wav(path)?;
            if args.mixture_channel >= mix.n_channels() {
                return Err(Error::InvalidConfig(format!(
                    "mixture channel {} out of range for {} channels",
                    args.mixture_channel,
                    mix.n_channels()
                )));
            }
            if mix.len() != refs.len() {
                return Err(Error::InvalidInput(format!("mixture has {} samples, references {}", mix.len(), refs.len())));
            }
            let x = mix.channel(args.mixture_channel);
            let per_source = (0..refs.n_channels()).map(|r| si_sdr(x, refs.channel(r))).collect::<Result<Vec<_>>>()?;
            let mean = per_source.iter().sum::<f64>() / per_source.len() as f64;
            let per_source_improvement = score.per_source.iter().zip(&per_source).map(|(e, m)| e - m).collect();
            Some(MixtureBaseline { improvement: score.mean - mean, per_source, mean, per_source_improvement })
        }
    };
    let show = |v: &[std::path::PathBuf]| v.iter().map(|p| p.display().to_string()).collect::<Vec<_>>();
    let report = EvalReport {
        si_sdr: score.mean,
        per_source: score.per_source,
        assignment: score.assignment.permutation,
        mixture,
        config: EvalConfig {
            est: show(&args.est),
            reference: show(&args.reference),
            mixture: args.mixture.as_ref().map(|p| p.display().to_string()),
            mixture_channel: args.mixture_channel,
        },
    };
    io::emit(args.output.as_deref(), &report)?;
    Ok(0)
}
