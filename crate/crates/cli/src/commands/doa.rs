use arraysep::doa::{sliding_doa_cluster, DoaDocument, SlidingConfig};
use arraysep::{Error, Result};
use serde::Serialize;

use super::{front_end, load_geometry, FrontEndConfig};
use crate::args::DoaArgs;
use crate::{exit, io};

#[derive(Serialize)]
struct DoaConfig {
    #[serde(flatten)]
    front_end: FrontEndConfig,
    geometry: String,
    music: SlidingConfig,
}

/// The DOA document with a status line and the resolved configuration.
#[derive(Serialize)]
struct DoaReport {
    /// `"complete"` or `"incomplete"`; incomplete estimates are not meant
    /// to drive a spatial loss.
    status: &'static str,
    #[serde(flatten)]
    doa: DoaDocument,
    config: DoaConfig,
}

pub fn run(args: DoaArgs) -> Result<u8> {
    let geometry_path = args.geometry.clone().ok_or_else(|| Error::InvalidConfig("doa requires --geometry".into()))?;
    let sliding = args.music.sliding_config()?;
    let n = args.front.n_sources;
    let fe = front_end(&args.front, |m| (0..m).collect())?;
    let geom = load_geometry(Some(&geometry_path), &fe.config.channels, "doa")?;
    let est = sliding_doa_cluster(&fe.spec, &geom, n, &sliding)?;
    if !est.complete {
        log::warn!("found {} of {n} source directions", est.directions.len());
    }
    let report = DoaReport {
        status: if est.complete { "complete" } else { "incomplete" },
        doa: est.to_document(),
        config: DoaConfig { front_end: fe.config, geometry: geometry_path.display().to_string(), music: sliding },
    };
    io::emit(args.output.as_deref(), &report)?;
    Ok(if args.strict && !est.complete { exit::INCOMPLETE } else { 0 })
}
