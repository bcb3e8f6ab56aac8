//! Binary interchange for demixing systems and masks.
//!
//! All integers and floats are little endian.
//!
//! Demixing dump:
//! `"ASDM"`, version `u32`, `n u32`, `m u32`, `f u32`, `n_fft u32`,
//! `sample_rate f64`, `reference i32` (`−1` for minimal distortion), the `m`
//! input channel indices as `u32`, then `f·n·m` complex entries in
//! `(f, n, m)` row-major order, each as `f32` re, im.
//!
//! Mask dump:
//! `"ASMK"`, version `u32`, `n u32`, `f u32`, `t u32`, then `n·f·t` `f32`
//! values in `(n, f, t)` row-major order.

use std::io::{Read, Write};

use ndarray::Array3;
use num_complex::Complex64;

use crate::error::{invalid_input, Result};
use crate::iva::{DemixingSystem, MaskSet, ProjectionReference};

pub const DEMIXING_MAGIC: &[u8; 4] = b"ASDM";
pub const MASK_MAGIC: &[u8; 4] = b"ASMK";
pub const FORMAT_VERSION: u32 = 1;

/// A demixing system together with the STFT it was estimated on.
#[derive(Debug, Clone, PartialEq)]
pub struct DemixingDump {
    pub system: DemixingSystem,
    pub n_fft: usize,
    pub sample_rate: f64,
    /// Recording channel feeding each demixing column.
    pub channels: Vec<usize>,
}

impl DemixingDump {
    /// Center frequency of each bin in Hz.
    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.system.n_freqs()).map(|f| f as f64 * self.sample_rate / self.n_fft as f64).collect()
    }
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| crate::Error::InvalidInput(format!("dimension {v} too large")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => crate::Error::InvalidInput("truncated dump".into()),
        _ => crate::Error::Io(e),
    })?;
    Ok(b)
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    Ok(u32::from_le_bytes(get::<4, _>(r)?) as usize)
}

fn get_f32<R: Read>(r: &mut R) -> Result<f32> {
    Ok(f32::from_le_bytes(get::<4, _>(r)?))
}

fn check_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let got = get::<4, _>(r)?;
    if &got != magic {
        return invalid_input(format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(&got), String::from_utf8_lossy(magic)));
    }
    let version = get_u32(r)?;
    if version != FORMAT_VERSION as usize {
        return invalid_input(format!("unsupported format version {version}"));
    }
    Ok(())
}

pub fn write_demixing<W: Write>(w: &mut W, dump: &DemixingDump) -> Result<()> {
    let (f, n, m) = dump.system.matrices.dim();
    w.write_all(DEMIXING_MAGIC)?;
    put_u32(w, FORMAT_VERSION as usize)?;
    put_u32(w, n)?;
    put_u32(w, m)?;
    put_u32(w, f)?;
    put_u32(w, dump.n_fft)?;
    w.write_all(&dump.sample_rate.to_le_bytes())?;
    let reference: i32 = match dump.system.reference {
        ProjectionReference::Channel(c) => c as i32,
        ProjectionReference::MinimalDistortion => -1,
    };
    w.write_all(&reference.to_le_bytes())?;
    if dump.channels.len() != m {
        return invalid_input(format!("{} channel indices for {m} columns", dump.channels.len()));
    }
    for &c in &dump.channels {
        put_u32(w, c)?;
    }
    for z in dump.system.matrices.iter() {
        w.write_all(&(z.re as f32).to_le_bytes())?;
        w.write_all(&(z.im as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_demixing<R: Read>(r: &mut R) -> Result<DemixingDump> {
    check_header(r, DEMIXING_MAGIC)?;
    let n = get_u32(r)?;
    let m = get_u32(r)?;
    let f = get_u32(r)?;
    let n_fft = get_u32(r)?;
    let sample_rate = f64::from_le_bytes(get::<8, _>(r)?);
    let reference = i32::from_le_bytes(get::<4, _>(r)?);
    if n == 0 || m == 0 || f == 0 || n_fft == 0 || !(sample_rate > 0.0) {
        return invalid_input("demixing dump has empty dimensions");
    }
    if f != n_fft / 2 + 1 {
        return invalid_input(format!("{f} bins do not match n_fft {n_fft}"));
    }
    let reference = match reference {
        -1 => ProjectionReference::MinimalDistortion,
        c if c >= 0 && (c as usize) < m => ProjectionReference::Channel(c as usize),
        c => return invalid_input(format!("reference channel {c} out of range")),
    };
    let channels = (0..m).map(|_| get_u32(r)).collect::<Result<Vec<_>>>()?;
    let mut matrices = Array3::zeros((f, n, m));
    for z in matrices.iter_mut() {
        let re = get_f32(r)?;
        let im = get_f32(r)?;
        *z = Complex64::new(re as f64, im as f64);
    }
    Ok(DemixingDump { system: DemixingSystem { matrices, reference }, n_fft, sample_rate, channels })
}

pub fn write_masks<W: Write>(w: &mut W, masks: &MaskSet) -> Result<()> {
    let (n, f, t) = masks.values.dim();
    w.write_all(MASK_MAGIC)?;
    put_u32(w, FORMAT_VERSION as usize)?;
    put_u32(w, n)?;
    put_u32(w, f)?;
    put_u32(w, t)?;
    for v in masks.values.iter() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_masks<R: Read>(r: &mut R) -> Result<MaskSet> {
    check_header(r, MASK_MAGIC)?;
    let n = get_u32(r)?;
    let f = get_u32(r)?;
    let t = get_u32(r)?;
    let mut values = Array3::zeros((n, f, t));
    for v in values.iter_mut() {
        *v = get_f32(r)? as f64;
    }
    MaskSet::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demixing_round_trip() {
        let mut system = DemixingSystem::identity(3, 2);
        system.matrices[[1, 0, 1]] = Complex64::new(0.25, -1.5);
        system.reference = ProjectionReference::Channel(1);
        let dump = DemixingDump { system, n_fft: 4, sample_rate: 16000.0, channels: vec![0, 3] };
        let mut buf = Vec::new();
        write_demixing(&mut buf, &dump).unwrap();
        assert_eq!(&buf[..4], b"ASDM");
        assert_eq!(buf.len(), 4 + 4 * 5 + 8 + 4 + 2 * 4 + 3 * 2 * 2 * 8);
        let back = read_demixing(&mut buf.as_slice()).unwrap();
        assert_eq!(back, dump);
        assert!(read_demixing(&mut &buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn mask_round_trip_and_validation() {
        let masks = MaskSet::new(Array3::from_shape_fn((2, 3, 4), |(n, f, t)| (n + f + t) as f64 / 8.0)).unwrap();
        let mut buf = Vec::new();
        write_masks(&mut buf, &masks).unwrap();
        assert_eq!(read_masks(&mut buf.as_slice()).unwrap(), masks);
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_masks(&mut bad.as_slice()).is_err());
        let n = bad.len();
        bad[0] = b'A';
        bad[n - 4..].copy_from_slice(&2.0f32.to_le_bytes());
        assert!(read_masks(&mut bad.as_slice()).is_err());
    }
}
