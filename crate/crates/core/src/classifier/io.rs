//! Binary model container.
//!
//! Layout, all integers and floats little-endian:
//! `"SIEM"` | version: u32 | d_in: u64 | K: u64 |
//! K x (len: u32, UTF-8 bytes) | W: K*d_in f64 row-major | b: K f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ClassifierError, LabelVocab, SoftmaxModel};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"SIEM";
pub const FORMAT_VERSION: u32 = 1;

/// Sanity cap on header sizes so a corrupt header cannot trigger huge allocations.
const MAX_ELEMENTS: u64 = 1 << 32;

pub fn write_model<T: Scalar, W: Write>(model: &SoftmaxModel<T>, writer: W) -> Result<(), ClassifierError> {
    let mut w = BufWriter::new(writer);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(model.d_in() as u64).to_le_bytes())?;
    w.write_all(&(model.n_classes() as u64).to_le_bytes())?;
    for label in model.vocab().labels() {
        let bytes = label.as_bytes();
        let len = u32::try_from(bytes.len()).map_err(|_| ClassifierError::Corrupt("label too long".into()))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(bytes)?;
    }
    for v in model.weights().iter().chain(model.bias()) {
        w.write_all(&v.to_f64_exact().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ClassifierError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, ClassifierError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, ClassifierError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_model<T: Scalar, R: Read>(reader: R) -> Result<SoftmaxModel<T>, ClassifierError> {
    let mut r = reader;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ClassifierError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(ClassifierError::UnsupportedVersion(version));
    }
    let d_in = read_u64(&mut r)?;
    let k = read_u64(&mut r)?;
    if d_in == 0 || k < 2 || d_in.saturating_mul(k) > MAX_ELEMENTS {
        return Err(ClassifierError::Corrupt(format!("implausible shape K={k}, d_in={d_in}")));
    }
    let (d_in, k) = (d_in as usize, k as usize);

    let mut labels = Vec::with_capacity(k);
    for _ in 0..k {
        let len = read_u32(&mut r)? as usize;
        let mut buf = Vec::new();
        (&mut r).take(len as u64).read_to_end(&mut buf)?;
        if buf.len() != len {
            return Err(ClassifierError::Truncated);
        }
        labels.push(String::from_utf8(buf).map_err(|_| ClassifierError::Corrupt("label is not UTF-8".into()))?);
    }
    if labels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ClassifierError::Corrupt("vocabulary is not strictly sorted".into()));
    }
    let vocab = LabelVocab::new(labels)?;

    let mut weights = Vec::with_capacity(k * d_in);
    for _ in 0..k * d_in {
        weights.push(T::from_f64_lossy(read_f64(&mut r)?));
    }
    let mut bias = Vec::with_capacity(k);
    for _ in 0..k {
        bias.push(T::from_f64_lossy(read_f64(&mut r)?));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(ClassifierError::Corrupt("trailing bytes after bias".into()));
    }
    SoftmaxModel::from_parts(vocab, d_in, weights, bias)
}

pub fn save_model<T: Scalar>(model: &SoftmaxModel<T>, path: &Path) -> Result<(), ClassifierError> {
    write_model(model, File::create(path).map_err(ClassifierError::Io)?)
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<SoftmaxModel<T>, ClassifierError> {
    read_model(BufReader::new(File::open(path).map_err(ClassifierError::Io)?))
}
