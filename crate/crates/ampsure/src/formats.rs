//! Binary `.ampop` operator files and `.ampw` weight files.
//!
//! Both are a fixed 8-byte magic, a version byte and a little-endian body.
//!
//! ```text
//! .ampop: magic "AMPSUREO" | version u8 | kind u8 | storage u8
//!         | m u64 | n u64 | width u64 | height u64 | seed u64 | rate f64
//!         | payload f64 ...
//! .ampw:  magic "AMPSUREW" | version u8 | arch u8 | sigma_lo f64
//!         | sigma_hi f64 | count u64 | weights f64 ...
//! ```
//!
//! Operator payloads: the row-major matrix (Gaussian), the phase mask as
//! `re, im` pairs followed by the selected rows (coded diffraction), or the
//! k-space mask as 0/1 (MRI). Gaussian operators above
//! [`REGENERATE_THRESHOLD`] entries whose matrix matches their seed are
//! stored without payload and regenerated on load.

use std::fs;
use std::path::Path;

use ampsure_core::learn::{Arch, TrainableDenoiser};
use ampsure_core::measure::{gaussian_matrix, MeasurementOp, OperatorKind, Payload};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const OP_MAGIC: &[u8; 8] = b"AMPSUREO";
pub const WEIGHTS_MAGIC: &[u8; 8] = b"AMPSUREW";
pub const VERSION: u8 = 1;
pub const REGENERATE_THRESHOLD: usize = 10_000_000;

const STORE_EXPLICIT: u8 = 0;
const STORE_REGENERATE: u8 = 1;
const OP_HEADER: usize = 8 + 3 + 6 * 8;
const WEIGHTS_HEADER: usize = 8 + 2 + 3 * 8;

fn kind_byte(kind: OperatorKind) -> u8 {
    match kind {
        OperatorKind::GaussianDense => 0,
        OperatorKind::CodedDiffraction => 1,
        OperatorKind::RadialFourierMri => 2,
    }
}

fn kind_from_byte(b: u8) -> Result<OperatorKind> {
    match b {
        0 => Ok(OperatorKind::GaussianDense),
        1 => Ok(OperatorKind::CodedDiffraction),
        2 => Ok(OperatorKind::RadialFourierMri),
        _ => Err(Error::Format(format!("unknown operator kind {b}"))),
    }
}

fn put_u64(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

/// Little-endian reader over a byte buffer whose length was checked up
/// front, so reads past the end are bugs rather than format errors.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn need(&self, what: &str, len: usize) -> Result<()> {
        let have = self.bytes.len() - self.pos;
        if have < len {
            return Err(Error::Format(format!(
                "truncated {what}: {} bytes missing",
                len - have
            )));
        }
        Ok(())
    }

    fn take(&mut self, len: usize) -> &'a [u8] {
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        s
    }

    fn u8(&mut self) -> u8 {
        self.take(1)[0]
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take(8).try_into().expect("8 bytes"))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()).map_err(|_| Error::Format("dimension overflows usize".into()))
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take(8).try_into().expect("8 bytes"))
    }

    fn f64s(&mut self, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.f64()).collect()
    }

    fn finish(&self) -> Result<()> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            extra => Err(Error::Format(format!("{extra} trailing bytes"))),
        }
    }
}

fn check_magic(r: &mut Reader<'_>, magic: &[u8; 8]) -> Result<()> {
    r.need("header", magic.len() + 1)?;
    if r.take(8) != magic {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = r.u8();
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}, expected {VERSION}")));
    }
    Ok(())
}

pub fn encode_op(op: &MeasurementOp) -> Vec<u8> {
    let (m, n) = (op.m(), op.n());
    let regenerate = match op.payload() {
        Payload::Dense(a) => m * n > REGENERATE_THRESHOLD && *a == gaussian_matrix(m, n, op.seed()),
        _ => false,
    };
    let mut buf = Vec::with_capacity(OP_HEADER);
    buf.extend_from_slice(OP_MAGIC);
    buf.push(VERSION);
    buf.push(kind_byte(op.kind()));
    buf.push(if regenerate { STORE_REGENERATE } else { STORE_EXPLICIT });
    for v in [m, n, op.width(), op.height()] {
        put_u64(&mut buf, v);
    }
    buf.extend_from_slice(&op.seed().to_le_bytes());
    put_f64(&mut buf, op.rate());
    if regenerate {
        return buf;
    }
    match op.payload() {
        Payload::Dense(a) => a.iter().for_each(|&v| put_f64(&mut buf, v)),
        Payload::Cdp { phases, rows } => {
            for p in phases {
                put_f64(&mut buf, p.re);
                put_f64(&mut buf, p.im);
            }
            rows.iter().for_each(|&r| put_f64(&mut buf, r as f64));
        }
        Payload::Mask(mask) => mask.iter().for_each(|&b| put_f64(&mut buf, if b { 1.0 } else { 0.0 })),
    }
    buf
}

pub fn decode_op(bytes: &[u8]) -> Result<MeasurementOp> {
    let mut r = Reader::new(bytes);
    check_magic(&mut r, OP_MAGIC)?;
    r.need("header", OP_HEADER - 9)?;
    let kind = kind_from_byte(r.u8())?;
    let storage = r.u8();
    let (m, n, width, height) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    let seed = r.u64();
    let rate = r.f64();
    let floats = |count: Option<usize>| count.ok_or_else(|| Error::Format("payload size overflows".into()));
    let payload = match (kind, storage) {
        (OperatorKind::GaussianDense, STORE_REGENERATE) => {
            let count = floats(m.checked_mul(n))?;
            if count <= REGENERATE_THRESHOLD {
                return Err(Error::Format("regenerated storage below the size threshold".into()));
            }
            Payload::Dense(gaussian_matrix(m, n, seed))
        }
        (_, STORE_REGENERATE) => return Err(Error::Format("only Gaussian operators can be regenerated".into())),
        (_, STORE_EXPLICIT) => {
            let count = match kind {
                OperatorKind::GaussianDense => floats(m.checked_mul(n))?,
                OperatorKind::CodedDiffraction => floats(n.checked_mul(2).and_then(|v| v.checked_add(m)))?,
                OperatorKind::RadialFourierMri => n,
            };
            r.need("payload", floats(count.checked_mul(8))?)?;
            match kind {
                OperatorKind::GaussianDense => Payload::Dense(r.f64s(count)),
                OperatorKind::CodedDiffraction => {
                    let phases = (0..n).map(|_| Complex64::new(r.f64(), r.f64())).collect();
                    let rows = r.f64s(m).into_iter().map(|v| v as usize).collect();
                    Payload::Cdp { phases, rows }
                }
                OperatorKind::RadialFourierMri => Payload::Mask(r.f64s(n).into_iter().map(|v| v != 0.0).collect()),
            }
        }
        (_, s) => return Err(Error::Format(format!("unknown storage mode {s}"))),
    };
    r.finish()?;
    Ok(MeasurementOp::from_parts(kind, m, n, width, height, rate, seed, payload)?)
}

pub fn save_op(op: &MeasurementOp, path: &Path) -> Result<()> {
    fs::write(path, encode_op(op)).map_err(Error::io(path))
}

pub fn load_op(path: &Path) -> Result<MeasurementOp> {
    decode_op(&fs::read(path).map_err(Error::io(path))?)
}

pub fn encode_weights(d: &TrainableDenoiser) -> Vec<u8> {
    let (lo, hi) = d.sigma_range();
    let mut buf = Vec::with_capacity(WEIGHTS_HEADER + 8 * d.weights().len());
    buf.extend_from_slice(WEIGHTS_MAGIC);
    buf.push(VERSION);
    buf.push(d.arch().tag());
    put_f64(&mut buf, lo);
    put_f64(&mut buf, hi);
    put_u64(&mut buf, d.weights().len());
    d.weights().iter().for_each(|&w| put_f64(&mut buf, w));
    buf
}

pub fn decode_weights(bytes: &[u8]) -> Result<TrainableDenoiser> {
    let mut r = Reader::new(bytes);
    check_magic(&mut r, WEIGHTS_MAGIC)?;
    r.need("header", WEIGHTS_HEADER - 9)?;
    let tag = r.u8();
    let arch = Arch::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown architecture tag {tag}")))?;
    let (lo, hi) = (r.f64(), r.f64());
    let count = r.usize()?;
    if count != arch.weight_count() {
        return Err(Error::Format(format!(
            "{arch:?} has {} weights, file declares {count}",
            arch.weight_count()
        )));
    }
    r.need("weights", count * 8)?;
    let weights = r.f64s(count);
    r.finish()?;
    Ok(TrainableDenoiser::from_weights(arch, weights, (lo, hi))?)
}

pub fn save_weights(d: &TrainableDenoiser, path: &Path) -> Result<()> {
    fs::write(path, encode_weights(d)).map_err(Error::io(path))
}

pub fn load_weights(path: &Path) -> Result<TrainableDenoiser> {
    decode_weights(&fs::read(path).map_err(Error::io(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ampsure_core::measure::{make_cdp_op, make_gaussian_op, make_mri_op};

    #[test]
    fn header_sizes() {
        let op = make_gaussian_op(2, 3, 1).unwrap();
        assert_eq!(encode_op(&op).len(), OP_HEADER + 6 * 8);
        let w = TrainableDenoiser::learned_shrinkage(1.0, 55.0).unwrap();
        assert_eq!(encode_weights(&w).len(), WEIGHTS_HEADER + 16 * 8);
    }

    #[test]
    fn fourier_round_trip() {
        for op in [make_cdp_op(8, 6, 0.5, 2).unwrap(), make_mri_op(16, 16, 0.4, 3).unwrap()] {
            let back = decode_op(&encode_op(&op)).unwrap();
            assert_eq!(back.payload(), op.payload());
            assert_eq!((back.m(), back.n(), back.width(), back.height()), (op.m(), op.n(), op.width(), op.height()));
            assert_eq!(back.rate().to_bits(), op.rate().to_bits());
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_op(&make_gaussian_op(2, 2, 0).unwrap());
        bytes.push(0);
        assert!(matches!(decode_op(&bytes), Err(Error::Format(_))));
    }
}
