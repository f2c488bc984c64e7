//! KTEN tensor container.
//!
//! ```text
//! "KTEN" | version u8 = 1 | dtype u8 (0 real, 1 complex) | ndim u8 | ndim x u32 LE dims | f64 LE payload
//! ```
//!
//! Complex payloads interleave (re, im). Files are written to a temporary
//! name in the target directory and renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::autodiff::RealTensor;
use crate::error::{KunnError, Result};
use crate::kspace::ComplexTensor;

pub const MAGIC: &[u8; 4] = b"KTEN";
pub const VERSION: u8 = 1;
const HEADER_FIXED: usize = 7;

#[derive(Clone, Debug, PartialEq)]
pub enum Kten {
    Real(RealTensor),
    Complex(ComplexTensor),
}

impl Kten {
    pub fn shape(&self) -> &[usize] {
        match self {
            Kten::Real(t) => t.shape(),
            Kten::Complex(t) => t.shape(),
        }
    }

    pub fn into_real(self) -> Result<RealTensor> {
        match self {
            Kten::Real(t) => Ok(t),
            Kten::Complex(_) => Err(KunnError::Format("expected a real tensor, found complex".into())),
        }
    }

    pub fn into_complex(self) -> Result<ComplexTensor> {
        match self {
            Kten::Complex(t) => Ok(t),
            Kten::Real(_) => Err(KunnError::Format("expected a complex tensor, found real".into())),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (dtype, shape) = match self {
            Kten::Real(t) => (0u8, t.shape()),
            Kten::Complex(t) => (1u8, t.shape()),
        };
        if shape.len() > u8::MAX as usize {
            return Err(KunnError::Format(format!("{} dimensions do not fit the header", shape.len())));
        }
        let count: usize = shape.iter().product();
        let mut out = Vec::with_capacity(HEADER_FIXED + 4 * shape.len() + 8 * (1 + dtype as usize) * count);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(dtype);
        out.push(shape.len() as u8);
        for &d in shape {
            let d = u32::try_from(d).map_err(|_| KunnError::Format(format!("dimension {d} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        match self {
            Kten::Real(t) => t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            Kten::Complex(t) => t.data().iter().for_each(|c| {
                out.extend_from_slice(&c.re.to_le_bytes());
                out.extend_from_slice(&c.im.to_le_bytes());
            }),
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_FIXED || &bytes[..4] != MAGIC {
            return Err(KunnError::Format("missing KTEN magic".into()));
        }
        if bytes[4] != VERSION {
            return Err(KunnError::Format(format!("unsupported version {}", bytes[4])));
        }
        let dtype = bytes[5];
        if dtype > 1 {
            return Err(KunnError::Format(format!("unknown dtype {dtype}")));
        }
        let ndim = bytes[6] as usize;
        let payload_at = HEADER_FIXED + 4 * ndim;
        if bytes.len() < payload_at {
            return Err(KunnError::Format("truncated header".into()));
        }
        let shape: Vec<usize> = bytes[HEADER_FIXED..payload_at]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("chunk of 4")) as usize)
            .collect();
        let count = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let expected = count.and_then(|c| c.checked_mul(8 * (1 + dtype as usize)));
        let payload = &bytes[payload_at..];
        if expected != Some(payload.len()) {
            return Err(KunnError::Format(format!(
                "payload of {} bytes does not match dims {shape:?}",
                payload.len()
            )));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        if dtype == 0 {
            Ok(Kten::Real(RealTensor::new(shape, values)?))
        } else {
            let data = values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
            Ok(Kten::Complex(ComplexTensor::new(shape, data)?))
        }
    }
}

/// Writes `bytes` to a temporary sibling of `path` and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| KunnError::invalid(format!("'{}' has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_kten(path: &Path, t: &Kten) -> Result<()> {
    write_atomic(path, &t.to_bytes()?)
}

pub fn write_real(path: &Path, t: &RealTensor) -> Result<()> {
    write_kten(path, &Kten::Real(t.clone()))
}

pub fn write_complex(path: &Path, t: &ComplexTensor) -> Result<()> {
    write_kten(path, &Kten::Complex(t.clone()))
}

pub fn read_kten(path: &Path) -> Result<Kten> {
    let bytes = fs::read(path).map_err(|e| {
        KunnError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    Kten::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = Kten::Real(RealTensor::new(vec![2, 3], vec![0.0; 6]).unwrap());
        let b = t.to_bytes().unwrap();
        assert_eq!(&b[..7], b"KTEN\x01\x00\x02");
        assert_eq!(&b[7..15], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(b.len(), 15 + 48);
    }

    #[test]
    fn rejects_bad_payload() {
        let mut b = Kten::Complex(ComplexTensor::zeros(&[2])).to_bytes().unwrap();
        b.pop();
        assert!(Kten::from_bytes(&b).is_err());
        assert!(Kten::from_bytes(b"KTEX\x01\x00\x00").is_err());
    }
}
