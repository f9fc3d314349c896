//! Flat little-endian parameter blobs.
//!
//! Layout: magic `EDPN`, u32 version, u32 input_dim, u32 output_dim,
//! u32 depth, u32 width, u8 activation, u8 transform kind, u32 transform
//! value count then that many f64, u32 box length then `lo` and `hi` f64s,
//! u64 parameter count, then the parameters as f64.

use std::io::{Read, Write};
use std::path::Path;

use super::{Activation, MlpArchitecture, OutputTransform, ParamVector};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EDPN";
const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_blob<W: Write>(mut w: W, params: &ParamVector) -> std::io::Result<()> {
    let a = &params.arch;
    let mut out = Vec::with_capacity(64 + 8 * params.values.len());
    out.extend_from_slice(MAGIC);
    for v in [VERSION, a.input_dim as u32, a.output_dim as u32, a.depth as u32, a.width as u32] {
        put_u32(&mut out, v);
    }
    out.push(match a.activation {
        Activation::Tanh => 0,
        Activation::Sin => 1,
    });
    let (kind, extra) = match &a.transform {
        OutputTransform::None => (0u8, Vec::new()),
        OutputTransform::EikonalTime { anchor } => (1, anchor.clone()),
        OutputTransform::AbsOffset { offset } => (2, vec![*offset]),
    };
    out.push(kind);
    put_u32(&mut out, extra.len() as u32);
    put_f64s(&mut out, &extra);
    put_u32(&mut out, a.input_lo.len() as u32);
    put_f64s(&mut out, &a.input_lo);
    put_f64s(&mut out, &a.input_hi);
    out.extend_from_slice(&(params.values.len() as u64).to_le_bytes());
    put_f64s(&mut out, &params.values);
    w.write_all(&out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("parameter blob truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn read_blob<R: Read>(mut r: R) -> Result<ParamVector> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::Format(e.to_string()))?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Format("bad parameter blob magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported blob version {version}")));
    }
    let input_dim = c.u32()? as usize;
    let output_dim = c.u32()? as usize;
    let depth = c.u32()? as usize;
    let width = c.u32()? as usize;
    let activation = match c.u8()? {
        0 => Activation::Tanh,
        1 => Activation::Sin,
        k => return Err(Error::Format(format!("unknown activation tag {k}"))),
    };
    let kind = c.u8()?;
    let n_extra = c.u32()? as usize;
    let extra = c.f64s(n_extra)?;
    let transform = match (kind, extra.len()) {
        (0, 0) => OutputTransform::None,
        (1, _) => OutputTransform::EikonalTime { anchor: extra },
        (2, 1) => OutputTransform::AbsOffset { offset: extra[0] },
        _ => return Err(Error::Format(format!("bad output transform tag {kind}"))),
    };
    let nb = c.u32()? as usize;
    let input_lo = c.f64s(nb)?;
    let input_hi = c.f64s(nb)?;
    let arch = MlpArchitecture { input_dim, output_dim, depth, width, activation, transform, input_lo, input_hi };
    let count = c.u64()? as usize;
    if count != arch.param_count() {
        return Err(Error::Format(format!(
            "blob holds {count} parameters, architecture needs {}",
            arch.param_count()
        )));
    }
    let values = c.f64s(count)?;
    if c.pos != buf.len() {
        return Err(Error::Format("trailing bytes after parameter blob".into()));
    }
    Ok(ParamVector { arch, values })
}

pub fn write_blob_file(path: &Path, params: &ParamVector) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_blob(std::io::BufWriter::new(f), params).map_err(|e| Error::io(path, e))
}

pub fn read_blob_file(path: &Path) -> Result<ParamVector> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_blob(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_params;

    #[test]
    fn roundtrip_preserves_bits() {
        let arch = MlpArchitecture::new(2, 1, 6, 8, Activation::Tanh)
            .with_transform(OutputTransform::EikonalTime { anchor: vec![0.0, 0.0] })
            .with_input_box(&[0.0, 0.0], &[5.0, 5.0]);
        let p = init_params(&arch, 9);
        let mut buf = Vec::new();
        write_blob(&mut buf, &p).unwrap();
        assert_eq!(&buf[..4], b"EDPN");
        let q = read_blob(&buf[..]).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let arch = MlpArchitecture::new(1, 1, 1, 3, Activation::Sin)
            .with_transform(OutputTransform::AbsOffset { offset: 0.2 });
        let mut buf = Vec::new();
        write_blob(&mut buf, &init_params(&arch, 1)).unwrap();
        assert!(read_blob(&buf[..buf.len() - 3]).is_err());
        buf[0] = b'X';
        assert!(read_blob(&buf[..]).is_err());
    }
}
