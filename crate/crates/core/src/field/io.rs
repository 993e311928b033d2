// FMGF tensor records, all integers and floats little-endian:
//
//   "FMGF" | version u32 | K H W D u32 | resolution f64 | origin 3×f64
//   | K × (name length u32, ASCII name) | K·H·W·D × f32 (channel-major, x-major)
//
// A file is a plain concatenation of records.

use super::{Channel, FieldError, FieldLayout, FieldTensor, GridSpec};
use std::io::{self, Read, Write};

pub const FMGF_MAGIC: &[u8; 4] = b"FMGF";
pub const FMGF_VERSION: u32 = 1;

pub fn write_fmgf<W: Write>(mut w: W, fields: &[FieldTensor]) -> io::Result<()> {
    for f in fields {
        let spec = f.spec();
        let dims = spec.dims();
        w.write_all(FMGF_MAGIC)?;
        w.write_all(&FMGF_VERSION.to_le_bytes())?;
        for v in [f.channels().len(), dims[0], dims[1], dims[2]] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&spec.resolution().to_le_bytes())?;
        for o in spec.origin() {
            w.write_all(&o.to_le_bytes())?;
        }
        for c in f.channels() {
            let name = c.name();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
        }
        let mut buf = Vec::with_capacity(f.len() * 4);
        for &v in f.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 if filled == 0 => return Ok(false),
            0 => return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated FMGF record")),
            n => filled += n,
        }
    }
    Ok(true)
}

fn u32_le<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn f64_le<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Reads every record until end of input.
pub fn read_fmgf<R: Read>(mut r: R) -> Result<Vec<FieldTensor>, FieldError> {
    let mut out = Vec::new();
    loop {
        let mut magic = [0u8; 4];
        if !read_exact_or_eof(&mut r, &mut magic)? {
            return Ok(out);
        }
        if &magic != FMGF_MAGIC {
            return Err(FieldError::Format(format!("bad magic {magic:?} in record {}", out.len())));
        }
        let version = u32_le(&mut r)?;
        if version != FMGF_VERSION {
            return Err(FieldError::Format(format!("unsupported version {version}")));
        }
        let k = u32_le(&mut r)? as usize;
        let dims = [u32_le(&mut r)? as usize, u32_le(&mut r)? as usize, u32_le(&mut r)? as usize];
        let resolution = f64_le(&mut r)?;
        let origin = [f64_le(&mut r)?, f64_le(&mut r)?, f64_le(&mut r)?];
        let spec = GridSpec::new(dims, resolution, origin)?;
        let mut channels = Vec::with_capacity(k);
        for _ in 0..k {
            let len = u32_le(&mut r)? as usize;
            if len > 64 {
                return Err(FieldError::Format(format!("channel name of length {len}")));
            }
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| FieldError::Format("non-ASCII channel name".into()))?;
            channels.push(Channel::parse(&name).ok_or_else(|| FieldError::Format(format!("unknown channel {name:?}")))?);
        }
        let layout = FieldLayout::new(spec, channels);
        let mut raw = vec![0u8; layout.len() * 4];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        out.push(FieldTensor::from_vec(layout, data)?);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{grid_default, DatasetKind};

    fn sample_field() -> FieldTensor {
        let spec = GridSpec::new([2, 3, 4], 0.5, [-1.0, 0.25, 3.0]).unwrap();
        let layout = FieldLayout::qm9(spec);
        let data = (0..layout.len()).map(|i| i as f64 * 0.125 - 3.0).collect();
        FieldTensor::from_vec(layout, data).unwrap()
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let f = sample_field();
        let mut bytes = Vec::new();
        write_fmgf(&mut bytes, &[f.clone()]).unwrap();
        assert_eq!(&bytes[0..4], b"FMGF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 4);
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 0.5);
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), -1.0);
        assert_eq!(u32::from_le_bytes(bytes[56..60].try_into().unwrap()), 1);
        assert_eq!(&bytes[60..61], b"H");
        let names_len: usize = f.channels().iter().map(|c| 4 + c.name().len()).sum();
        let payload = 56 + names_len;
        assert_eq!(bytes.len(), payload + f.len() * 4);
        // first value, channel 0 voxel (0,0,0); second value, voxel (0,0,1)
        assert_eq!(f32::from_le_bytes(bytes[payload..payload + 4].try_into().unwrap()), -3.0);
        assert_eq!(f32::from_le_bytes(bytes[payload + 4..payload + 8].try_into().unwrap()), -2.875);
    }

    #[test]
    fn concatenated_records_round_trip() {
        let a = sample_field();
        let b = FieldTensor::zeros(FieldLayout::geom(grid_default(DatasetKind::Toy { dims: [3, 3, 3] })));
        let mut bytes = Vec::new();
        write_fmgf(&mut bytes, &[a.clone(), b.clone()]).unwrap();
        let back = read_fmgf(bytes.as_slice()).unwrap();
        assert_eq!(back, vec![a, b]);
        assert!(read_fmgf(&[][..]).unwrap().is_empty());
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let mut bytes = Vec::new();
        write_fmgf(&mut bytes, &[sample_field()]).unwrap();
        assert!(read_fmgf(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_fmgf(bad.as_slice()), Err(FieldError::Format(_))));
    }
}
