use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::layers::Layer;
use crate::models::spec::{build_structure, Head, ModelInput, ModelParams, ModelSpec, Variant};

pub const MAGIC: &[u8; 4] = b"OSEN";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidArgument(alloc::format!("{} does not fit in 32 bits", v)))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

/// Serialises a model: magic, version, spec record, input scale, then each
/// parameter tensor as rank, extents and little-endian doubles, followed by
/// a CRC-32 of everything before it.
pub fn encode_params(p: &ModelParams) -> Result<Vec<u8>> {
    let s = &p.spec;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(match s.variant {
        Variant::Osen1 => 1,
        Variant::Osen2 => 2,
    });
    put_u32(&mut out, s.order)?;
    match s.input {
        ModelInput::Image { channels, height, width } => {
            out.push(0);
            for v in [channels, height, width] {
                put_u32(&mut out, v)?;
            }
        }
        ModelInput::Measurements { m, height, width } => {
            out.push(1);
            for v in [m, height, width] {
                put_u32(&mut out, v)?;
            }
        }
    }
    for v in [s.hidden.0, s.hidden.1, s.kernel] {
        put_u32(&mut out, v)?;
    }
    match s.head {
        Head::Segmentation => {
            out.push(0);
            put_u32(&mut out, 0)?;
            put_u32(&mut out, 0)?;
        }
        Head::Hybrid { group_h, group_w } => {
            out.push(1);
            put_u32(&mut out, group_h)?;
            put_u32(&mut out, group_w)?;
        }
    }
    out.extend_from_slice(&p.input_scale.to_le_bytes());
    let tensors = p.network.tensors();
    put_u32(&mut out, tensors.len())?;
    for t in tensors {
        put_u32(&mut out, t.rank())?;
        for &d in t.shape() {
            put_u32(&mut out, d)?;
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Decode(alloc::format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Inverse of [`encode_params`].
pub fn decode_params(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < 12 {
        return Err(Error::Decode("file too short".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Decode("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Decode(alloc::format!("unsupported format version {}", version)));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader { buf: body, pos: 8 };
    let variant = match r.u8()? {
        1 => Variant::Osen1,
        2 => Variant::Osen2,
        v => return Err(Error::Decode(alloc::format!("unknown variant tag {}", v))),
    };
    let order = r.u32()?;
    let input = match r.u8()? {
        0 => ModelInput::Image { channels: r.u32()?, height: r.u32()?, width: r.u32()? },
        1 => ModelInput::Measurements { m: r.u32()?, height: r.u32()?, width: r.u32()? },
        v => return Err(Error::Decode(alloc::format!("unknown input tag {}", v))),
    };
    let hidden = (r.u32()?, r.u32()?);
    let kernel = r.u32()?;
    let head = match (r.u8()?, r.u32()?, r.u32()?) {
        (0, _, _) => Head::Segmentation,
        (1, group_h, group_w) => Head::Hybrid { group_h, group_w },
        (v, _, _) => return Err(Error::Decode(alloc::format!("unknown head tag {}", v))),
    };
    let spec = ModelSpec { variant, order, input, hidden, kernel, head };
    let mut params = build_structure(&spec).map_err(|e| Error::Decode(alloc::format!("invalid spec record: {}", e)))?;
    params.input_scale = r.f64()?;
    let count = r.u32()?;
    let mut tensors = params.network.tensors_mut();
    if count != tensors.len() {
        return Err(Error::Decode(alloc::format!("{} tensors stored, architecture has {}", count, tensors.len())));
    }
    for (i, t) in tensors.iter_mut().enumerate() {
        let rank = r.u32()?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()?);
        }
        if shape != t.shape() {
            return Err(Error::Decode(alloc::format!("tensor {} stored as {:?}, expected {:?}", i, shape, t.shape())));
        }
        for v in t.data_mut() {
            *v = r.f64()?;
        }
    }
    drop(tensors);
    if r.pos != body.len() {
        return Err(Error::Decode("trailing bytes".into()));
    }
    if let Some((i, _)) = params.network.layers().iter().enumerate().find(|(_, l)| match l {
        Layer::Operational(p) | Layer::TransposedOperational(p) => p.ensure_finite().is_err(),
        _ => false,
    }) {
        return Err(Error::NonFinite(alloc::format!("stored layer {}", i)));
    }
    Ok(params)
}

/// Decodes and checks that the stored spec equals `expected`.
pub fn decode_params_for(bytes: &[u8], expected: &ModelSpec) -> Result<ModelParams> {
    let p = decode_params(bytes)?;
    if p.spec != *expected {
        return Err(Error::SpecMismatch(alloc::format!("file holds {:?}, expected {:?}", p.spec, expected)));
    }
    Ok(p)
}
