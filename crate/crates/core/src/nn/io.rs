//! Model file: `ARCNET` magic, u16 format version, variant byte, the
//! architecture, a shape table, the parameters as f64, then a SHA-256 of
//! everything before it. All integers little-endian.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::net::{ArcaneNet, ConvSpec, NetConfig, Variant};
use super::NnError;

const MAGIC: &[u8; 6] = b"ARCNET";
pub const FORMAT_VERSION: u16 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn to_bytes(net: &ArcaneNet) -> Vec<u8> {
    let cfg = net.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(cfg.variant.code());
    for v in [cfg.in_channels, cfg.global_dims.0, cfg.global_dims.1, cfg.local_dims.0, cfg.local_dims.1] {
        put_u32(&mut out, v);
    }
    for stack in [&cfg.conv_g, &cfg.conv_l] {
        put_u32(&mut out, stack.len());
        for s in stack.iter() {
            put_u32(&mut out, s.channels);
            put_u32(&mut out, s.kernel);
            put_u32(&mut out, s.stride);
        }
    }
    for v in [cfg.proj, cfg.hidden, cfg.actions] {
        put_u32(&mut out, v);
    }
    let params = net.params();
    put_u32(&mut out, params.len());
    for p in &params {
        put_u32(&mut out, p.shape().len());
        for &e in p.shape() {
            put_u32(&mut out, e);
        }
    }
    for p in &params {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], NnError> {
        let s = self.buf.get(self.pos..self.pos + n).ok_or(NnError::Format("unexpected end of data".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

/// Parses a model, optionally insisting on a variant.
pub fn from_bytes(bytes: &[u8], expected: Option<Variant>) -> Result<ArcaneNet, NnError> {
    if bytes.len() < 32 {
        return Err(NnError::Checksum);
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(NnError::Checksum);
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(6)? != MAGIC {
        return Err(NnError::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
    if version != FORMAT_VERSION {
        return Err(NnError::UnsupportedVersion(version));
    }
    let code = r.take(1)?[0];
    let variant = Variant::from_code(code).ok_or(NnError::Format(format!("unknown variant byte {code}")))?;
    if let Some(want) = expected {
        if want != variant {
            return Err(NnError::VariantMismatch { expected: want, found: variant });
        }
    }
    let in_channels = r.u32()?;
    let global_dims = (r.u32()?, r.u32()?);
    let local_dims = (r.u32()?, r.u32()?);
    let mut stacks = Vec::new();
    for _ in 0..2 {
        let n = r.u32()?;
        let mut s = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            s.push(ConvSpec::new(r.u32()?, r.u32()?, r.u32()?));
        }
        stacks.push(s);
    }
    let conv_l = stacks.pop().expect("two stacks");
    let conv_g = stacks.pop().expect("two stacks");
    let (proj, hidden, actions) = (r.u32()?, r.u32()?, r.u32()?);
    let config = NetConfig { variant, in_channels, global_dims, local_dims, conv_g, conv_l, proj, hidden, actions };
    let mut net = ArcaneNet::zeros(config)?;
    let count = r.u32()?;
    let mut shapes = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let rank = r.u32()?;
        let mut s = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            s.push(r.u32()?);
        }
        shapes.push(s);
    }
    let declared: Vec<Vec<usize>> = net.params().iter().map(|p| p.shape().to_vec()).collect();
    if shapes != declared {
        return Err(NnError::ShapeMismatch {
            what: "shape table".into(),
            expected: declared.iter().map(|s| s.iter().product()).collect(),
            found: shapes.iter().map(|s| s.iter().product()).collect(),
        });
    }
    for p in net.params_mut() {
        for v in p.data_mut() {
            *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        }
    }
    if r.pos != body.len() {
        return Err(NnError::Format("trailing bytes after parameters".into()));
    }
    Ok(net)
}

impl ArcaneNet {
    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        std::fs::write(path, to_bytes(self))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ArcaneNet, NnError> {
        from_bytes(&std::fs::read(path)?, None)
    }

    pub fn load_variant(path: &Path, variant: Variant) -> Result<ArcaneNet, NnError> {
        from_bytes(&std::fs::read(path)?, Some(variant))
    }
}
