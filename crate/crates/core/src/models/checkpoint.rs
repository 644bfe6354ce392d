//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    b"FLOWCKPT"
//! version  u32 (= 1)
//! arch     str          model tag, e.g. "transformer"
//! hidden   u64
//! heads    u64
//! d_model  u64
//! ffn      u64
//! policy   str          "persistence" | "zero_pad"
//! seed     u64
//! count    u32          number of parameter tensors
//! count x { name str, ndim u32, dims u64 x ndim, values f64 x prod(dims) }
//! ```
//!
//! `str` is a `u32` byte length followed by UTF-8 bytes. Values are stored as
//! raw IEEE-754 bits, so a round trip is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{build_network, ArchSpec, Architecture, Network};
use crate::autodiff::{ParamStore, Tensor};
use crate::data::ExtensionPolicy;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FLOWCKPT";
const VERSION: u32 = 1;
/// Upper bound on any length field, guarding against corrupt headers.
const MAX_LEN: u64 = 1 << 32;

/// Architecture descriptor plus named parameter tensors.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub spec: ArchSpec,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn from_network(net: &dyn Network) -> Self {
        let mut params = ParamStore::new();
        for (name, value) in net.params().iter() {
            params.add(name, value.clone());
        }
        Self {
            spec: net.spec().clone(),
            params,
        }
    }

    /// Rebuilds the network described by the header and loads every tensor.
    pub fn into_network(self) -> Result<Box<dyn Network>> {
        let mut net = build_network(&self.spec)?;
        let store = net.params_mut();
        if store.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors stored, {} expected for {}",
                self.params.len(),
                store.len(),
                self.spec.arch
            )));
        }
        for (name, value) in self.params.iter() {
            store
                .set(name, value.clone())
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(net)
    }
}

pub fn write_checkpoint(w: &mut impl Write, spec: &ArchSpec, params: &ParamStore) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + params.num_scalars() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut buf, spec.arch.tag());
    for v in [spec.hidden, spec.heads, spec.d_model, spec.ffn] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    put_str(&mut buf, spec.policy.as_str());
    buf.extend_from_slice(&spec.seed.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, value) in params.iter() {
        put_str(&mut buf, name);
        buf.extend_from_slice(&(value.shape().len() as u32).to_le_bytes());
        for &d in value.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for x in value.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&buf)
        .map_err(|e| Error::Checkpoint(format!("write failed: {e}")))
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint> {
    let mut rd = Reader(r);
    let mut magic = [0u8; 8];
    rd.fill(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = rd.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let arch = Architecture::parse(&rd.string()?).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let hidden = rd.usize()?;
    let heads = rd.usize()?;
    let d_model = rd.usize()?;
    let ffn = rd.usize()?;
    let policy_tag = rd.string()?;
    let policy = ExtensionPolicy::parse(&policy_tag)
        .ok_or_else(|| Error::Checkpoint(format!("unknown extension policy `{policy_tag}`")))?;
    let seed = rd.u64()?;
    let spec = ArchSpec {
        arch,
        hidden,
        heads,
        d_model,
        ffn,
        policy,
        seed,
    };
    let count = rd.u32()?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name = rd.string()?;
        let ndim = rd.u32()? as usize;
        let shape = (0..ndim).map(|_| rd.usize()).collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
            .filter(|&n| n < MAX_LEN)
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` has implausible shape {shape:?}")))?;
        let mut raw = vec![0u8; len as usize * 8];
        rd.fill(&mut raw)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        let tensor = Tensor::new(&shape, data).map_err(|e| Error::Checkpoint(format!("`{name}`: {e}")))?;
        if params.find(&name).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor `{name}`")));
        }
        params.add(name, tensor);
    }
    let mut tail = [0u8; 1];
    if rd.0.read(&mut tail).map_err(read_err)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(Checkpoint { spec, params })
}

pub fn save_checkpoint(path: &Path, spec: &ArchSpec, params: &ParamStore) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, spec, params)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(file))
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

fn read_err(e: std::io::Error) -> Error {
    Error::Checkpoint(format!("truncated or unreadable: {e}"))
}

struct Reader<'a, R: Read>(&'a mut R);

impl<R: Read> Reader<'_, R> {
    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.0.read_exact(buf).map_err(read_err)
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        if v >= MAX_LEN {
            return Err(Error::Checkpoint(format!("length field {v} out of range")));
        }
        Ok(v as usize)
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        if len > 4096 {
            return Err(Error::Checkpoint(format!("string of {len} bytes in header")));
        }
        let mut b = vec![0u8; len];
        self.fill(&mut b)?;
        String::from_utf8(b).map_err(|_| Error::Checkpoint("non-UTF-8 name".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(spec: &ArchSpec) -> (Box<dyn Network>, Box<dyn Network>) {
        let net = build_network(spec).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, net.spec(), net.params()).unwrap();
        let back = read_checkpoint(&mut buf.as_slice()).unwrap().into_network().unwrap();
        (net, back)
    }

    #[test]
    fn every_architecture_roundtrips_bit_exactly() {
        for arch in &Architecture::ALL[1..] {
            let spec = ArchSpec::new(*arch, 11);
            let (a, b) = roundtrip(&spec);
            assert_eq!(a.spec(), b.spec());
            for ((na, ta), (nb, tb)) in a.params().iter().zip(b.params().iter()) {
                assert_eq!(na, nb);
                assert_eq!(ta.shape(), tb.shape());
                let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(ta), bits(tb));
            }
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let net = build_network(&ArchSpec::new(Architecture::Gru, 1)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, net.spec(), net.params()).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(&mut bad.as_slice()), Err(Error::Checkpoint(_))));
        let cut = &buf[..buf.len() - 3];
        assert!(matches!(read_checkpoint(&mut &cut[..]), Err(Error::Checkpoint(_))));
        let mut extra = buf;
        extra.push(0);
        assert!(matches!(read_checkpoint(&mut extra.as_slice()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn rejects_layout_mismatch() {
        let net = build_network(&ArchSpec::new(Architecture::Gru, 1)).unwrap();
        let mut spec = net.spec().clone();
        spec.arch = Architecture::Lstm;
        let ckpt = Checkpoint {
            spec,
            params: net.params().clone(),
        };
        assert!(matches!(ckpt.into_network(), Err(Error::Checkpoint(_))));
    }
}
