//! Binary checkpoint: network shape, seed, step counter, a free-form text
//! block and any number of named `f64` arrays.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "ADDNETCK" | version u32
//! input_dim u32 | n_blocks u32 | width u32 | n_classes u32 | activation u8 | eps f64
//! seed u64 | step u64
//! meta_len u32 | meta utf-8
//! n_arrays u32 | per array: name_len u32, name, rank u32, dims u32 * rank, values f64 * len
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::Tensor;

use super::params::NetworkParams;
use super::spec::{Activation, NetworkSpec};

const MAGIC: &[u8; 8] = b"ADDNETCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub seed: u64,
    pub step: u64,
    /// Free text, typically the training configuration.
    pub meta: String,
    pub arrays: Vec<(String, Tensor)>,
}

impl Checkpoint {
    /// Network parameters plus any `extra` arrays (optimizer state).
    pub fn from_params(
        spec: NetworkSpec,
        params: &NetworkParams,
        seed: u64,
        step: u64,
        meta: String,
        extra: Vec<(String, Tensor)>,
    ) -> Self {
        let mut arrays: Vec<(String, Tensor)> = params
            .named()
            .into_iter()
            .map(|(n, _, t)| (n, t.clone()))
            .collect();
        arrays.extend(extra);
        Self {
            spec,
            seed,
            step,
            meta,
            arrays,
        }
    }

    pub fn params(&self) -> Result<NetworkParams> {
        NetworkParams::from_named(&self.spec, &self.arrays)
    }

    pub fn array(&self, name: &str) -> Option<&Tensor> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Fails with [`Error::SpecMismatch`] naming every differing field.
    pub fn expect_spec(&self, spec: &NetworkSpec) -> Result<()> {
        let d = self.spec.diff(spec);
        if d.is_empty() {
            Ok(())
        } else {
            Err(Error::SpecMismatch(d.join(", ")))
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        put_u32(&mut b, VERSION);
        put_u32(&mut b, self.spec.input_dim as u32);
        put_u32(&mut b, self.spec.n_blocks as u32);
        put_u32(&mut b, self.spec.width as u32);
        put_u32(&mut b, self.spec.n_classes as u32);
        b.push(self.spec.activation.code());
        b.extend_from_slice(&self.spec.eps.to_le_bytes());
        b.extend_from_slice(&self.seed.to_le_bytes());
        b.extend_from_slice(&self.step.to_le_bytes());
        put_u32(&mut b, self.meta.len() as u32);
        b.extend_from_slice(self.meta.as_bytes());
        put_u32(&mut b, self.arrays.len() as u32);
        for (name, t) in &self.arrays {
            put_u32(&mut b, name.len() as u32);
            b.extend_from_slice(name.as_bytes());
            put_u32(&mut b, t.rank() as u32);
            for &d in t.shape() {
                put_u32(&mut b, d as u32);
            }
            for v in t.data() {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let input_dim = r.u32()? as usize;
        let n_blocks = r.u32()? as usize;
        let width = r.u32()? as usize;
        let n_classes = r.u32()? as usize;
        let act = r.take(1)?[0];
        let activation =
            Activation::from_code(act).ok_or_else(|| Error::Format(format!("unknown activation code {act}")))?;
        let eps = r.f64()?;
        let spec = NetworkSpec {
            input_dim,
            n_blocks,
            width,
            n_classes,
            activation,
            eps,
        };
        spec.validate().map_err(|e| Error::Format(e.to_string()))?;
        let seed = r.u64()?;
        let step = r.u64()?;
        let meta_len = r.u32()? as usize;
        let meta = String::from_utf8(r.take(meta_len)?.to_vec())
            .map_err(|_| Error::Format("metadata is not utf-8".into()))?;
        let n_arrays = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(n_arrays.min(1024));
        for _ in 0..n_arrays {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Format("array name is not utf-8".into()))?;
            let rank = r.u32()? as usize;
            if rank > 3 {
                return Err(Error::Format(format!("array `{name}` has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let len: usize = shape.iter().product();
            let mut data = Vec::with_capacity(len.min(1 << 24));
            for _ in 0..len {
                data.push(r.f64()?);
            }
            arrays.push((name, Tensor::new(&shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            spec,
            seed,
            step,
            meta,
            arrays,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn put_u32(b: &mut Vec<u8>, v: u32) {
    b.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::RngStream;

    fn sample() -> Checkpoint {
        let spec = NetworkSpec::new(2, 2, 4, 3).unwrap();
        let params = NetworkParams::init(&spec, &mut RngStream::new(3));
        Checkpoint::from_params(
            spec,
            &params,
            3,
            17,
            "lr = 0.05\n".into(),
            vec![("opt.step".into(), Tensor::scalar(17.0))],
        )
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.params().unwrap(), ck.params().unwrap());
    }

    #[test]
    fn truncated_and_corrupt_inputs_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
    }

    #[test]
    fn spec_mismatch_names_fields() {
        let ck = sample();
        let mut other = ck.spec;
        other.n_blocks = 5;
        let err = ck.expect_spec(&other).unwrap_err();
        assert!(err.to_string().contains("n_blocks: 2 vs 5"), "{err}");
    }
}
