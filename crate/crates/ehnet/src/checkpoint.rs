//! Binary checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "EHN1"  version: u32  header_len: u32  header: UTF-8 `key = value` lines
//! repeated until end of file:
//!   name_len: u16  name  rank: u8  dims: u32 * rank  data: f32 * prod(dims)
//! ```
//!
//! The header always carries the architecture and STFT keys of
//! [`crate::config::model_text`]; other keys are free-form metadata. Model
//! tensors use the names from [`ModelParams::tensors`]. Optimizer
//! accumulators, when present, are stored as `adadelta.sq_grad/<name>` and
//! `adadelta.sq_delta/<name>`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use ehnet_core::dsp::StftConfig;
use ehnet_core::model::{Architecture, ModelParams};
use ehnet_core::training::AdaDelta;

use crate::config::{model_text, parse_kv, set_model_key};
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"EHN1";
pub const VERSION: u32 = 1;

const MODEL_KEYS: [&str; 10] = [
    "bins",
    "kernels",
    "kernel_height",
    "kernel_width",
    "freq_stride",
    "hidden_sizes",
    "fft_size",
    "hop_size",
    "window",
    "bins_kept",
];
const SQ_GRAD: &str = "adadelta.sq_grad/";
const SQ_DELTA: &str = "adadelta.sq_delta/";

/// Saved AdaDelta accumulators in parameter-tensor order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerTensors {
    pub sq_grad: Vec<Vec<f32>>,
    pub sq_delta: Vec<Vec<f32>>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub stft: StftConfig,
    pub meta: BTreeMap<String, String>,
    pub optimizer: Option<OptimizerTensors>,
}

impl Checkpoint {
    pub fn new(params: ModelParams<f32>, stft: StftConfig) -> Self {
        Self {
            params,
            stft,
            meta: BTreeMap::new(),
            optimizer: None,
        }
    }

    pub fn with_optimizer(mut self, opt: &AdaDelta<f32>) -> Self {
        self.optimizer = Some(OptimizerTensors {
            sq_grad: opt.sq_grad().to_vec(),
            sq_delta: opt.sq_delta().to_vec(),
        });
        self
    }

    pub fn meta_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.meta
            .get(key)
            .map(|v| {
                v.parse().map_err(|_| {
                    Error::parse("checkpoint header", format!("bad value `{v}` for `{key}`"))
                })
            })
            .transpose()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut header = model_text(self.params.architecture(), &self.stft);
        for (k, v) in &self.meta {
            header.push_str(&format!("{k} = {v}\n"));
        }
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        let tensors = self.params.tensors();
        for t in &tensors {
            write_tensor(&mut out, &t.name, &t.shape, t.data);
        }
        if let Some(opt) = &self.optimizer {
            for (prefix, acc) in [(SQ_GRAD, &opt.sq_grad), (SQ_DELTA, &opt.sq_delta)] {
                for (t, data) in tensors.iter().zip(acc) {
                    write_tensor(&mut out, &format!("{prefix}{}", t.name), &t.shape, data);
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(bad("not an EHN1 checkpoint"));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let header_len = cur.u32()? as usize;
        let header =
            std::str::from_utf8(cur.take(header_len)?).map_err(|_| bad("header is not UTF-8"))?;

        let mut arch = Architecture::tiny();
        let mut stft = StftConfig::default();
        let mut meta = BTreeMap::new();
        let mut seen = Vec::new();
        for (k, v) in parse_kv(header, "checkpoint header")? {
            if set_model_key(&mut arch, &mut stft, &k, &v)? {
                seen.push(k);
            } else {
                meta.insert(k, v);
            }
        }
        if let Some(missing) = MODEL_KEYS.iter().find(|k| !seen.iter().any(|s| s == *k)) {
            return Err(bad(&format!("header lacks `{missing}`")));
        }
        arch.validate()?;
        stft.validate()?;

        let mut stored: HashMap<String, (Vec<usize>, Vec<f32>)> = HashMap::new();
        while !cur.done() {
            let name_len = cur.u16()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| bad("tensor name is not UTF-8"))?
                .to_string();
            let rank = cur.u8()? as usize;
            let dims = (0..rank)
                .map(|_| cur.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let count: usize = dims.iter().product();
            let data = cur
                .take(4 * count)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if stored.insert(name.clone(), (dims, data)).is_some() {
                return Err(bad(&format!("tensor `{name}` appears twice")));
            }
        }

        let mut params = ModelParams::<f32>::zeros(&arch)?;
        let mut take = |name: &str, shape: &[usize]| -> Result<Option<Vec<f32>>> {
            match stored.remove(name) {
                None => Ok(None),
                Some((dims, data)) if dims == shape => Ok(Some(data)),
                Some((dims, _)) => Err(ehnet_core::Error::DimensionChain(format!(
                    "checkpoint tensor `{name}` has shape {dims:?}, architecture needs {shape:?}"
                ))
                .into()),
            }
        };
        let mut names = Vec::new();
        for t in params.tensors_mut() {
            let data = take(&t.name, &t.shape)?
                .ok_or_else(|| bad(&format!("missing tensor `{}`", t.name)))?;
            t.data.copy_from_slice(&data);
            names.push((t.name, t.shape));
        }
        let mut sq_grad = Vec::new();
        let mut sq_delta = Vec::new();
        for (name, shape) in &names {
            sq_grad.push(take(&format!("{SQ_GRAD}{name}"), shape)?);
            sq_delta.push(take(&format!("{SQ_DELTA}{name}"), shape)?);
        }
        if let Some(extra) = stored.keys().next() {
            return Err(bad(&format!("unexpected tensor `{extra}`")));
        }
        let optimizer = match (
            sq_grad.iter().all(Option::is_some),
            sq_delta.iter().all(Option::is_some),
        ) {
            (true, true) => Some(OptimizerTensors {
                sq_grad: sq_grad.into_iter().flatten().collect(),
                sq_delta: sq_delta.into_iter().flatten().collect(),
            }),
            _ if sq_grad.iter().chain(&sq_delta).all(Option::is_none) => None,
            _ => return Err(bad("optimizer state is incomplete")),
        };
        params.check()?;
        Ok(Self {
            params,
            stft,
            meta,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // Write then rename so a crash never leaves a truncated checkpoint.
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.encode()).map_err(Error::io(&tmp))?;
        fs::rename(&tmp, path).map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(Error::io(path))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Parse { what, detail } => {
                Error::parse(format!("{}: {what}", path.display()), detail)
            }
            other => other,
        })
    }
}

fn bad(detail: &str) -> Error {
    Error::parse("checkpoint", detail)
}

fn write_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| bad("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ehnet_core::model::forward;
    use ehnet_core::rng::seeded;
    use ehnet_core::Matrix;
    use rand::Rng;

    fn tiny_stft() -> StftConfig {
        StftConfig {
            fft_size: 16,
            hop_size: 8,
            window: Default::default(),
            bins_kept: 8,
        }
    }

    fn sample() -> Checkpoint {
        let params = ModelParams::<f32>::init(&Architecture::tiny(), &mut seeded(4)).unwrap();
        let mut ck = Checkpoint::new(params, tiny_stft());
        ck.meta.insert("epoch".into(), "7".into());
        ck
    }

    #[test]
    fn round_trip_gives_bit_identical_forward() {
        let ck = sample();
        let back = Checkpoint::decode(&ck.encode()).unwrap();
        assert_eq!(back.params, ck.params);
        assert_eq!(back.stft, ck.stft);
        assert_eq!(back.meta_value::<usize>("epoch").unwrap(), Some(7));
        let mut rng = seeded(5);
        let x = Matrix::from_fn(8, 9, |_, _| rng.gen_range(0.0f32..2.0));
        let a = forward(&x, &ck.params).unwrap();
        let b = forward(&x, &back.params).unwrap();
        assert!(a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn optimizer_round_trip() {
        let ck = sample();
        let opt = AdaDelta::new(&ck.params, 0.95, 1e-6).unwrap();
        let ck = ck.with_optimizer(&opt);
        let back = Checkpoint::decode(&ck.encode()).unwrap();
        assert_eq!(back.optimizer, ck.optimizer);
    }

    #[test]
    fn layout_starts_with_magic_and_version() {
        let bytes = sample().encode();
        assert_eq!(&bytes[..4], b"EHN1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let ck = sample();
        let bytes = ck.encode();
        // The header claims 4 hidden units while the tensors hold 5.
        let err = Checkpoint::decode(&bytes_with_header(
            &bytes,
            "hidden_sizes = 5",
            "hidden_sizes = 4",
        ))
        .unwrap_err();
        assert!(
            matches!(err.core(), Some(ehnet_core::Error::DimensionChain(_))),
            "{err}"
        );
    }

    fn bytes_with_header(bytes: &[u8], from: &str, to: &str) -> Vec<u8> {
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[12..12 + len])
            .unwrap()
            .replace(from, to);
        let mut out = bytes[..8].to_vec();
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&bytes[12 + len..]);
        out
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = sample().encode();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 2]).is_err());
        assert!(Checkpoint::decode(b"XXXX").is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(Checkpoint::decode(&wrong_version).is_err());
        assert!(Checkpoint::decode(&bytes_with_header(&bytes, "bins = 8\n", "")).is_err());
    }
}
