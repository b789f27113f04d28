//! Binary checkpoints.
//!
//! ```text
//! HOTET-CHECKPOINT
//! {"version":1,"kind":"model",...,"tensors":[{"name":..,"rows":..,"cols":..,"offset":..}]}
//! <little-endian f64 data>
//! ```
//!
//! The header is one line of JSON; offsets count bytes from the start of the
//! data section.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::icnn::{IcnnParams, IcnnSpec};
use crate::params::{leaves, leaves_mut, names, ParamTree};
use crate::trainer::{ablate_embedding, HotetModel, ModelSpec, TrainConfig, TrainMode};

const MAGIC: &str = "HOTET-CHECKPOINT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Model,
    Icnn,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    rows: usize,
    cols: usize,
    offset: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    kind: Kind,
    #[serde(default)]
    model: Option<ModelSpec>,
    #[serde(default)]
    icnn: Option<IcnnSpec>,
    #[serde(default)]
    ablated: bool,
    #[serde(default)]
    trained: Option<TrainMode>,
    #[serde(default)]
    config: Option<TrainConfig>,
    seed: u64,
    tensors: Vec<Entry>,
}

/// A model together with the settings that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: HotetModel,
    pub config: Option<TrainConfig>,
    pub seed: u64,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn entries<P: ParamTree<Tensor>>(tree: &P) -> Vec<Entry> {
    let mut offset = 0u64;
    names(tree, "")
        .into_iter()
        .zip(leaves(tree))
        .map(|(name, t)| {
            let e = Entry {
                name,
                rows: t.rows(),
                cols: t.cols(),
                offset,
            };
            offset += 8 * t.len() as u64;
            e
        })
        .collect()
}

fn encode<P: ParamTree<Tensor>>(mut header: Header, tree: &P) -> Result<Vec<u8>> {
    header.tensors = entries(tree);
    let json = serde_json::to_string(&header).map_err(|e| bad(e.to_string()))?;
    let mut out = Vec::with_capacity(json.len() + 32 + 8 * crate::params::count(tree));
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "{json}")?;
    for t in leaves(tree) {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn split_line(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("header is truncated"))?;
    let line = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not text"))?;
    Ok((line, &bytes[end + 1..]))
}

fn decode_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let (magic, rest) = split_line(bytes)?;
    if magic != MAGIC {
        return Err(bad("not a checkpoint file (bad magic line)"));
    }
    let (line, data) = split_line(rest)?;
    let probe: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(format!("unreadable header: {e}")))?;
    let version = probe
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| bad("header has no version"))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(bad(format!(
            "format version {version} is not supported (this build reads version {FORMAT_VERSION})"
        )));
    }
    let header: Header = serde_json::from_value(probe).map_err(|e| bad(format!("malformed header: {e}")))?;
    Ok((header, data))
}

fn fill<P: ParamTree<Tensor>>(tree: &mut P, header: &Header, data: &[u8]) -> Result<()> {
    let expected = names(tree, "");
    if expected.len() != header.tensors.len() {
        return Err(bad(format!(
            "expected {} tensors, header lists {}",
            expected.len(),
            header.tensors.len()
        )));
    }
    let total: usize = header.tensors.iter().map(|e| 8 * e.rows * e.cols).sum();
    if data.len() != total {
        return Err(bad(format!(
            "data section has {} bytes, header describes {total}",
            data.len()
        )));
    }
    for ((name, slot), e) in expected.iter().zip(leaves_mut(tree)).zip(&header.tensors) {
        if *name != e.name || slot.shape() != [e.rows, e.cols] {
            return Err(bad(format!(
                "tensor {} {:?} does not match expected {name} {:?}",
                e.name,
                [e.rows, e.cols],
                slot.shape()
            )));
        }
        let start = e.offset as usize;
        let end = start + 8 * e.rows * e.cols;
        let raw = data
            .get(start..end)
            .ok_or_else(|| bad(format!("data for {name} is truncated")))?;
        for (v, chunk) in slot.data_mut().iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        if !slot.is_finite() {
            return Err(bad(format!("{name} holds non-finite values")));
        }
    }
    Ok(())
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            version: FORMAT_VERSION,
            kind: Kind::Model,
            model: Some(self.model.spec().clone()),
            icnn: None,
            ablated: self.model.is_ablated(),
            trained: self.model.trained,
            config: self.config.clone(),
            seed: self.seed,
            tensors: Vec::new(),
        };
        encode(header, &self.model)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, data) = decode_header(bytes)?;
        if header.kind != Kind::Model {
            return Err(bad("file holds a single potential, not a model"));
        }
        let spec = header.model.clone().ok_or_else(|| bad("header has no model spec"))?;
        let mut model = HotetModel::init(&spec, 0).map_err(|e| bad(format!("invalid model spec: {e}")))?;
        if header.ablated {
            model = ablate_embedding(&model, 0);
        }
        fill(&mut model, &header, data)?;
        model.trained = header.trained;
        Ok(Self {
            model,
            config: header.config,
            seed: header.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| bad(format!("cannot open {}: {e}", path.display())))?
            .read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Serializes a single potential in the checkpoint layout.
pub fn icnn_to_bytes(net: &IcnnParams, seed: u64) -> Result<Vec<u8>> {
    let header = Header {
        version: FORMAT_VERSION,
        kind: Kind::Icnn,
        model: None,
        icnn: Some(net.spec().clone()),
        ablated: false,
        trained: None,
        config: None,
        seed,
        tensors: Vec::new(),
    };
    encode(header, net)
}

pub fn icnn_from_bytes(bytes: &[u8]) -> Result<IcnnParams> {
    let (header, data) = decode_header(bytes)?;
    if header.kind != Kind::Icnn {
        return Err(bad("file holds a model, not a single potential"));
    }
    let spec = header.icnn.clone().ok_or_else(|| bad("header has no ICNN spec"))?;
    let mut net = IcnnParams::zeros(&spec);
    fill(&mut net, &header, data)?;
    net.validate()?;
    Ok(net)
}
