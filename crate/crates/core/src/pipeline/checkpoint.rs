//! Checkpoint container: magic `MFC1`, a length-prefixed UTF-8 JSON header,
//! then shape-prefixed little-endian tensors in a fixed order (feature
//! levels, decoder weights, decoder biases, Adam first moments, Adam second
//! moments).

use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::encoding::FeatureSet;
use crate::error::{Error, Result};
use crate::nn::{AdamState, Mlp, OutputActivation};
use crate::pipeline::{Precision, TrainConfig};
use crate::scalar::Scalar;
use crate::simplify::Hierarchy;

const MAGIC: &[u8; 4] = b"MFC1";

#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub config: TrainConfig,
    pub epoch: usize,
    pub hierarchy_hash: [u8; 32],
    pub features: FeatureSet<T>,
    pub mlp: Mlp<T>,
    pub adam: AdamState<T>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    epoch: usize,
    hierarchy_sha256: String,
    precision: Precision,
    mlp_layers: Vec<usize>,
    mlp_output: OutputActivation,
    adam_step: u64,
    adam_groups: Vec<usize>,
    feature_levels: usize,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_tensor<T: Scalar>(out: &mut Vec<u8>, dims: &[usize], data: &[T]) {
    out.push(T::DTYPE);
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    debug_assert_eq!(dims.iter().product::<usize>(), data.len());
    for &v in data {
        v.write_le(out);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("unexpected end of checkpoint".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor<T: Scalar>(&mut self) -> Result<(Vec<usize>, Vec<T>)> {
        let dtype = self.take(1)?[0];
        if dtype != T::DTYPE {
            return Err(Error::Format(format!(
                "tensor dtype tag {dtype} does not match the header precision"
            )));
        }
        let rank = self.take(1)?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u64()? as usize);
        }
        let len: usize = dims.iter().product();
        let raw = self.take(len * T::BYTES)?;
        let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        Ok((dims, data))
    }
}

impl<T: Scalar> Checkpoint<T> {
    fn precision() -> Precision {
        match T::DTYPE {
            0 => Precision::F32,
            _ => Precision::F64,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config.clone(),
            epoch: self.epoch,
            hierarchy_sha256: hex(&self.hierarchy_hash),
            precision: Self::precision(),
            mlp_layers: self.mlp.layer_sizes(),
            mlp_output: self.mlp.output_activation(),
            adam_step: self.adam.step_count(),
            adam_groups: self.adam.groups().to_vec(),
            feature_levels: self.features.level_count(),
        };
        let header_json = serde_json::to_vec(&header).expect("header serializes");

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_json);

        for z in self.features.levels() {
            write_tensor(&mut out, &[z.nrows(), z.ncols()], z.as_slice().unwrap());
        }
        for w in self.mlp.weights() {
            write_tensor(&mut out, &[w.nrows(), w.ncols()], w.as_slice().unwrap());
        }
        for b in self.mlp.biases() {
            write_tensor(&mut out, &[b.len()], b.as_slice().unwrap());
        }
        let (m, v) = self.adam.moments();
        for slot in m {
            write_tensor(&mut out, &[slot.len()], slot);
        }
        for slot in v {
            write_tensor(&mut out, &[slot.len()], slot);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    fn from_reader(header: Header, reader: &mut Reader<'_>, hierarchy: Arc<Hierarchy>) -> Result<Self> {
        let mut levels: Vec<Array2<T>> = Vec::with_capacity(header.feature_levels);
        for _ in 0..header.feature_levels {
            let (dims, data) = reader.tensor::<T>()?;
            if dims.len() != 2 {
                return Err(Error::Format("feature tensor must be rank 2".into()));
            }
            levels.push(
                Array2::from_shape_vec((dims[0], dims[1]), data)
                    .map_err(|e| Error::Format(format!("feature tensor shape: {e}")))?,
            );
        }
        let features = FeatureSet::from_levels(hierarchy, levels)?;

        let layer_count = header.mlp_layers.len().saturating_sub(1);
        let mut weights = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let (dims, data) = reader.tensor::<T>()?;
            if dims.len() != 2 {
                return Err(Error::Format("weight tensor must be rank 2".into()));
            }
            weights.push(
                Array2::from_shape_vec((dims[0], dims[1]), data)
                    .map_err(|e| Error::Format(format!("weight tensor shape: {e}")))?,
            );
        }
        let mut biases = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let (dims, data) = reader.tensor::<T>()?;
            if dims.len() != 1 {
                return Err(Error::Format("bias tensor must be rank 1".into()));
            }
            biases.push(Array1::from_vec(data));
        }
        let mlp = Mlp::from_parts(weights, biases, header.mlp_output)?;

        let slots = header.adam_groups.len();
        let mut m = Vec::with_capacity(slots);
        for _ in 0..slots {
            m.push(reader.tensor::<T>()?.1);
        }
        let mut v = Vec::with_capacity(slots);
        for _ in 0..slots {
            v.push(reader.tensor::<T>()?.1);
        }
        let adam = AdamState::from_parts(header.adam_step, m, v, header.adam_groups.clone())?;

        let mut hierarchy_hash = [0u8; 32];
        for (i, byte) in hierarchy_hash.iter_mut().enumerate() {
            let pair = header
                .hierarchy_sha256
                .get(2 * i..2 * i + 2)
                .ok_or_else(|| Error::Format("short hierarchy hash".into()))?;
            *byte = u8::from_str_radix(pair, 16)
                .map_err(|_| Error::Format("bad hierarchy hash hex".into()))?;
        }

        Ok(Checkpoint {
            config: header.config,
            epoch: header.epoch,
            hierarchy_hash,
            features,
            mlp,
            adam,
        })
    }
}

pub enum LoadedCheckpoint {
    F32(Checkpoint<f32>),
    F64(Checkpoint<f64>),
}

/// Read only the embedded training config, without binding a hierarchy.
/// Callers use the config's resolution list to rebuild the hierarchy when
/// no sidecar file is present.
pub fn read_config(path: impl AsRef<Path>) -> Result<TrainConfig> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if reader.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, expected MFC1".into()));
    }
    let header_len = reader.u64()? as usize;
    let header: Header = serde_json::from_slice(reader.take(header_len)?)?;
    Ok(header.config)
}

/// Load a checkpoint and bind it to `hierarchy`, verifying the stored
/// hierarchy hash.
pub fn load_checkpoint(
    path: impl AsRef<Path>,
    hierarchy: Arc<Hierarchy>,
) -> Result<LoadedCheckpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if reader.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, expected MFC1".into()));
    }
    let header_len = reader.u64()? as usize;
    let header: Header = serde_json::from_slice(reader.take(header_len)?)?;
    if header.hierarchy_sha256 != hex(&hierarchy.sha256()) {
        return Err(Error::InvalidArgument(
            "checkpoint was trained on a different hierarchy".into(),
        ));
    }
    match header.precision {
        Precision::F32 => Ok(LoadedCheckpoint::F32(Checkpoint::from_reader(
            header,
            &mut reader,
            hierarchy,
        )?)),
        Precision::F64 => Ok(LoadedCheckpoint::F64(Checkpoint::from_reader(
            header,
            &mut reader,
            hierarchy,
        )?)),
    }
}
