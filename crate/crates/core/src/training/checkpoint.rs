//! Checkpoint container: 8-byte magic, `u32` version, `u64` manifest length,
//! a JSON manifest, then every tensor as little-endian `f32`.

use std::fs;
use std::path::Path;

use mtsr_tensor::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

use super::gan::{GanModel, TrainConfig};
use crate::datapipe::NormStats;
use crate::error::{MtsrError, Result};
use crate::networks::{DiscriminatorSpec, InstanceConfig, ParamStore, ZipNetSpec};

pub const MAGIC: &[u8; 8] = b"MTSRCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: GanModel<f32>,
    pub norm: NormStats,
    pub train_config: TrainConfig,
    /// Completed GAN epochs (0 for a pretrain-only model).
    pub epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    group: String,
    name: String,
    shape: Vec<usize>,
    /// Offset in `f32` elements from the start of the data section.
    offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    instance: InstanceConfig,
    generator: ZipNetSpec,
    discriminator: DiscriminatorSpec,
    train_config: TrainConfig,
    norm: NormStats,
    epoch: usize,
    tensors: Vec<TensorEntry>,
}

const GROUPS: [&str; 2] = ["generator", "discriminator"];

fn stores<T>(model: &GanModel<T>) -> [&ParamStore<T>; 2] {
    [&model.g_params, &model.d_params]
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut tensors = Vec::new();
    let mut data: Vec<u8> = Vec::new();
    let mut offset = 0;
    for (group, store) in GROUPS.iter().zip(stores(&ckpt.model)) {
        for id in store.ids() {
            let t = store.get(id);
            tensors.push(TensorEntry {
                group: group.to_string(),
                name: store.name(id).to_string(),
                shape: t.shape().to_vec(),
                offset,
            });
            offset += t.numel();
            for v in t.data() {
                data.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let manifest = Manifest {
        instance: ckpt.model.generator.instance,
        generator: ckpt.model.generator.spec.clone(),
        discriminator: ckpt.model.discriminator.spec.clone(),
        train_config: ckpt.train_config.clone(),
        norm: ckpt.norm,
        epoch: ckpt.epoch,
        tensors,
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| MtsrError::Format(e.to_string()))?;
    let mut bytes = Vec::with_capacity(20 + json.len() + data.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    bytes.extend_from_slice(&data);
    fs::write(path, bytes).map_err(|e| MtsrError::io(path, e))
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = at
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| MtsrError::Truncated(format!("{what} needs {n} bytes at offset {at}")))?;
    let out = &bytes[*at..end];
    *at = end;
    Ok(out)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| MtsrError::io(path, e))?;
    let mut at = 0;
    let magic = take(&bytes, &mut at, 8, "magic").map_err(|_| MtsrError::Format("file too short for magic".into()))?;
    if magic != MAGIC {
        return Err(MtsrError::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(take(&bytes, &mut at, 4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(MtsrError::Version {
            found: version,
            expected: VERSION,
        });
    }
    let len = u64::from_le_bytes(take(&bytes, &mut at, 8, "manifest length")?.try_into().unwrap());
    let len = usize::try_from(len).map_err(|_| MtsrError::Format("manifest length overflow".into()))?;
    let manifest: Manifest = serde_json::from_slice(take(&bytes, &mut at, len, "manifest")?)
        .map_err(|e| MtsrError::Format(format!("manifest: {e}")))?;
    let data = &bytes[at..];

    // Rebuild the architecture, then overwrite every tensor from the file.
    let mut model = GanModel::<f32>::build(
        manifest.instance,
        manifest.generator.clone(),
        manifest.discriminator.clone(),
        0,
    )
    .map_err(|e| MtsrError::Manifest(format!("architecture: {e}")))?;
    let expected: usize = stores(&model).iter().map(|s| s.len()).sum();
    if manifest.tensors.len() != expected {
        return Err(MtsrError::Manifest(format!(
            "{} tensors listed, architecture has {expected}",
            manifest.tensors.len()
        )));
    }
    let mut entries = manifest.tensors.iter();
    for (group, store) in GROUPS.iter().zip([&mut model.g_params, &mut model.d_params]) {
        for id in store.ids().collect::<Vec<_>>() {
            let e = entries.next().expect("count checked");
            let t = store.get(id);
            if e.group != *group || e.name != store.name(id) || e.shape != t.shape() {
                return Err(MtsrError::Manifest(format!(
                    "entry {}/{} {:?} does not match {}/{} {:?}",
                    e.group,
                    e.name,
                    e.shape,
                    group,
                    store.name(id),
                    t.shape()
                )));
            }
            let n = t.numel();
            let start = e
                .offset
                .checked_mul(4)
                .ok_or_else(|| MtsrError::Manifest("offset overflow".into()))?;
            let raw = data
                .get(start..start + 4 * n)
                .ok_or_else(|| MtsrError::Truncated(format!("tensor {}/{} data", e.group, e.name)))?;
            let values: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            *store.get_mut(id) = Tensor::new(&e.shape, values)?;
        }
    }
    Ok(Checkpoint {
        model,
        norm: manifest.norm,
        train_config: manifest.train_config,
        epoch: manifest.epoch,
    })
}

/// Loads a checkpoint and checks that it was trained for `instance`.
pub fn load_checkpoint_for(path: &Path, instance: &InstanceConfig) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.model.instance() != instance {
        return Err(MtsrError::Config(format!(
            "checkpoint instance {:?} does not match requested {:?}",
            ckpt.model.instance(),
            instance
        )));
    }
    Ok(ckpt)
}

impl Checkpoint {
    /// Converts a model trained at another precision for storage.
    pub fn from_model<T: Scalar>(
        model: &GanModel<T>,
        norm: NormStats,
        train_config: TrainConfig,
        epoch: usize,
    ) -> Self {
        Checkpoint {
            model: GanModel {
                generator: model.generator.clone(),
                g_params: model.g_params.cast(),
                discriminator: model.discriminator.clone(),
                d_params: model.d_params.cast(),
            },
            norm,
            train_config,
            epoch,
        }
    }
}
