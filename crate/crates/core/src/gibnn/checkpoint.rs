use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{init_params, GibConfig, GibError, ModelParams};
use crate::numcore::Tensor;

pub const CHECKPOINT_FORMAT: &str = "gib-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// JSON side of a checkpoint. Tensor data lives in a sidecar file of raw
/// little-endian `f64`s, concatenated in manifest order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: GibConfig,
    pub seed: u64,
    pub in_features: usize,
    pub num_classes: usize,
    pub data_file: String,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub params: ModelParams,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GibError + '_ {
    move |source| GibError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Sidecar path: the manifest path with a `.bin` extension.
pub fn data_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

pub fn save_checkpoint(
    manifest_path: impl AsRef<Path>,
    params: &ModelParams,
    config: &GibConfig,
    seed: u64,
    meta: serde_json::Value,
) -> Result<Manifest, GibError> {
    let path = manifest_path.as_ref();
    let bin = data_path(path);
    let tensors: Vec<&Tensor> = params.tensors();
    let manifest = Manifest {
        format: CHECKPOINT_FORMAT.into(),
        config: config.clone(),
        seed,
        in_features: params.layers[0].w[0].shape()[0],
        num_classes: params.w_out.shape()[1],
        data_file: bin
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        tensors: params
            .names()
            .into_iter()
            .zip(&tensors)
            .map(|(name, t)| TensorEntry {
                name,
                shape: t.shape().to_vec(),
            })
            .collect(),
        meta,
    };
    let mut bytes = Vec::with_capacity(params.num_scalars() * 8);
    for t in tensors {
        for x in t.data() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(&bin, bytes).map_err(io_err(&bin))?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(path, json + "\n").map_err(io_err(path))?;
    Ok(manifest)
}

pub fn load_checkpoint(manifest_path: impl AsRef<Path>) -> Result<Checkpoint, GibError> {
    let path = manifest_path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| GibError::Checkpoint(format!("{}: {e}", path.display())))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(GibError::Checkpoint(format!(
            "unsupported format {:?}",
            manifest.format
        )));
    }
    let bin = path.with_file_name(&manifest.data_file);
    let bytes = fs::read(&bin).map_err(io_err(&bin))?;
    let template = init_params(
        &manifest.config,
        manifest.in_features,
        manifest.num_classes,
        manifest.seed,
    )?;
    let expected: Vec<TensorEntry> = template
        .names()
        .into_iter()
        .zip(template.tensors())
        .map(|(name, t)| TensorEntry {
            name,
            shape: t.shape().to_vec(),
        })
        .collect();
    if expected != manifest.tensors {
        return Err(GibError::Checkpoint(
            "tensor list does not match the configured architecture".into(),
        ));
    }
    let total: usize = expected
        .iter()
        .map(|e| e.shape.iter().product::<usize>())
        .sum();
    if bytes.len() != total * 8 {
        return Err(GibError::Checkpoint(format!(
            "{} holds {} bytes, expected {}",
            bin.display(),
            bytes.len(),
            total * 8
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let tensors = expected
        .iter()
        .map(|e| {
            let n = e.shape.iter().product();
            Tensor::new(e.shape.clone(), values.by_ref().take(n).collect()).expect("sized")
        })
        .collect();
    let params = template.with_tensors(tensors)?;
    Ok(Checkpoint { manifest, params })
}
