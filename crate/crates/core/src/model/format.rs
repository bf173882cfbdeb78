//! `.slnn` model and `.slds` dataset files.
//!
//! Model layout (little-endian): magic `SLNN`, version `u32 = 1`, output
//! semantics `u8` (0 raw, 1 softmax), `n_layers u32`, then per layer
//! `in_dim u32, out_dim u32, activation u8` (0 linear, 1 relu), weights
//! `out_dim x in_dim` binary32 row-major and bias `out_dim` binary32.
//!
//! Dataset layout: magic `SLDS`, version `u32 = 1`, `n u32, dim u32,
//! n_classes u32`, features `n x dim` binary32 row-major, labels `n x u32`.

use std::fs;
use std::path::Path;

use super::{Activation, DenseLayer, LabeledDataset, MlpModel, OutputSemantics};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

const MODEL_MAGIC: &[u8; 4] = b"SLNN";
const DATASET_MAGIC: &[u8; 4] = b"SLDS";
const VERSION: u32 = 1;

pub fn model_to_bytes(model: &MlpModel) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(MODEL_MAGIC);
    w.u32(VERSION);
    w.u8(match model.output_semantics {
        OutputSemantics::Raw => 0,
        OutputSemantics::ClassificationSoftmax => 1,
    });
    w.u32(model.layers.len() as u32);
    for layer in &model.layers {
        w.u32(layer.in_dim as u32);
        w.u32(layer.out_dim as u32);
        w.u8(match layer.activation {
            Activation::Linear => 0,
            Activation::Relu => 1,
        });
        w.f32_slice(&layer.weights);
        w.f32_slice(&layer.bias);
    }
    w.into_inner()
}

fn read_version(r: &mut ByteReader<'_>) -> Result<()> {
    let at = r.offset();
    let v = r.u32("version")?;
    if v != VERSION {
        return Err(Error::format(at, format!("unsupported version {v}")));
    }
    Ok(())
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<MlpModel> {
    let mut r = ByteReader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    read_version(&mut r)?;
    let at = r.offset();
    let semantics = match r.u8("output semantics")? {
        0 => OutputSemantics::Raw,
        1 => OutputSemantics::ClassificationSoftmax,
        s => return Err(Error::format(at, format!("unknown output semantics {s}"))),
    };
    let at = r.offset();
    let n_layers = r.u32("layer count")? as usize;
    if n_layers == 0 {
        return Err(Error::format(at, "model has no layers"));
    }
    let mut layers = Vec::new();
    let mut input_dim = 0;
    for i in 0..n_layers {
        let at = r.offset();
        let in_dim = r.u32("in_dim")? as usize;
        let out_dim = r.u32("out_dim")? as usize;
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::format(at, format!("layer {i} has a zero dimension")));
        }
        if i == 0 {
            input_dim = in_dim;
        } else if in_dim != layers.last().map(|l: &DenseLayer| l.out_dim).unwrap() {
            return Err(Error::format(at, format!("layer {i} in_dim does not chain")));
        }
        let at = r.offset();
        let activation = match r.u8("activation")? {
            0 => Activation::Linear,
            1 => Activation::Relu,
            a => return Err(Error::format(at, format!("unknown activation {a}"))),
        };
        let count = in_dim
            .checked_mul(out_dim)
            .ok_or_else(|| Error::format(at, "layer size overflows"))?;
        let weights = r.f32_vec(count, "weights")?;
        let bias = r.f32_vec(out_dim, "bias")?;
        layers.push(DenseLayer {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        });
    }
    r.finish()?;
    let end = r.offset();
    MlpModel::new(input_dim, layers, semantics).map_err(|e| Error::format(end, e.to_string()))
}

pub fn save_model(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    model_from_bytes(&fs::read(path)?)
}

pub fn dataset_to_bytes(data: &LabeledDataset) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(DATASET_MAGIC);
    w.u32(VERSION);
    w.u32(data.len() as u32);
    w.u32(data.dim as u32);
    w.u32(data.n_classes as u32);
    w.f32_slice(&data.features);
    w.u32_slice(&data.labels);
    w.into_inner()
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<LabeledDataset> {
    let mut r = ByteReader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    read_version(&mut r)?;
    let n = r.u32("n")? as usize;
    let at = r.offset();
    let dim = r.u32("dim")? as usize;
    if dim == 0 {
        return Err(Error::format(at, "dim is zero"));
    }
    let at = r.offset();
    let n_classes = r.u32("n_classes")? as usize;
    if n_classes == 0 {
        return Err(Error::format(at, "n_classes is zero"));
    }
    let count = n
        .checked_mul(dim)
        .ok_or_else(|| Error::format(at, "feature matrix size overflows"))?;
    let features = r.f32_vec(count, "features")?;
    let labels_at = r.offset();
    let labels = r.u32_vec(n, "labels")?;
    if let Some(i) = labels.iter().position(|&y| y as usize >= n_classes) {
        return Err(Error::format(
            labels_at + 4 * i,
            format!("label {} >= n_classes {n_classes}", labels[i]),
        ));
    }
    r.finish()?;
    Ok(LabeledDataset {
        dim,
        n_classes,
        features,
        labels,
    })
}

pub fn save_dataset(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, dataset_to_bytes(data))?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    dataset_from_bytes(&fs::read(path)?)
}
