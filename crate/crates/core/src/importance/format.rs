//! `.slac` activator files.
//!
//! Layout (little-endian): magic `SLAC`, version `u32 = 1`, `K u8`, `L u8`,
//! `n_activated_layers u16`, then per layer a hash spec (`layer_index u32`,
//! kind `u8` with 0 FreeHash / 1 SRP, then `K*L` node ids `u32` or a seed
//! `u64`), the global rank (`out_dim x u32`) and `L` tables of
//! `n_buckets u32` followed by `key u64, list_len u32, ids u32 x list_len`.
//!
//! The confidence section follows: `n_grid u8` (0 when absent), the grid as
//! binary32, a hash spec, and `L` tables of `n_buckets u32` followed by
//! `key u64` and `n_grid x (mean binary32, count u32)`.
//!
//! Buckets are written in ascending key order so equal bundles serialize to
//! identical bytes. Decoding needs the model for layer widths and hash rows.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{ActivatorBundle, NodeRankTable};
use crate::codec::{ByteReader, ByteWriter};
use crate::confidence::{ConfidencePayload, ConfidenceTables, KGrid};
use crate::error::{Error, Result};
use crate::lsh::{BucketKey, HashFamilySpec, HashKind, LshTableSet};
use crate::model::{model_to_bytes, MlpModel};

const MAGIC: &[u8; 4] = b"SLAC";
const VERSION: u32 = 1;

fn write_spec(w: &mut ByteWriter, spec: &HashFamilySpec) {
    w.u32(spec.layer_index as u32);
    match &spec.kind {
        HashKind::FreeHash { nodes } => {
            w.u8(0);
            w.u32_slice(nodes);
        }
        HashKind::SignedRandomProjection { seed } => {
            w.u8(1);
            w.u64(*seed);
        }
    }
}

fn sorted_buckets<P>(table: &HashMap<BucketKey, P>) -> Vec<(&BucketKey, &P)> {
    let mut v: Vec<_> = table.iter().collect();
    v.sort_unstable_by_key(|(k, _)| **k);
    v
}

pub fn activator_to_bytes(bundle: &ActivatorBundle) -> Result<Vec<u8>> {
    let k = u8::try_from(bundle.k).map_err(|_| Error::input("K does not fit the file format"))?;
    let l = u8::try_from(bundle.l).map_err(|_| Error::input("L above 255 does not fit the file format"))?;
    let n_layers = u16::try_from(bundle.layers().len())
        .map_err(|_| Error::input("too many activated layers for the file format"))?;
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u8(k);
    w.u8(l);
    w.u16(n_layers);
    for t in bundle.layers() {
        write_spec(&mut w, t.spec());
        w.u32_slice(t.global_rank());
        for table in t.tables().tables() {
            w.u32(table.len() as u32);
            for (key, list) in sorted_buckets(table) {
                w.u64(key.0);
                w.u32(list.len() as u32);
                w.u32_slice(list);
            }
        }
    }
    match &bundle.confidence {
        None => w.u8(0),
        Some(c) => {
            let spec = c.tables().spec();
            if spec.k != bundle.k || spec.l != bundle.l {
                return Err(Error::input(
                    "confidence tables must share the bundle's K and L to be saved",
                ));
            }
            let n_grid = u8::try_from(c.grid().len())
                .map_err(|_| Error::input("k grid longer than 255 does not fit the file format"))?;
            w.u8(n_grid);
            for &g in c.grid().values() {
                w.f32(g as f32);
            }
            write_spec(&mut w, spec);
            for table in c.tables().tables() {
                w.u32(table.len() as u32);
                for (key, p) in sorted_buckets(table) {
                    w.u64(key.0);
                    for (m, n) in p.means.iter().zip(&p.counts) {
                        w.f32(*m);
                        w.u32(*n);
                    }
                }
            }
        }
    }
    Ok(w.into_inner())
}

fn read_spec(r: &mut ByteReader, model: &MlpModel, k: usize, l: usize) -> Result<HashFamilySpec> {
    let at = r.offset();
    let layer_index = r.u32("layer index")? as usize;
    if layer_index >= model.n_layers() {
        return Err(Error::format(
            at,
            format!("layer index {layer_index} beyond {}-layer model", model.n_layers()),
        ));
    }
    let kind_at = r.offset();
    let spec = match r.u8("hash kind")? {
        0 => {
            let nodes = r.u32_vec(k * l, "hash nodes")?;
            HashFamilySpec::freehash(k, l, layer_index, nodes)
        }
        1 => HashFamilySpec::srp(k, l, layer_index, r.u64("hash seed")?),
        other => return Err(Error::format(kind_at, format!("unknown hash kind {other}"))),
    };
    let spec = spec.map_err(|e| Error::format(kind_at, e.to_string()))?;
    spec.bind(model).map_err(|e| Error::format(kind_at, e.to_string()))?;
    Ok(spec)
}

fn read_tables<P>(
    r: &mut ByteReader,
    l: usize,
    mut payload: impl FnMut(&mut ByteReader) -> Result<P>,
) -> Result<Vec<HashMap<BucketKey, P>>> {
    (0..l)
        .map(|_| {
            let n = r.u32("bucket count")?;
            let mut table = HashMap::new();
            for _ in 0..n {
                let at = r.offset();
                let key = BucketKey(r.u64("bucket key")?);
                let p = payload(r)?;
                if table.insert(key, p).is_some() {
                    return Err(Error::format(at, format!("duplicate bucket key {:#x}", key.0)));
                }
            }
            Ok(table)
        })
        .collect()
}

pub fn activator_from_bytes(bytes: &[u8], model: &MlpModel) -> Result<ActivatorBundle> {
    let mut r = ByteReader::new(bytes);
    r.magic(MAGIC)?;
    let at = r.offset();
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(at, format!("unsupported version {version}")));
    }
    let k = r.u8("K")? as usize;
    let l = r.u8("L")? as usize;
    let n_layers = r.u16("layer count")? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(model.n_layers()));
    for _ in 0..n_layers {
        let start = r.offset();
        let spec = read_spec(&mut r, model, k, l)?;
        let out_dim = model.layer(spec.layer_index).out_dim();
        let global_rank = r.u32_vec(out_dim, "global rank")?;
        let tables = read_tables(&mut r, l, |r| {
            let len = r.u32("list length")? as usize;
            r.u32_vec(len, "ranked list")
        })?;
        let table = NodeRankTable::from_parts(model, spec, tables, global_rank)
            .map_err(|e| Error::format(start, e.to_string()))?;
        layers.push(table);
    }

    let conf_at = r.offset();
    let n_grid = r.u8("grid length")? as usize;
    let confidence = if n_grid == 0 {
        None
    } else {
        let grid_vals = r.f32_vec(n_grid, "grid")?;
        let grid = KGrid::new(grid_vals.iter().map(|&g| g as f64).collect())
            .map_err(|e| Error::format(conf_at, e.to_string()))?;
        let spec = read_spec(&mut r, model, k, l)?;
        let tables = read_tables(&mut r, l, |r| {
            let mut means = Vec::with_capacity(n_grid);
            let mut counts = Vec::with_capacity(n_grid);
            for _ in 0..n_grid {
                means.push(r.f32("confidence mean")?);
                let at = r.offset();
                let c = r.u32("confidence count")?;
                if c == 0 {
                    return Err(Error::format(at, "zero confidence count"));
                }
                counts.push(c);
            }
            Ok(ConfidencePayload { means, counts })
        })?;
        let set = LshTableSet::from_tables(spec, tables).map_err(|e| Error::format(conf_at, e.to_string()))?;
        Some(ConfidenceTables::from_parts(model, grid, set).map_err(|e| Error::format(conf_at, e.to_string()))?)
    };
    r.finish()?;
    ActivatorBundle::new(model, k, l, layers, confidence).map_err(|e| Error::format(0, e.to_string()))
}

pub fn save_activator(bundle: &ActivatorBundle, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, activator_to_bytes(bundle)?)?;
    Ok(())
}

pub fn load_activator(path: impl AsRef<Path>, model: &MlpModel) -> Result<ActivatorBundle> {
    activator_from_bytes(&fs::read(path)?, model)
}

/// Serialized activator size relative to the serialized model.
pub fn storage_overhead(bundle: &ActivatorBundle, model: &MlpModel) -> Result<f64> {
    Ok(activator_to_bytes(bundle)?.len() as f64 / model_to_bytes(model).len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::importance::{train_activator, ActivatorConfig, HashChoice};
    use crate::model::gen_synthetic_model;

    fn bundle(hash: HashChoice) -> (MlpModel, ActivatorBundle) {
        let m = gen_synthetic_model(1, &[6, 64, 64, 3]).unwrap();
        let xs: Vec<f32> = (0..6 * 200).map(|i| ((i * 37 % 101) as f32 / 50.0) - 1.0).collect();
        let cfg = ActivatorConfig {
            k: 4,
            l: 3,
            hash,
            ..Default::default()
        };
        let b = train_activator(&m, &xs, &cfg).unwrap();
        (m, b)
    }

    #[test]
    fn round_trip_is_byte_stable() {
        for hash in [HashChoice::FreeHash, HashChoice::SignedRandomProjection] {
            let (m, b) = bundle(hash);
            let bytes = activator_to_bytes(&b).unwrap();
            let back = activator_from_bytes(&bytes, &m).unwrap();
            assert_eq!(back, b);
            assert_eq!(activator_to_bytes(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn corrupt_files_name_an_offset() {
        let (m, b) = bundle(HashChoice::FreeHash);
        let bytes = activator_to_bytes(&b).unwrap();
        for cut in [0, 3, 4, 9, 10, 20, bytes.len() - 1] {
            assert!(matches!(
                activator_from_bytes(&bytes[..cut], &m),
                Err(Error::Format { .. })
            ));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(activator_from_bytes(&bad, &m), Err(Error::Format { offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(activator_from_bytes(&bad, &m), Err(Error::Format { offset: 4, .. })));
        let mut long = bytes;
        long.push(0);
        assert!(activator_from_bytes(&long, &m).is_err());
    }
}
