//! Checkpoint files: a versioned binary blob of named tensors plus a
//! plain-text manifest describing the model it belongs to.
//!
//! Blob layout (little-endian): magic `MILCKPT0`, version `u32`, tensor
//! count `u32`, then per tensor a name (`u32` length + UTF-8), a shape
//! (`u32` rank + `u64` dims), and the entries as 64-bit floats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{Checkpoint, ModelConfig, ModelParams};
use crate::numerics::rng::SeededRng;

const MAGIC: &[u8; 8] = b"MILCKPT0";
const VERSION: u32 = 1;

fn manifest_path(blob: &Path) -> PathBuf {
    let mut name = blob.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.txt");
    blob.with_file_name(name)
}

/// Writes the blob at `path` and the manifest beside it.
pub fn save_checkpoint(path: &Path, config: &ModelConfig, ckpt: &Checkpoint) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let leaves = ckpt.params.leaves();
    out.write_all(&(leaves.len() as u32).to_le_bytes())?;
    for leaf in &leaves {
        let name = leaf.name.as_bytes();
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name)?;
        // Tensors are stored flat; the manifest carries the architecture
        // that fixes each shape.
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&(leaf.data.len() as u64).to_le_bytes())?;
        for v in leaf.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;

    let manifest = format!(
        "format=mil-checkpoint v{VERSION}\n\
         pooling={}\n\
         ordering={}\n\
         features={}\n\
         attention_hidden={}\n\
         smap_alpha={}\n\
         smap_neighbors={}\n\
         transmil_layers={}\n\
         transmil_heads={}\n\
         transmil_head_dim={}\n\
         transmil_buckets={}\n\
         reg_kind={}\n\
         reg_strength={}\n\
         lr={}\n\
         init_seed={}\n\
         epoch={}\n\
         train_auroc={:.17}\n\
         val_auroc={:.17}\n\
         constraint_met={}\n",
        config.pooling,
        config.ordering,
        ckpt.params.features(),
        config.attention_hidden,
        config.smap_alpha,
        config.smap_neighbors,
        config.transmil.n_layers,
        config.transmil.n_heads,
        config.transmil.head_dim,
        config.transmil.n_buckets,
        config.reg_kind.name(),
        config.reg_strength,
        config.lr,
        config.init_seed,
        ckpt.epoch,
        ckpt.train_auroc,
        ckpt.val_auroc,
        ckpt.constraint_met,
    );
    std::fs::write(manifest_path(path), manifest)?;
    Ok(())
}

fn parse_manifest(text: &str) -> Result<std::collections::HashMap<String, String>> {
    let mut map = std::collections::HashMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok(map)
}

fn manifest_get<'a>(
    map: &'a std::collections::HashMap<String, String>,
    key: &str,
) -> Result<&'a str> {
    map.get(key)
        .map(|s| s.as_str())
        .ok_or_else(|| Error::Format(format!("manifest missing {key}")))
}

/// Reads the manifest and blob back into a config and checkpoint.
pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, Checkpoint)> {
    let manifest_text = std::fs::read_to_string(manifest_path(path))?;
    let map = parse_manifest(&manifest_text)?;
    let parse_num = |key: &str| -> Result<f64> {
        manifest_get(&map, key)?
            .parse()
            .map_err(|_| Error::Format(format!("bad manifest number for {key}")))
    };

    let mut config = ModelConfig {
        pooling: crate::pooling::PoolKind::parse(manifest_get(&map, "pooling")?)?,
        ordering: crate::model::ArchOrdering::parse(manifest_get(&map, "ordering")?)?,
        attention_hidden: parse_num("attention_hidden")? as usize,
        smap_alpha: parse_num("smap_alpha")?,
        smap_neighbors: parse_num("smap_neighbors")? as usize,
        reg_strength: parse_num("reg_strength")?,
        lr: parse_num("lr")?,
        init_seed: parse_num("init_seed")? as u64,
        ..ModelConfig::default()
    };
    config.transmil.n_layers = parse_num("transmil_layers")? as usize;
    config.transmil.n_heads = parse_num("transmil_heads")? as usize;
    config.transmil.head_dim = parse_num("transmil_head_dim")? as usize;
    config.transmil.n_buckets = parse_num("transmil_buckets")? as usize;
    if manifest_get(&map, "reg_kind")? == "l1" {
        config.reg_kind = crate::model::RegKind::L1;
    }
    let features = parse_num("features")? as usize;

    // Rebuild the parameter structure, then overwrite every tensor from the
    // blob by name.
    let mut params =
        ModelParams::init(&config, features, &mut SeededRng::new(config.init_seed, 0))?;

    let file = File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut magic = [0u8; 8];
    reader.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = read_u32(&mut reader)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = read_u32(&mut reader)? as usize;
    let mut tensors = std::collections::HashMap::new();
    for _ in 0..count {
        let name_len = read_u32(&mut reader)? as usize;
        let mut name = vec![0u8; name_len];
        reader.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = read_u32(&mut reader)? as usize;
        let mut total = 1u64;
        for _ in 0..rank {
            let mut dim = [0u8; 8];
            reader.read_exact(&mut dim)?;
            total = total.saturating_mul(u64::from_le_bytes(dim));
        }
        let mut data = Vec::with_capacity(total as usize);
        let mut buf = [0u8; 8];
        for _ in 0..total {
            reader.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        tensors.insert(name, data);
    }
    for leaf in params.leaves_mut() {
        let data = tensors
            .get(&leaf.name)
            .ok_or_else(|| Error::Format(format!("checkpoint missing tensor {}", leaf.name)))?;
        if data.len() != leaf.data.len() {
            return Err(Error::Format(format!(
                "tensor {} has {} entries, expected {}",
                leaf.name,
                data.len(),
                leaf.data.len()
            )));
        }
        leaf.data.copy_from_slice(data);
    }

    let checkpoint = Checkpoint {
        params,
        epoch: parse_num("epoch")? as usize,
        train_auroc: parse_num("train_auroc")?,
        val_auroc: parse_num("val_auroc")?,
        constraint_met: manifest_get(&map, "constraint_met")? == "true",
    };
    Ok((config, checkpoint))
}

fn read_u32<R: Read>(reader: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
