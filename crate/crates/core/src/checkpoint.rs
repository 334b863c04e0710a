//! Versioned binary checkpoints.
//!
//! Layout: magic `TGCKPT01`, a length-prefixed UTF-8 config block (canonical
//! model config plus epoch, seed, and a config hash), then one record per
//! array: length-prefixed name, a 32-bit extent count, extents as 32-bit
//! little-endian integers, and the raw 64-bit little-endian floats. Arrays
//! are written in deterministic construction order: every store entry
//! (parameters and buffers as registered), followed by allocated momentum
//! buffers under `<name>#m`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{build_model, model_config_from_text, Model, ModelConfig};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TGCKPT01";
pub const FORMAT_VERSION: u32 = 1;

const MOMENTUM_SUFFIX: &str = "#m";
const BUFFER_SUFFIXES: [&str; 3] = [".running_mean", ".running_var", ".count"];

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// A parsed checkpoint: model config, counters, and the named arrays split
/// into trainable parameters, non-trainable buffers, and optimizer state.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    /// Epochs completed within the current stage (the LR schedule resets at
    /// stage boundaries, so this is the scheduler-relevant counter).
    pub epoch: usize,
    /// Curriculum stage this snapshot belongs to.
    pub stage: usize,
    /// Epochs completed across all stages, for log continuity on resume.
    pub global_epoch: usize,
    pub rng_seed: u64,
    pub parameters: Vec<NamedArray>,
    pub buffers: Vec<NamedArray>,
    pub momentum: Vec<NamedArray>,
}

impl Checkpoint {
    /// Total element count over the parameter arrays (the brute-force side of
    /// the parameter-count oracle).
    pub fn parameter_element_sum(&self) -> usize {
        self.parameters.iter().map(|a| a.data.len()).sum()
    }

    /// Reject when the stored config does not hash-match the expected one.
    pub fn verify_config(&self, expected: &ModelConfig) -> Result<()> {
        if self.config.config_hash() != expected.config_hash() {
            return Err(Error::InvalidConfig(format!(
                "checkpoint config hash {:016x} does not match expected {:016x}",
                self.config.config_hash(),
                expected.config_hash()
            )));
        }
        Ok(())
    }
}

fn is_buffer(name: &str) -> bool {
    BUFFER_SUFFIXES.iter().any(|s| name.ends_with(s))
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn write_array(w: &mut impl Write, name: &str, shape: &[usize], data: &[f64]) -> Result<()> {
    put_u32(w, name.len() as u32)?;
    w.write_all(name.as_bytes())?;
    put_u32(w, shape.len() as u32)?;
    for &e in shape {
        put_u32(w, e as u32)?;
    }
    let mut buf = Vec::with_capacity(data.len() * 8);
    for &v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Write a model (and its optimizer state) to a checkpoint file.
pub fn save_checkpoint(model: &Model, epoch: usize, path: &Path) -> Result<()> {
    save_checkpoint_full(model, epoch, 0, epoch, path)
}

/// As [`save_checkpoint`], also recording the curriculum stage and the
/// global epoch counter.
pub fn save_checkpoint_full(
    model: &Model,
    epoch: usize,
    stage: usize,
    global_epoch: usize,
    path: &Path,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(CHECKPOINT_MAGIC)?;
    let config_text = model.config.canonical_text();
    let block = format!(
        "{config_text}checkpoint.config_hash = {:016x}\ncheckpoint.epoch = {epoch}\n\
         checkpoint.format_version = {FORMAT_VERSION}\ncheckpoint.global_epoch = {global_epoch}\n\
         checkpoint.rng_seed = {}\ncheckpoint.stage = {stage}\n",
        model.config.config_hash(),
        model.seed,
    );
    put_u32(&mut out, block.len() as u32)?;
    out.write_all(block.as_bytes())?;

    for e in model.store().iter() {
        write_array(&mut out, &e.name, &e.shape, &e.data)?;
    }
    for e in model.store().iter() {
        if let Some(m) = &e.momentum {
            write_array(&mut out, &format!("{}{MOMENTUM_SUFFIX}", e.name), &e.shape, m)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read and validate a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic in {}", path.display())));
    }
    let block_len = get_u32(&mut r)? as usize;
    let mut block = vec![0u8; block_len];
    r.read_exact(&mut block)?;
    let block = String::from_utf8(block).map_err(|e| Error::Format(e.to_string()))?;

    let mut epoch = None;
    let mut stage = 0usize;
    let mut global_epoch = None;
    let mut rng_seed = None;
    let mut format_version = None;
    let mut stored_hash = None;
    for line in block.lines() {
        if let Some((k, v)) = line.split_once('=') {
            let (k, v) = (k.trim(), v.trim());
            match k {
                "checkpoint.epoch" => epoch = v.parse::<usize>().ok(),
                "checkpoint.stage" => stage = v.parse::<usize>().unwrap_or(0),
                "checkpoint.global_epoch" => global_epoch = v.parse::<usize>().ok(),
                "checkpoint.rng_seed" => rng_seed = v.parse::<u64>().ok(),
                "checkpoint.format_version" => format_version = v.parse::<u32>().ok(),
                "checkpoint.config_hash" => stored_hash = u64::from_str_radix(v, 16).ok(),
                _ => {}
            }
        }
    }
    let format_version =
        format_version.ok_or_else(|| Error::Format("checkpoint missing format_version".into()))?;
    if format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint format version {format_version}")));
    }
    let epoch = epoch.ok_or_else(|| Error::Format("checkpoint missing epoch".into()))?;
    let rng_seed = rng_seed.ok_or_else(|| Error::Format("checkpoint missing rng_seed".into()))?;
    let stored_hash = stored_hash.ok_or_else(|| Error::Format("checkpoint missing config hash".into()))?;

    let config = model_config_from_text(&block)?;
    if config.config_hash() != stored_hash {
        return Err(Error::InvalidConfig(format!(
            "checkpoint config hash mismatch: stored {stored_hash:016x}, recomputed {:016x}",
            config.config_hash()
        )));
    }

    let mut parameters = Vec::new();
    let mut buffers = Vec::new();
    let mut momentum = Vec::new();
    loop {
        let name_len = match get_u32(&mut r) {
            Ok(v) => v as usize,
            Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e),
        };
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes).map_err(|e| Error::Format(e.to_string()))?;
        let ndims = get_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            shape.push(get_u32(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut raw = vec![0u8; numel * 8];
        r.read_exact(&mut raw)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect();
        let arr = NamedArray { name: name.clone(), shape, data };
        if name.ends_with(MOMENTUM_SUFFIX) {
            momentum.push(arr);
        } else if is_buffer(&name) {
            buffers.push(arr);
        } else {
            parameters.push(arr);
        }
    }
    Ok(Checkpoint {
        format_version,
        config,
        epoch,
        stage,
        global_epoch: global_epoch.unwrap_or(epoch),
        rng_seed,
        parameters,
        buffers,
        momentum,
    })
}

/// Rebuild a model from a checkpoint: construct from (config, seed), then
/// overwrite every array by name. Missing or shape-mismatched arrays are
/// rejected.
pub fn model_from_checkpoint(ckpt: &Checkpoint) -> Result<Model> {
    let mut model = build_model(&ckpt.config, ckpt.rng_seed)?;
    let store = model.store_mut();
    let mut seen = 0usize;
    for arr in ckpt.parameters.iter().chain(&ckpt.buffers) {
        let id = store.by_name(&arr.name).ok_or_else(|| {
            Error::Format(format!("checkpoint array `{}` has no matching parameter", arr.name))
        })?;
        let entry = store.entry_mut(id);
        if entry.shape != arr.shape {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint array `{}` has shape {:?}, model expects {:?}",
                arr.name, arr.shape, entry.shape
            )));
        }
        entry.data = arr.data.clone();
        seen += 1;
    }
    if seen != store.len() {
        return Err(Error::Format(format!(
            "checkpoint provides {seen} arrays but the model has {}",
            store.len()
        )));
    }
    for arr in &ckpt.momentum {
        let base = arr.name.trim_end_matches(MOMENTUM_SUFFIX);
        let id = store
            .by_name(base)
            .ok_or_else(|| Error::Format(format!("momentum array `{}` has no parameter", arr.name)))?;
        store.entry_mut(id).momentum = Some(arr.data.clone());
    }
    Ok(model)
}
