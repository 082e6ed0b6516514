//! Versioned binary checkpoints.
//!
//! Layout: magic bytes, format version, the config fields as little-endian
//! integers (the dropout rate travels as its IEEE-754 bit pattern), then the
//! weight tensors as 64-bit little-endian floats in declared parameter
//! order. The header is readable without touching the weights.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ModelConfig, ModelError, ModelParams};

const MAGIC: &[u8; 4] = b"GDMP";
const FORMAT_VERSION: u32 = 1;

fn write_u32<W: Write>(out: &mut W, value: usize) -> Result<(), ModelError> {
    let value = u32::try_from(value).map_err(|_| {
        ModelError::CheckpointFormat(format!("config field {value} exceeds u32 range"))
    })?;
    out.write_all(&value.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(reader: &mut R) -> Result<u32, ModelError> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(reader: &mut R) -> Result<u64, ModelError> {
    let mut buf = [0u8; 8];
    reader.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn write_header<W: Write>(out: &mut W, config: &ModelConfig) -> Result<(), ModelError> {
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    write_u32(out, config.n_layers)?;
    write_u32(out, config.hidden)?;
    write_u32(out, config.n_heads)?;
    write_u32(out, config.ff_dim)?;
    write_u32(out, config.max_len)?;
    write_u32(out, config.vocab_size)?;
    write_u32(out, config.n_classes)?;
    out.write_all(&config.dropout_rate.to_bits().to_le_bytes())?;
    Ok(())
}

fn read_header_from<R: Read>(reader: &mut R) -> Result<ModelConfig, ModelError> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ModelError::CheckpointFormat(
            "bad magic bytes; not a model checkpoint".to_owned(),
        ));
    }
    let version = read_u32(reader)?;
    if version != FORMAT_VERSION {
        return Err(ModelError::CheckpointFormat(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let config = ModelConfig {
        n_layers: read_u32(reader)? as usize,
        hidden: read_u32(reader)? as usize,
        n_heads: read_u32(reader)? as usize,
        ff_dim: read_u32(reader)? as usize,
        max_len: read_u32(reader)? as usize,
        vocab_size: read_u32(reader)? as usize,
        n_classes: read_u32(reader)? as usize,
        dropout_rate: f64::from_bits(read_u64(reader)?),
    };
    config.validate().map_err(|e| {
        ModelError::CheckpointFormat(format!("header holds an invalid config: {e}"))
    })?;
    Ok(config)
}

/// Reads just the config from a checkpoint header.
pub fn read_header(path: &Path) -> Result<ModelConfig, ModelError> {
    let mut reader = BufReader::new(File::open(path)?);
    read_header_from(&mut reader)
}

/// Writes a checkpoint atomically (temp file in the same directory, then
/// rename).
pub fn save_params(params: &ModelParams, path: &Path) -> Result<(), ModelError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp_path = match dir {
        Some(dir) => dir.join(format!(
            ".{}.tmp",
            path.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "checkpoint".to_owned())
        )),
        None => Path::new(".checkpoint.tmp").to_path_buf(),
    };
    {
        let mut out = BufWriter::new(File::create(&tmp_path)?);
        write_header(&mut out, &params.config)?;
        for view in params.views() {
            for value in view.values {
                out.write_all(&value.to_le_bytes())?;
            }
        }
        out.flush()?;
    }
    std::fs::rename(&tmp_path, path)?;
    Ok(())
}

/// Loads a checkpoint written by [`save_params`]. The round trip is
/// bit-exact.
pub fn load_params(path: &Path) -> Result<ModelParams, ModelError> {
    let mut reader = BufReader::new(File::open(path)?);
    let config = read_header_from(&mut reader)?;
    let mut params = ModelParams::zeros_like(&config);
    let mut buf = [0u8; 8];
    for view in params.views_mut() {
        let name = view.name;
        for value in view.values.iter_mut() {
            reader.read_exact(&mut buf).map_err(|_| {
                ModelError::CheckpointFormat(format!("checkpoint truncated inside {name}"))
            })?;
            *value = f64::from_le_bytes(buf);
            if !value.is_finite() {
                return Err(ModelError::CheckpointFormat(format!(
                    "non-finite weight in {name}"
                )));
            }
        }
    }
    if reader.read(&mut buf)? != 0 {
        return Err(ModelError::CheckpointFormat(
            "trailing bytes after the declared weights".to_owned(),
        ));
    }
    Ok(params)
}
