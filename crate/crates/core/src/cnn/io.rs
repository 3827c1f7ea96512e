//! Binary model file.
//!
//! ```text
//! magic      4 bytes  "FPLC"
//! version    u8
//! config     input_side u32, kernel_size u32, pool u32, classes u32,
//!            blocks u32, then per block: filters u32, dropout f64
//! tensors    count u32, then per tensor: ndim u32, dims u32 * ndim,
//!            values f32 * prod(dims)
//! ```
//!
//! All integers and floats are little-endian. Tensors appear in
//! [`ModelWeights::tensors`] order.

use std::fs;
use std::path::Path;

use super::{CnnConfig, ModelWeights, NUM_CLASSES};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"FPLC";
pub const FORMAT_VERSION: u8 = 1;

pub fn model_to_bytes(model: &ModelWeights<f32>) -> Vec<u8> {
    let cfg = &model.config;
    let mut out = Vec::with_capacity(64 + 4 * model.parameter_count());
    out.extend_from_slice(&MAGIC);
    out.push(FORMAT_VERSION);
    let u32le = |v: usize, out: &mut Vec<u8>| out.extend_from_slice(&(v as u32).to_le_bytes());
    u32le(cfg.input_side, &mut out);
    u32le(cfg.kernel_size, &mut out);
    u32le(cfg.pool, &mut out);
    u32le(NUM_CLASSES, &mut out);
    u32le(cfg.block_filters.len(), &mut out);
    for (&f, &d) in cfg.block_filters.iter().zip(&cfg.block_dropout) {
        u32le(f, &mut out);
        out.extend_from_slice(&d.to_le_bytes());
    }
    let shapes = ModelWeights::<f32>::tensor_shapes(cfg);
    let tensors = model.tensors();
    u32le(tensors.len(), &mut out);
    for (shape, values) in shapes.iter().zip(tensors) {
        u32le(shape.len(), &mut out);
        for &d in shape {
            u32le(d, &mut out);
        }
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptModel(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ModelWeights<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::CorruptModel("bad magic".into()));
    }
    let version = r.u8()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let input_side = r.u32()?;
    let kernel_size = r.u32()?;
    let pool = r.u32()?;
    let classes = r.u32()?;
    if classes != NUM_CLASSES {
        return Err(Error::CorruptModel(format!("{classes} output classes")));
    }
    let blocks = r.u32()?;
    if blocks > 64 {
        return Err(Error::CorruptModel(format!("{blocks} blocks")));
    }
    let mut block_filters = Vec::with_capacity(blocks);
    let mut block_dropout = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        block_filters.push(r.u32()?);
        block_dropout.push(r.f64()?);
    }
    let config = CnnConfig {
        input_side,
        block_filters,
        block_dropout,
        kernel_size,
        pool,
    };
    config
        .validate()
        .map_err(|e| Error::CorruptModel(format!("config: {e}")))?;

    let shapes = ModelWeights::<f32>::tensor_shapes(&config);
    if r.u32()? != shapes.len() {
        return Err(Error::CorruptModel(
            "tensor count does not match config".into(),
        ));
    }
    let mut tensors = Vec::with_capacity(shapes.len());
    for expected in &shapes {
        let ndim = r.u32()?;
        let dims = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if &dims != expected {
            return Err(Error::CorruptModel(format!(
                "tensor shape {dims:?}, expected {expected:?}"
            )));
        }
        let len: usize = dims.iter().product();
        let raw = r.take(len * 4)?;
        tensors.push(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect::<Vec<f32>>(),
        );
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptModel(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let model = ModelWeights::from_tensors(config, tensors);
    if model
        .blocks
        .iter()
        .any(|b| b.running_var.iter().any(|&v| v < 0.0))
    {
        return Err(Error::CorruptModel("negative running variance".into()));
    }
    Ok(model)
}

pub fn save_model(model: &ModelWeights<f32>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelWeights<f32>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    model_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::init_model;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let model = init_model(&CnnConfig::reduced(20), 7).unwrap();
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(loaded.checksum(), model.checksum());
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let bytes = model_to_bytes(&init_model(&CnnConfig::reduced(12), 1).unwrap());
        for cut in [0, 3, 5, 20, bytes.len() - 1] {
            assert!(matches!(
                model_from_bytes(&bytes[..cut]),
                Err(Error::CorruptModel(_))
            ));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            model_from_bytes(&extra),
            Err(Error::CorruptModel(_))
        ));
    }

    #[test]
    fn bumped_version_is_rejected() {
        let mut bytes = model_to_bytes(&init_model(&CnnConfig::reduced(12), 1).unwrap());
        bytes[4] += 1;
        assert!(matches!(
            model_from_bytes(&bytes),
            Err(Error::VersionMismatch {
                found: 2,
                expected: 1
            })
        ));
    }

    #[test]
    fn header_layout() {
        let bytes = model_to_bytes(&init_model(&CnnConfig::reduced(12), 1).unwrap());
        assert_eq!(&bytes[..4], b"FPLC");
        assert_eq!(bytes[4], FORMAT_VERSION);
        assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), 12);
    }
}
