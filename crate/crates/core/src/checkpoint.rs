//! Parameter checkpoints: a versioned header, an inline manifest of
//! (name, shape, dtype, freeze flag) per tensor, and raw little-endian
//! f32 payloads. Byte-stable for equal parameters.

use crate::error::{Error, Result};
use crate::model::ParameterStore;
use crate::tensor::{Mat, Real};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"CGRCKPT\0";
const VERSION: u16 = 1;
const DTYPE_F32: u8 = 0;

pub fn save_store<F: Real>(store: &ParameterStore<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, tensor) in store.iter() {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u32).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        let (rows, cols) = tensor.data.shape();
        buf.extend_from_slice(&(rows as u64).to_le_bytes());
        buf.extend_from_slice(&(cols as u64).to_le_bytes());
        buf.push(DTYPE_F32);
        buf.push(u8::from(tensor.frozen));
        for v in tensor.data.to_f32_vec() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_store<F: Real>(path: impl AsRef<Path>) -> Result<ParameterStore<F>> {
    let path = path.as_ref();
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;

    let mut at = 0usize;
    let take = |at: &mut usize, len: usize| -> Result<&[u8]> {
        if *at + len > bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{}: truncated at offset {at}",
                path.display()
            )));
        }
        let s = &bytes[*at..*at + len];
        *at += len;
        Ok(s)
    };

    if take(&mut at, 8)? != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: bad magic; not a checkpoint",
            path.display()
        )));
    }
    let version = u16::from_le_bytes(take(&mut at, 2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let count = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap());
    let mut store = ParameterStore::new();
    for _ in 0..count {
        let name_len = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut at, name_len)?.to_vec())
            .map_err(|e| Error::Checkpoint(format!("{}: tensor name: {e}", path.display())))?;
        let rows = u64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()) as usize;
        let cols = u64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()) as usize;
        let dtype = take(&mut at, 1)?[0];
        if dtype != DTYPE_F32 {
            return Err(Error::Checkpoint(format!(
                "{}: unknown dtype {dtype} for {name}",
                path.display()
            )));
        }
        let frozen = take(&mut at, 1)?[0] != 0;
        let payload = take(&mut at, rows * cols * 4)?;
        let mut data = Vec::with_capacity(rows * cols);
        for chunk in payload.chunks_exact(4) {
            data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        store.insert(name, Mat::<F>::from_f32_slice(rows, cols, &data), frozen);
    }
    if at != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{}: {} trailing bytes",
            path.display(),
            bytes.len() - at
        )));
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_backbone, ModelConfig};

    fn store() -> ParameterStore<f32> {
        let cfg = ModelConfig {
            d_model: 8,
            num_heads: 2,
            num_layers: 1,
            vocab_size: 11,
            max_positions: 16,
            ffn_multiplier: 4,
        };
        init_backbone(&cfg, 3).unwrap()
    }

    #[test]
    fn round_trip_preserves_tensors_and_freeze_flags() {
        let mut s = store();
        let idx = s.idx_of("enc.0.ffn.w1").unwrap();
        s.tensor_mut(idx).frozen = true;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_store(&s, &path).unwrap();
        let loaded: ParameterStore<f32> = load_store(&path).unwrap();
        assert_eq!(s, loaded);
    }

    #[test]
    fn bytes_are_stable_for_equal_parameters() {
        let s = store();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        save_store(&s, &a).unwrap();
        save_store(&s, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(load_store::<f32>(&path).is_err());
    }
}
