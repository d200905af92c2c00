//! Versioned binary checkpoint format for model parameters.
//!
//! Layout: magic, format version, model kind, the layer-spec table, predictor
//! metadata, then named little-endian f64 arrays in declaration order.
//! Round-trips are byte-exact.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::Error;
use crate::tensornet::{LayerKind, LayerSpec};
use crate::Result;

const MAGIC: &[u8; 8] = b"BEAMCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    GroupedLstm,
    NoPrior,
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            ModelKind::GroupedLstm => 0,
            ModelKind::NoPrior => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ModelKind::GroupedLstm),
            1 => Some(ModelKind::NoPrior),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    pub layers: Vec<LayerSpec>,
    pub history_len: usize,
    pub interpolation_factor: usize,
    pub num_beams: usize,
    pub input_width: usize,
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    header: &CheckpointHeader,
    arrays: &[(&str, &[f64])],
) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(header.kind.tag());
    buf.extend_from_slice(&(header.layers.len() as u32).to_le_bytes());
    for l in &header.layers {
        buf.push(l.kind.tag());
        for v in [l.in_channels, l.out_channels, l.kernel_size, l.stride] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
    }
    for v in [header.history_len, header.interpolation_factor, header.num_beams, header.input_width]
    {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, data) in arrays {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.extend_from_slice(&(data.len() as u64).to_le_bytes());
        for v in *data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Reader {
    buf: Vec<u8>,
    pos: usize,
}

impl Reader {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CorruptFile("checkpoint truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n * 8)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(CheckpointHeader, Vec<(String, Vec<f64>)>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::CorruptFile("bad checkpoint magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::VersionMismatch { found: version, expected: VERSION });
    }
    let kind = ModelKind::from_tag(r.u8()?)
        .ok_or_else(|| Error::CorruptFile("unknown model kind".into()))?;
    let n_layers = r.u32()? as usize;
    if n_layers > 64 {
        return Err(Error::CorruptFile("implausible layer count".into()));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let kind = LayerKind::from_tag(r.u8()?)
            .ok_or_else(|| Error::CorruptFile("unknown layer kind".into()))?;
        let in_channels = r.u32()? as usize;
        let out_channels = r.u32()? as usize;
        let kernel_size = r.u32()? as usize;
        let stride = r.u32()? as usize;
        layers.push(LayerSpec { kind, in_channels, out_channels, kernel_size, stride });
    }
    let history_len = r.u32()? as usize;
    let interpolation_factor = r.u32()? as usize;
    let num_beams = r.u32()? as usize;
    let input_width = r.u32()? as usize;
    let n_arrays = r.u32()? as usize;
    let mut arrays = Vec::with_capacity(n_arrays);
    for _ in 0..n_arrays {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::CorruptFile("bad array name".into()))?;
        let len = r.u64()? as usize;
        arrays.push((name, r.f64_vec(len)?));
    }
    if r.pos != r.buf.len() {
        return Err(Error::CorruptFile("trailing bytes after checkpoint payload".into()));
    }
    Ok((
        CheckpointHeader { kind, layers, history_len, interpolation_factor, num_beams, input_width },
        arrays,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("beamsim-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let header = CheckpointHeader {
            kind: ModelKind::GroupedLstm,
            layers: LayerSpec::classifier_stack(32),
            history_len: 5,
            interpolation_factor: 4,
            num_beams: 32,
            input_width: 8,
        };
        let a = vec![1.5, -2.25, 1e-300, f64::MAX];
        let b = vec![0.0; 7];
        let path = temp_path("roundtrip.ckpt");
        save_checkpoint(&path, &header, &[("w", &a), ("b", &b)]).unwrap();
        let (h2, arrays) = load_checkpoint(&path).unwrap();
        assert_eq!(header, h2);
        assert_eq!(arrays[0], ("w".to_string(), a));
        assert_eq!(arrays[1], ("b".to_string(), b));

        // Byte-identical on re-save.
        let path2 = temp_path("roundtrip2.ckpt");
        let refs: Vec<(&str, &[f64])> =
            arrays.iter().map(|(n, d)| (n.as_str(), d.as_slice())).collect();
        save_checkpoint(&path2, &h2, &refs).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn truncated_checkpoint_is_corrupt() {
        let header = CheckpointHeader {
            kind: ModelKind::NoPrior,
            layers: LayerSpec::no_prior_stack(8),
            history_len: 1,
            interpolation_factor: 1,
            num_beams: 8,
            input_width: 8,
        };
        let path = temp_path("trunc.ckpt");
        save_checkpoint(&path, &header, &[("w", &[1.0, 2.0, 3.0])]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        match load_checkpoint(&path) {
            Err(Error::CorruptFile(_)) => {}
            other => panic!("expected corrupt-file error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_magic_and_version_are_distinct_errors() {
        let path = temp_path("magic.ckpt");
        std::fs::write(&path, b"NOTMAGIC________").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::CorruptFile(_))));

        let header = CheckpointHeader {
            kind: ModelKind::NoPrior,
            layers: vec![],
            history_len: 1,
            interpolation_factor: 1,
            num_beams: 2,
            input_width: 4,
        };
        let path2 = temp_path("version.ckpt");
        save_checkpoint(&path2, &header, &[]).unwrap();
        let mut bytes = std::fs::read(&path2).unwrap();
        bytes[8] = 99; // bump version field
        std::fs::write(&path2, bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path2),
            Err(Error::VersionMismatch { found: 99, expected: 1 })
        ));
    }
}
