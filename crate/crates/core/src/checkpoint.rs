//! Versioned binary container for network weights.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   b"MA3CKPT\0"
//! version u32
//! n_meta  u32, then n_meta × (key: str, value: str)
//! n_tens  u32, then n_tens × (name: str, dtype: u8, ndim: u32, dims: ndim × u64, data)
//! str     = u32 byte length + UTF-8
//! dtype   0 = f64, 1 = f32
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::adversary::AdversaryNet;
use crate::config::{parse_config, to_config_text};
use crate::error::{Error, Result};
use crate::fewshot::EmbeddingNet;
use crate::nn::Sequential;
use crate::trainer::{stream_rng, streams, Precision, TrainConfig};

pub const MAGIC: &[u8; 8] = b"MA3CKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub precision: Precision,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub metadata: Vec<(String, String)>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION).unwrap();
        out.write_u32::<LittleEndian>(self.metadata.len() as u32).unwrap();
        for (k, v) in &self.metadata {
            write_str(&mut out, k);
            write_str(&mut out, v);
        }
        out.write_u32::<LittleEndian>(self.tensors.len() as u32).unwrap();
        for t in &self.tensors {
            write_str(&mut out, &t.name);
            out.write_u8(match t.precision {
                Precision::F64 => 0,
                Precision::F32 => 1,
            })
            .unwrap();
            out.write_u32::<LittleEndian>(t.shape.len() as u32).unwrap();
            for &d in &t.shape {
                out.write_u64::<LittleEndian>(d as u64).unwrap();
            }
            for &v in &t.data {
                match t.precision {
                    Precision::F64 => out.write_f64::<LittleEndian>(v).unwrap(),
                    Precision::F32 => out.write_f32::<LittleEndian>(v as f32).unwrap(),
                }
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let r = &mut bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
        if version != VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: VERSION,
            });
        }
        let n_meta = r.read_u32::<LittleEndian>().map_err(truncated)?;
        let mut metadata = Vec::new();
        for _ in 0..n_meta {
            metadata.push((read_str(r)?, read_str(r)?));
        }
        let n_tensors = r.read_u32::<LittleEndian>().map_err(truncated)?;
        let mut tensors = Vec::new();
        for _ in 0..n_tensors {
            let name = read_str(r)?;
            let precision = match r.read_u8().map_err(truncated)? {
                0 => Precision::F64,
                1 => Precision::F32,
                d => return Err(Error::Checkpoint(format!("tensor `{name}` has unknown dtype {d}"))),
            };
            let ndim = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
            let shape = (0..ndim)
                .map(|_| r.read_u64::<LittleEndian>().map(|d| d as usize).map_err(truncated))
                .collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let width = if precision == Precision::F64 { 8 } else { 4 };
            if r.len() < len * width {
                return Err(truncated(std::io::ErrorKind::UnexpectedEof.into()));
            }
            let data = (0..len)
                .map(|_| match precision {
                    Precision::F64 => r.read_f64::<LittleEndian>(),
                    Precision::F32 => r.read_f32::<LittleEndian>().map(f64::from),
                })
                .collect::<std::io::Result<Vec<_>>>()
                .map_err(truncated)?;
            tensors.push(NamedTensor {
                name,
                shape,
                precision,
                data,
            });
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        Ok(Self { metadata, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::read(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn truncated(e: std::io::Error) -> Error {
    Error::Checkpoint(format!("truncated: {e}"))
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.write_u32::<LittleEndian>(s.len() as u32).unwrap();
    out.extend_from_slice(s.as_bytes());
}

fn read_str(r: &mut &[u8]) -> Result<String> {
    let len = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    if r.len() < len {
        return Err(Error::Checkpoint("truncated string".into()));
    }
    let (s, rest) = r.split_at(len);
    *r = rest;
    String::from_utf8(s.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
}

/// Parameters and buffers of `net` as `{prefix}.{layer}.{name}`.
fn export(net: &Sequential, prefix: &str, precision: Precision, out: &mut Vec<NamedTensor>) {
    for (i, layer) in net.layers.iter().enumerate() {
        for p in layer.params() {
            out.push(NamedTensor {
                name: format!("{prefix}.{i}.{}", p.name),
                shape: p.shape.clone(),
                precision,
                data: p.value.clone(),
            });
        }
        for b in layer.buffers() {
            out.push(NamedTensor {
                name: format!("{prefix}.{i}.{}", b.name),
                shape: vec![b.value.len()],
                precision,
                data: b.value.clone(),
            });
        }
    }
}

fn import(net: &mut Sequential, prefix: &str, ckpt: &Checkpoint) -> Result<()> {
    for (i, layer) in net.layers.iter_mut().enumerate() {
        let fill = |name: &str, shape: &[usize], dst: &mut Vec<f64>| -> Result<()> {
            let key = format!("{prefix}.{i}.{name}");
            let t = ckpt
                .tensor(&key)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{key}`")))?;
            if t.shape != shape {
                return Err(Error::Checkpoint(format!(
                    "tensor `{key}` has shape {:?}, expected {shape:?}",
                    t.shape
                )));
            }
            dst.copy_from_slice(&t.data);
            Ok(())
        };
        for p in layer.params_mut() {
            let shape = p.shape.clone();
            fill(&p.name.clone(), &shape, &mut p.value)?;
        }
        for b in layer.buffers_mut() {
            let shape = vec![b.value.len()];
            fill(&b.name.clone(), &shape, &mut b.value)?;
        }
    }
    Ok(())
}

/// Saved networks plus the config that built them.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub config: TrainConfig,
    pub episode: usize,
    pub classifier: EmbeddingNet,
    pub adversary: AdversaryNet,
}

pub fn snapshot_to_checkpoint(
    config: &TrainConfig,
    episode: usize,
    classifier: &EmbeddingNet,
    adversary: &AdversaryNet,
) -> Checkpoint {
    let mut tensors = Vec::new();
    export(&classifier.net, "classifier", config.precision, &mut tensors);
    export(&adversary.net, "adversary", config.precision, &mut tensors);
    let c = &classifier.config;
    Checkpoint {
        metadata: vec![
            ("config".into(), to_config_text(config)),
            ("episode".into(), episode.to_string()),
            ("input".into(), format!("{}x{}x{}", c.height, c.width, c.in_channels)),
            (
                "classifier_arch".into(),
                serde_json::to_string(&classifier.config).expect("serialize"),
            ),
            (
                "adversary_arch".into(),
                serde_json::to_string(&adversary.config).expect("serialize"),
            ),
        ],
        tensors,
    }
}

pub fn checkpoint_to_snapshot(ckpt: &Checkpoint) -> Result<Snapshot> {
    let text = ckpt
        .meta("config")
        .ok_or_else(|| Error::Checkpoint("missing `config` metadata".into()))?;
    let config = parse_config(text, &[])?;
    let classifier_cfg = serde_json::from_str(
        ckpt.meta("classifier_arch")
            .ok_or_else(|| Error::Checkpoint("missing `classifier_arch` metadata".into()))?,
    )
    .map_err(|e| Error::Checkpoint(format!("classifier_arch: {e}")))?;
    let adversary_cfg = serde_json::from_str(
        ckpt.meta("adversary_arch")
            .ok_or_else(|| Error::Checkpoint("missing `adversary_arch` metadata".into()))?,
    )
    .map_err(|e| Error::Checkpoint(format!("adversary_arch: {e}")))?;
    let episode = ckpt.meta("episode").and_then(|e| e.parse().ok()).unwrap_or(0);
    let mut classifier = EmbeddingNet::new(classifier_cfg, &mut stream_rng(config.seed, streams::CLASSIFIER_INIT))?;
    let mut adversary = AdversaryNet::new(adversary_cfg, &mut stream_rng(config.seed, streams::ADVERSARY_INIT))?;
    import(&mut classifier.net, "classifier", ckpt)?;
    import(&mut adversary.net, "adversary", ckpt)?;
    Ok(Snapshot {
        config,
        episode,
        classifier,
        adversary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{TaskData, TrainMode, Trainer};

    fn trained() -> (Trainer, TaskData) {
        let cfg = TrainConfig {
            mode: TrainMode::Ma3,
            episodes: 3,
            eval_every: 3,
            val_episodes: 2,
            n_way: 2,
            q_query: 1,
            blocks: 1,
            filters: 2,
            h_dim: 4,
            adv_filters: 2,
            image_size: 8,
            ..TrainConfig::default()
        };
        let data = TaskData::from_config(&cfg).unwrap();
        let mut t = Trainer::for_task(cfg, &data).unwrap();
        t.run(&data, |_, _| Ok(())).unwrap();
        (t, data)
    }

    #[test]
    fn round_trip_restores_every_value() {
        let (t, _) = trained();
        let ckpt = snapshot_to_checkpoint(&t.config, 3, &t.classifier, &t.adversary);
        let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        assert_eq!(back, ckpt);
        let snap = checkpoint_to_snapshot(&back).unwrap();
        assert_eq!(snap.config, t.config);
        assert_eq!(snap.episode, 3);
        assert_eq!(snap.classifier.net.state_checksum(), t.classifier.net.state_checksum());
        assert_eq!(snap.adversary.net.state_checksum(), t.adversary.net.state_checksum());
    }

    #[test]
    fn f32_storage_rounds() {
        let (t, _) = trained();
        let cfg = TrainConfig {
            precision: Precision::F32,
            ..t.config.clone()
        };
        let ckpt = snapshot_to_checkpoint(&cfg, 3, &t.classifier, &t.adversary);
        let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        for (a, b) in ckpt.tensors.iter().zip(&back.tensors) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(*y, *x as f32 as f64);
            }
        }
        assert!(
            ckpt.to_bytes().len()
                < snapshot_to_checkpoint(&t.config, 3, &t.classifier, &t.adversary)
                    .to_bytes()
                    .len()
        );
    }

    #[test]
    fn version_and_corruption_errors() {
        let (t, _) = trained();
        let mut bytes = snapshot_to_checkpoint(&t.config, 3, &t.classifier, &t.adversary).to_bytes();
        let good = bytes.clone();
        bytes[8] = 2;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::CheckpointVersion { found: 2, expected: 1 })
        ));
        assert!(matches!(
            Checkpoint::from_bytes(&good[..good.len() - 3]),
            Err(Error::Checkpoint(_))
        ));
        assert!(matches!(Checkpoint::from_bytes(b"NOTACKPT"), Err(Error::Checkpoint(_))));
        let mut missing = Checkpoint::from_bytes(&good).unwrap();
        missing.tensors.pop();
        assert!(checkpoint_to_snapshot(&missing).is_err());
    }
}
