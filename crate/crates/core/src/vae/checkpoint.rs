//! Checkpoint directories.
//!
//! ```text
//! <dir>/params.bin       little-endian f32 blocks, back to back
//! <dir>/params.manifest  one line per block: name <TAB> shape <TAB> offset <TAB> len
//! <dir>/config.txt       key=value (network config, seed, training scalars)
//! ```
//! Offsets and lengths count `f32` elements from the start of `params.bin`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Network, INIT_SCHEME};
use crate::synthdata::ImageShape;
use crate::textkv::{self, KeyValues};

use super::{NetworkConfig, Vae};

pub const CHECKPOINT_FORMAT_VERSION: &str = "dava-lab-checkpoint/1";

/// A named `f32` array with its logical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Default)]
pub struct CheckpointWriter {
    blocks: Vec<Block>,
    config: Vec<(String, String)>,
}

impl CheckpointWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn block(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> &mut Self {
        self.blocks.push(Block { name: name.into(), shape, data });
        self
    }

    /// One block per parameter array of `net`, prefixed with `prefix.`.
    pub fn network(&mut self, prefix: &str, net: &Network<f32>) -> &mut Self {
        for spec in net.specs() {
            let data = net.params[spec.offset..spec.offset + spec.len()].to_vec();
            self.block(format!("{prefix}.{}", spec.name), spec.shape.clone(), data);
        }
        self
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.config.push((key.into(), value.to_string()));
        self
    }

    pub fn network_config(&mut self, cfg: &NetworkConfig) -> &mut Self {
        let join = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        self.set("z_dim", cfg.z_dim)
            .set("height", cfg.input_shape.height)
            .set("width", cfg.input_shape.width)
            .set("channels", cfg.input_shape.channels)
            .set("encoder_channels", join(&cfg.encoder_channels))
            .set("decoder_channels", join(&cfg.decoder_channels))
            .set("hidden_units", cfg.hidden_units)
            .set("init_scheme", INIT_SCHEME)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut bytes = Vec::new();
        let mut manifest = String::new();
        let mut offset = 0usize;
        for b in &self.blocks {
            if b.data.len() != b.shape.iter().product::<usize>() {
                return Err(Error::shape(b.shape.iter().product::<usize>(), b.data.len()));
            }
            let shape = b.shape.iter().map(ToString::to_string).collect::<Vec<_>>().join("x");
            manifest.push_str(&format!("{}\t{}\t{}\t{}\n", b.name, shape, offset, b.data.len()));
            for v in &b.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            offset += b.data.len();
        }
        let mut config = format!("format_version={CHECKPOINT_FORMAT_VERSION}\n");
        for (k, v) in &self.config {
            config.push_str(&format!("{k}={v}\n"));
        }
        for (name, content) in [("params.bin", bytes), ("params.manifest", manifest.into_bytes()), ("config.txt", config.into_bytes())] {
            let path = dir.join(name);
            fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// A loaded checkpoint directory.
#[derive(Debug)]
pub struct Checkpoint {
    blocks: BTreeMap<String, Block>,
    config: KeyValues,
    dir: std::path::PathBuf,
}

impl Checkpoint {
    pub fn read(dir: &Path) -> Result<Self> {
        let cfg_path = dir.join("config.txt");
        let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let config = textkv::parse(&text, &cfg_path)?;
        let version = config.get_str("format_version")?;
        if version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::format(&cfg_path, format!("unsupported version `{version}`")));
        }
        let bin_path = dir.join("params.bin");
        let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::format(&bin_path, "length is not a multiple of 4"));
        }
        let values: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let man_path = dir.join("params.manifest");
        let manifest = fs::read_to_string(&man_path).map_err(|e| Error::io(&man_path, e))?;
        let mut blocks = BTreeMap::new();
        for line in manifest.lines().filter(|l| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = || Error::format(&man_path, format!("bad manifest line `{line}`"));
            if fields.len() != 4 {
                return Err(bad());
            }
            let shape = fields[1].split('x').map(str::parse).collect::<std::result::Result<Vec<usize>, _>>().map_err(|_| bad())?;
            let offset: usize = fields[2].parse().map_err(|_| bad())?;
            let len: usize = fields[3].parse().map_err(|_| bad())?;
            if len != shape.iter().product::<usize>() || offset + len > values.len() {
                return Err(bad());
            }
            let block = Block { name: fields[0].to_string(), shape, data: values[offset..offset + len].to_vec() };
            blocks.insert(block.name.clone(), block);
        }
        Ok(Checkpoint { blocks, config, dir: dir.to_path_buf() })
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.config.get_str(key)
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.config.get_parsed(key)
    }

    pub fn block(&self, name: &str) -> Result<&Block> {
        self.blocks.get(name).ok_or_else(|| Error::format(&self.dir, format!("missing block `{name}`")))
    }

    /// Copies every `prefix.*` parameter block into `net`, checking shapes.
    pub fn load_network(&self, prefix: &str, net: &mut Network<f32>) -> Result<()> {
        for spec in net.specs().to_vec() {
            let b = self.block(&format!("{prefix}.{}", spec.name))?;
            if b.shape != spec.shape {
                return Err(Error::shape(format!("{:?}", spec.shape), format!("{:?}", b.shape)));
            }
            net.params[spec.offset..spec.offset + spec.len()].copy_from_slice(&b.data);
        }
        Ok(())
    }

    pub fn network_config(&self) -> Result<NetworkConfig> {
        let list = |key: &str| -> Result<Vec<usize>> {
            self.get(key)?
                .split(',')
                .map(|v| v.parse().map_err(|_| Error::format(&self.dir, format!("bad `{key}`"))))
                .collect()
        };
        let enc = list("encoder_channels")?;
        let dec = list("decoder_channels")?;
        let cfg = NetworkConfig {
            z_dim: self.get_parsed("z_dim")?,
            input_shape: ImageShape {
                height: self.get_parsed("height")?,
                width: self.get_parsed("width")?,
                channels: self.get_parsed("channels")?,
            },
            encoder_channels: enc.try_into().map_err(|_| Error::format(&self.dir, "need 4 encoder channels"))?,
            decoder_channels: dec.try_into().map_err(|_| Error::format(&self.dir, "need 3 decoder channels"))?,
            hidden_units: self.get_parsed("hidden_units")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Rebuilds the encoder/decoder pair stored in this checkpoint.
    pub fn load_vae(&self) -> Result<Vae> {
        let cfg = self.network_config()?;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut vae = Vae::new(cfg, &mut rng)?;
        self.load_network("encoder", &mut vae.encoder)?;
        self.load_network("decoder", &mut vae.decoder)?;
        Ok(vae)
    }
}

/// Writes a bare model checkpoint (no training state).
pub fn save_vae(vae: &Vae, seed: u64, dir: &Path) -> Result<()> {
    let mut w = CheckpointWriter::new();
    w.network_config(&vae.config).set("seed", seed);
    w.network("encoder", &vae.encoder).network("decoder", &vae.decoder);
    w.write(dir)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn reload_reproduces_forward_passes_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = NetworkConfig::new(6, ImageShape { height: 16, width: 16, channels: 1 });
        let vae: Vae = Vae::new(cfg, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_vae(&vae, 21, dir.path()).unwrap();
        let ck = Checkpoint::read(dir.path()).unwrap();
        assert_eq!(ck.get_parsed::<u64>("seed").unwrap(), 21);
        let back = ck.load_vae().unwrap();
        assert_eq!(back, vae);
        let x: Vec<f32> = (0..2 * 256).map(|i| (i % 5) as f32 / 5.0).collect();
        assert_eq!(back.encode(&x, 2).unwrap(), vae.encode(&x, 2).unwrap());
        let z = vec![0.25f32; 12];
        assert_eq!(back.decode(&z, 2).unwrap(), vae.decode(&z, 2).unwrap());
    }

    #[test]
    fn manifest_lists_names_shapes_and_offsets() {
        let mut w = CheckpointWriter::new();
        w.block("a", vec![2, 3], vec![0.0; 6]).block("b", vec![4], vec![1.0; 4]);
        let dir = tempfile::tempdir().unwrap();
        w.write(dir.path()).unwrap();
        let manifest = std::fs::read_to_string(dir.path().join("params.manifest")).unwrap();
        assert_eq!(manifest, "a\t2x3\t0\t6\nb\t4\t6\t4\n");
        assert_eq!(std::fs::metadata(dir.path().join("params.bin")).unwrap().len(), 40);
    }
}
