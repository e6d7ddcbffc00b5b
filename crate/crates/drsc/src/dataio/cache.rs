//! On-disk feature cache.
//!
//! Each dataset entry is stored as one binary file holding its token ids,
//! token count, and mel grid. A `params.json` sidecar in the cache directory
//! records every knob that shaped the features; any mismatch invalidates the
//! whole directory so stale features are never silently reused.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::autograd::Tensor;
use crate::dataio::filter::FilterSpec;
use crate::dataio::mel::MelSpec;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DRSCFT01";
pub const CACHE_VERSION: u32 = 1;

/// Everything that determines feature content. Stored as `params.json`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CacheParams {
    pub version: u32,
    pub mel: MelSpec,
    pub filter: FilterSpec,
    pub l_max: usize,
    pub t_max: usize,
    pub vocab_hash: String,
}

/// One entry's features, ready to batch.
#[derive(Clone, Debug, PartialEq)]
pub struct CachedFeatures {
    pub token_ids: Vec<usize>,
    pub length: usize,
    pub mel: Tensor,
}

pub struct FeatureCache {
    dir: PathBuf,
    pub params: CacheParams,
}

fn write_array(w: &mut impl Write, dims: &[u32], data: &[f32]) -> Result<()> {
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    for &v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_array(r: &mut impl Read) -> Result<(Vec<u32>, Vec<f32>)> {
    let ndim = read_u32(r)? as usize;
    if ndim > 4 {
        return Err(Error::Data(format!("cache array has {ndim} dims, limit 4")));
    }
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        dims.push(read_u32(r)?);
    }
    let len: usize = dims.iter().map(|&d| d as usize).product();
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((dims, data))
}

impl FeatureCache {
    /// Open (or initialize) a cache directory. If a `params.json` exists and
    /// differs from `params`, every cached file is removed first.
    pub fn open(dir: &Path, params: CacheParams) -> Result<FeatureCache> {
        std::fs::create_dir_all(dir)?;
        let sidecar = dir.join("params.json");
        let mut stale = false;
        if sidecar.exists() {
            let existing: CacheParams = serde_json::from_str(&std::fs::read_to_string(&sidecar)?)?;
            stale = existing != params;
        }
        if stale {
            for entry in std::fs::read_dir(dir)? {
                let p = entry?.path();
                if p.extension().is_some_and(|e| e == "bin") {
                    std::fs::remove_file(p)?;
                }
            }
            eprintln!("feature cache {}: parameters changed, rebuilt from scratch", dir.display());
        }
        std::fs::write(&sidecar, serde_json::to_string_pretty(&params)?)?;
        Ok(FeatureCache { dir: dir.to_path_buf(), params })
    }

    fn entry_path(&self, id: &str) -> PathBuf {
        // ids come from file stems; keep them filesystem-safe anyway
        let safe: String = id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        self.dir.join(format!("{safe}.bin"))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entry_path(id).exists()
    }

    pub fn store(&self, id: &str, features: &CachedFeatures) -> Result<()> {
        if features.token_ids.len() != self.params.l_max {
            return Err(Error::shape(
                format!("[{}]", self.params.l_max),
                format!("[{}]", features.token_ids.len()),
            ));
        }
        let expect = [self.params.mel.n_mels, self.params.t_max];
        if features.mel.shape() != expect {
            return Err(Error::shape(format!("{expect:?}"), format!("{:?}", features.mel.shape())));
        }
        let tmp = self.entry_path(id).with_extension("tmp");
        {
            let mut w = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            w.write_all(MAGIC)?;
            w.write_all(&3u32.to_le_bytes())?; // number of arrays
            let ids: Vec<f32> = features.token_ids.iter().map(|&t| t as f32).collect();
            write_array(&mut w, &[ids.len() as u32], &ids)?;
            write_array(&mut w, &[1], &[features.length as f32])?;
            let mel: Vec<f32> = features.mel.data().iter().map(|&v| v as f32).collect();
            let dims = [features.mel.shape()[0] as u32, features.mel.shape()[1] as u32];
            write_array(&mut w, &dims, &mel)?;
            w.flush()?;
        }
        std::fs::rename(&tmp, self.entry_path(id))?;
        Ok(())
    }

    pub fn load(&self, id: &str) -> Result<CachedFeatures> {
        let path = self.entry_path(id);
        let mut r = std::io::BufReader::new(
            std::fs::File::open(&path).map_err(|_| Error::Missing(path.clone()))?,
        );
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Data(format!("{}: not a feature cache file", path.display())));
        }
        let n_arrays = read_u32(&mut r)?;
        if n_arrays != 3 {
            return Err(Error::Data(format!("{}: expected 3 arrays, found {n_arrays}", path.display())));
        }
        let (id_dims, id_data) = read_array(&mut r)?;
        if id_dims.len() != 1 {
            return Err(Error::Data(format!("{}: token array must be 1-d", path.display())));
        }
        let (len_dims, len_data) = read_array(&mut r)?;
        if len_dims != [1] {
            return Err(Error::Data(format!("{}: length array must be a single value", path.display())));
        }
        let (mel_dims, mel_data) = read_array(&mut r)?;
        if mel_dims.len() != 2 {
            return Err(Error::Data(format!("{}: mel array must be 2-d", path.display())));
        }
        Ok(CachedFeatures {
            token_ids: id_data.iter().map(|&v| v as usize).collect(),
            length: len_data[0] as usize,
            mel: Tensor::new(
                vec![mel_dims[0] as usize, mel_dims[1] as usize],
                mel_data.iter().map(|&v| v as f64).collect(),
            ),
        })
    }
}
