//! Versioned binary checkpoints: parameters, both optimizers, RNG state,
//! progress counters, and the configuration hash they were produced under.
//! Loading a checkpoint restores training bit-for-bit.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::train::optimizer::Adam;

const MAGIC: &[u8; 8] = b"DRSCCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub step: u64,
    pub epoch: u64,
    pub best_test_acc: f64,
    pub best_epoch: u64,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
    pub params: ParamStore,
    pub opt_min: Adam,
    pub opt_max: Adam,
}

fn w_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}
fn w_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}
fn w_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}
fn w_str(w: &mut impl Write, s: &str) -> Result<()> {
    w_u32(w, s.len() as u32)?;
    Ok(w.write_all(s.as_bytes())?)
}
fn w_f64s(w: &mut impl Write, vs: &[f64]) -> Result<()> {
    w_u64(w, vs.len() as u64)?;
    for &v in vs {
        w_f64(w, v)?;
    }
    Ok(())
}

fn r_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
fn r_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
fn r_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
fn r_str(r: &mut impl Read) -> Result<String> {
    let n = r_u32(r)? as usize;
    if n > 1 << 20 {
        return Err(Error::Checkpoint(format!("string length {n} not plausible")));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| Error::Checkpoint("non-utf8 string".into()))
}
fn r_f64s(r: &mut impl Read) -> Result<Vec<f64>> {
    let n = r_u64(r)? as usize;
    if n > 1 << 32 {
        return Err(Error::Checkpoint(format!("array length {n} not plausible")));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(r_f64(r)?);
    }
    Ok(out)
}

fn write_adam(w: &mut impl Write, a: &Adam) -> Result<()> {
    w_f64(w, a.lr)?;
    w_f64(w, a.beta1)?;
    w_f64(w, a.beta2)?;
    w_f64(w, a.eps)?;
    w_u64(w, a.t)?;
    for map in [&a.m, &a.v] {
        w_u32(w, map.len() as u32)?;
        for (name, data) in map {
            w_str(w, name)?;
            w_f64s(w, data)?;
        }
    }
    Ok(())
}

fn read_adam(r: &mut impl Read) -> Result<Adam> {
    let lr = r_f64(r)?;
    let beta1 = r_f64(r)?;
    let beta2 = r_f64(r)?;
    let eps = r_f64(r)?;
    let t = r_u64(r)?;
    let mut maps = Vec::with_capacity(2);
    for _ in 0..2 {
        let n = r_u32(r)?;
        let mut map = BTreeMap::new();
        for _ in 0..n {
            let name = r_str(r)?;
            map.insert(name, r_f64s(r)?);
        }
        maps.push(map);
    }
    let v = maps.pop().unwrap();
    let m = maps.pop().unwrap();
    Ok(Adam { lr, beta1, beta2, eps, t, m, v })
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("tmp");
        {
            let mut w = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            w.write_all(MAGIC)?;
            w_u32(&mut w, VERSION)?;
            w_str(&mut w, &self.config_hash)?;
            w_u64(&mut w, self.step)?;
            w_u64(&mut w, self.epoch)?;
            w_f64(&mut w, self.best_test_acc)?;
            w_u64(&mut w, self.best_epoch)?;
            w.write_all(&self.rng_seed)?;
            w.write_all(&self.rng_word_pos.to_le_bytes())?;

            let entries = self.params.export();
            w_u32(&mut w, entries.len() as u32)?;
            for (name, shape, data) in entries {
                w_str(&mut w, &name)?;
                w_u32(&mut w, shape.len() as u32)?;
                for d in shape {
                    w_u64(&mut w, d as u64)?;
                }
                w_f64s(&mut w, &data)?;
            }
            write_adam(&mut w, &self.opt_min)?;
            write_adam(&mut w, &self.opt_max)?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut r = std::io::BufReader::new(
            std::fs::File::open(path).map_err(|_| Error::Missing(path.to_path_buf()))?,
        );
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "{} is not a checkpoint file",
                path.display()
            )));
        }
        let version = r_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {version} unsupported (expected {VERSION})"
            )));
        }
        let config_hash = r_str(&mut r)?;
        let step = r_u64(&mut r)?;
        let epoch = r_u64(&mut r)?;
        let best_test_acc = r_f64(&mut r)?;
        let best_epoch = r_u64(&mut r)?;
        let mut rng_seed = [0u8; 32];
        r.read_exact(&mut rng_seed)?;
        let mut pos = [0u8; 16];
        r.read_exact(&mut pos)?;
        let rng_word_pos = u128::from_le_bytes(pos);

        let n = r_u32(&mut r)?;
        let mut entries = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let name = r_str(&mut r)?;
            let ndim = r_u32(&mut r)? as usize;
            if ndim > 4 {
                return Err(Error::Checkpoint(format!("{name}: rank {ndim} not plausible")));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r_u64(&mut r)? as usize);
            }
            let data = r_f64s(&mut r)?;
            let expect: usize = shape.iter().product();
            if expect != data.len() {
                return Err(Error::Checkpoint(format!(
                    "{name}: shape {shape:?} does not match {} values",
                    data.len()
                )));
            }
            entries.push((name, shape, data));
        }
        let params = ParamStore::import(entries);
        let opt_min = read_adam(&mut r)?;
        let opt_max = read_adam(&mut r)?;
        Ok(Checkpoint {
            config_hash,
            step,
            epoch,
            best_test_acc,
            best_epoch,
            rng_seed,
            rng_word_pos,
            params,
            opt_min,
            opt_max,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tensor;
    use crate::rng::SeededRng;

    fn sample() -> Checkpoint {
        let mut rng = SeededRng::new(42);
        let _ = rng.uniform();
        let mut params = ParamStore::new();
        params.insert("enc/w", Tensor::randn(&[3, 2], 1.0, &mut rng));
        params.insert("disc_text/w", Tensor::randn(&[4], 0.5, &mut rng));
        let mut opt_min = Adam::new(1e-4, 0.9, 0.999, 1e-8);
        opt_min.t = 7;
        opt_min.m.insert("enc/w".into(), vec![0.1; 6]);
        opt_min.v.insert("enc/w".into(), vec![0.01; 6]);
        Checkpoint {
            config_hash: "abcd1234".into(),
            step: 99,
            epoch: 3,
            best_test_acc: 0.875,
            best_epoch: 2,
            rng_seed: rng.seed_bytes(),
            rng_word_pos: rng.word_pos(),
            params,
            opt_min,
            opt_max: Adam::new(1e-4, 0.9, 0.999, 1e-8),
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let ck = sample();
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(ck, back);
        // restored RNG continues the original stream exactly
        let mut orig = SeededRng::restore(ck.rng_seed, ck.rng_word_pos);
        let mut rest = SeededRng::restore(back.rng_seed, back.rng_word_pos);
        for _ in 0..10 {
            assert_eq!(orig.uniform().to_bits(), rest.uniform().to_bits());
        }
    }

    #[test]
    fn rejects_garbage_and_wrong_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(Checkpoint::load(&path).is_err());

        let ck = sample();
        ck.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 0xFF; // version field
        std::fs::write(&path, bytes).unwrap();
        match Checkpoint::load(&path) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("version")),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_missing() {
        match Checkpoint::load(Path::new("/nonexistent/ck.bin")) {
            Err(Error::Missing(_)) => {}
            other => panic!("{other:?}"),
        }
    }
}
