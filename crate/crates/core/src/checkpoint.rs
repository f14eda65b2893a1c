//! Binary checkpoint container.
//!
//! Layout: magic `DYNA`, format version `u32` little-endian, block count
//! `u32`, then per block a name (`u16` length + UTF-8 bytes), an element
//! count `u64`, and that many little-endian `f64` values. Round-trips are
//! bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mlp::{MlpSpec, ParamVector};
use crate::synthesis::{SyntheticDataset, Trajectory};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"DYNA";
pub const VERSION: u32 = 1;

pub fn write_blocks(path: &Path, blocks: &[(String, Vec<f64>)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(blocks.len() as u32).to_le_bytes())?;
    for (name, values) in blocks {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(values.len() as u64).to_le_bytes())?;
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn take(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|_| Error::Parse {
            offset: at,
            detail: format!("truncated while reading {what}"),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }
}

pub fn read_blocks(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut r = Reader { inner: BufReader::new(File::open(path)?), offset: 0 };
    let mut magic = [0u8; 4];
    r.take(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            detail: format!("bad magic {:?}", String::from_utf8_lossy(&magic)),
        });
    }
    let mut word = [0u8; 4];
    r.take(&mut word, "version")?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Parse {
            offset: 4,
            detail: format!("unsupported version {version}"),
        });
    }
    r.take(&mut word, "block count")?;
    let count = u32::from_le_bytes(word) as usize;
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let mut len2 = [0u8; 2];
        r.take(&mut len2, "name length")?;
        let name_len = u16::from_le_bytes(len2) as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.take(&mut name_bytes, "block name")?;
        let name = String::from_utf8(name_bytes).map_err(|_| Error::Parse {
            offset: r.offset,
            detail: "block name is not UTF-8".into(),
        })?;
        let mut len8 = [0u8; 8];
        r.take(&mut len8, "element count")?;
        let n = u64::from_le_bytes(len8) as usize;
        let mut raw = vec![0u8; n * 8];
        r.take(&mut raw, "block values")?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        blocks.push((name, values));
    }
    Ok(blocks)
}

fn find<'a>(blocks: &'a [(String, Vec<f64>)], name: &str, path: &Path) -> Result<&'a Vec<f64>> {
    blocks
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, v)| v)
        .ok_or_else(|| Error::Parse {
            offset: 0,
            detail: format!("{} has no '{name}' block", path.display()),
        })
    }

fn sizes_to_f64(sizes: &[usize]) -> Vec<f64> {
    sizes.iter().map(|&s| s as f64).collect()
}

fn f64_to_sizes(values: &[f64]) -> Vec<usize> {
    values.iter().map(|&v| v as usize).collect()
}

pub fn save_params(path: &Path, w: &ParamVector) -> Result<()> {
    write_blocks(
        path,
        &[
            ("layer_sizes".into(), sizes_to_f64(w.spec().layer_sizes())),
            ("values".into(), w.values().to_vec()),
        ],
    )
}

pub fn load_params(path: &Path) -> Result<ParamVector> {
    let blocks = read_blocks(path)?;
    let spec = MlpSpec::new(f64_to_sizes(find(&blocks, "layer_sizes", path)?))?;
    ParamVector::new(spec, find(&blocks, "values", path)?.clone())
}

pub fn save_synthetic(path: &Path, d: &SyntheticDataset) -> Result<()> {
    write_blocks(
        path,
        &[
            ("X".into(), d.x.data().to_vec()),
            ("Ylogits".into(), d.y_logits.data().to_vec()),
            (
                "meta".into(),
                vec![d.len() as f64, d.dim() as f64, d.class_count() as f64],
            ),
        ],
    )
}

pub fn load_synthetic(path: &Path) -> Result<SyntheticDataset> {
    let blocks = read_blocks(path)?;
    let meta = find(&blocks, "meta", path)?;
    if meta.len() != 3 {
        return Err(Error::Parse { offset: 0, detail: "meta block must have 3 entries".into() });
    }
    let (n, d, k) = (meta[0] as usize, meta[1] as usize, meta[2] as usize);
    SyntheticDataset::new(
        Tensor::new(vec![n, d], find(&blocks, "X", path)?.clone())?,
        Tensor::new(vec![n, k], find(&blocks, "Ylogits", path)?.clone())?,
    )
}

pub fn save_trajectory(path: &Path, t: &Trajectory) -> Result<()> {
    let mut blocks = vec![
        ("layer_sizes".to_string(), sizes_to_f64(t.spec().layer_sizes())),
        ("rounds".to_string(), t.rounds().iter().map(|&r| r as f64).collect()),
    ];
    for (i, c) in t.checkpoints().iter().enumerate() {
        blocks.push((format!("checkpoint/{i}"), c.values().to_vec()));
    }
    write_blocks(path, &blocks)
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let blocks = read_blocks(path)?;
    let spec = MlpSpec::new(f64_to_sizes(find(&blocks, "layer_sizes", path)?))?;
    let rounds = f64_to_sizes(find(&blocks, "rounds", path)?);
    let mut checkpoints = Vec::with_capacity(rounds.len());
    for i in 0..rounds.len() {
        let values = find(&blocks, &format!("checkpoint/{i}"), path)?.clone();
        checkpoints.push(ParamVector::new(spec.clone(), values)?);
    }
    Trajectory::new(checkpoints, rounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::init_params;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn params_round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.dyna");
        let spec = MlpSpec::new(vec![3, 5, 2]).unwrap();
        let w = init_params(&spec, &mut Rng::new(1));
        save_params(&path, &w).unwrap();
        let back = load_params(&path).unwrap();
        assert_eq!(back.spec().layer_sizes(), w.spec().layer_sizes());
        assert!(w.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.dyna");
        std::fs::write(&path, b"DYNB\x01\x00\x00\x00\x00\x00\x00\x00").unwrap();
        let err = read_blocks(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn truncation_names_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.dyna");
        std::fs::write(&path, b"DYNA\x01\x00\x00\x00").unwrap();
        match read_blocks(&path).unwrap_err() {
            Error::Parse { offset, .. } => assert_eq!(offset, 8),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v9.dyna");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"DYNA");
        bytes.extend_from_slice(&9u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(read_blocks(&path).is_err());
    }

    #[test]
    fn synthetic_and_trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = MlpSpec::new(vec![2, 3]).unwrap();
        let dsyn = crate::synthesis::init_synthetic(4, 2, 3, &mut Rng::new(2)).unwrap();
        let spath = dir.path().join("dsyn.dyna");
        save_synthetic(&spath, &dsyn).unwrap();
        let back = load_synthetic(&spath).unwrap();
        assert_eq!(back.x.data(), dsyn.x.data());
        assert_eq!(back.y_logits.data(), dsyn.y_logits.data());

        let cps: Vec<ParamVector> =
            (0..3).map(|s| init_params(&spec, &mut Rng::new(s))).collect();
        let traj = Trajectory::new(cps, vec![0, 1, 2]).unwrap();
        let tpath = dir.path().join("traj.dyna");
        save_trajectory(&tpath, &traj).unwrap();
        let back = load_trajectory(&tpath).unwrap();
        assert_eq!(back.len(), 3);
        for i in 0..3 {
            assert_eq!(back.checkpoint(i).values(), traj.checkpoint(i).values());
        }
    }

    #[test]
    fn reloaded_synthetic_data_finetunes_identically() {
        use crate::orchestration::{finetune, FinetuneConfig};
        let dir = tempfile::tempdir().unwrap();
        let spec = MlpSpec::new(vec![2, 8, 3]).unwrap();
        let w = init_params(&spec, &mut Rng::new(9));
        let dsyn = crate::synthesis::init_synthetic(12, 2, 3, &mut Rng::new(10)).unwrap();
        let path = dir.path().join("dsyn.dyna");
        save_synthetic(&path, &dsyn).unwrap();
        let reloaded = load_synthetic(&path).unwrap();
        let ft = FinetuneConfig::default();
        let a = finetune(&w, &dsyn, &ft).unwrap();
        let b = finetune(&w, &reloaded, &ft).unwrap();
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn arbitrary_blocks_round_trip(
            blocks in proptest::collection::vec(
                ("[a-z/]{1,12}", proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..50)),
                0..6,
            )
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.dyna");
            let typed: Vec<(String, Vec<f64>)> = blocks;
            write_blocks(&path, &typed).unwrap();
            let back = read_blocks(&path).unwrap();
            prop_assert_eq!(typed.len(), back.len());
            for ((n1, v1), (n2, v2)) in typed.iter().zip(&back) {
                prop_assert_eq!(n1, n2);
                prop_assert_eq!(v1.len(), v2.len());
                for (a, b) in v1.iter().zip(v2) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }
}
