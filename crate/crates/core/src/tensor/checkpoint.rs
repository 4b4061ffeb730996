//! `model.json` lists `{name, shape, offset}` in store order; `model.bin`
//! holds the little-endian `f64` values concatenated in that order, with
//! `offset` in bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::io::parse_json;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    tensors: Vec<ManifestEntry>,
}

pub fn save_checkpoint(store: &ParamStore, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bin = Vec::with_capacity(store.num_parameters() * 8);
    let mut tensors = Vec::with_capacity(store.len());
    for (name, p) in store.iter() {
        tensors.push(ManifestEntry {
            name: name.to_string(),
            shape: p.value.shape().to_vec(),
            offset: bin.len() as u64,
        });
        for v in p.value.data() {
            bin.extend_from_slice(&v.to_le_bytes());
        }
    }
    let json = serde_json::to_string_pretty(&Manifest { tensors }).expect("manifest serializes");
    let mpath = dir.join("model.json");
    fs::write(&mpath, json).map_err(|e| Error::io(&mpath, e))?;
    let bpath = dir.join("model.bin");
    fs::write(&bpath, bin).map_err(|e| Error::io(&bpath, e))?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let mpath = dir.join("model.json");
    let m: Manifest = parse_json(&mpath)?;
    Ok(m.tensors)
}

pub fn load_checkpoint(dir: &Path) -> Result<ParamStore> {
    let entries = read_manifest(dir)?;
    let bpath = dir.join("model.bin");
    let bin = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
    let mut store = ParamStore::new();
    for e in entries {
        let n: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start + n * 8;
        if end > bin.len() {
            return Err(Error::Parse {
                path: bpath,
                offset: bin.len() as u64,
                msg: format!("tensor `{}` needs bytes {}..{}", e.name, start, end),
            });
        }
        let data = bin[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        store.insert(e.name, Tensor::new(e.shape, data)?)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_matches_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ParamStore::new();
        s.insert(
            "a.w",
            Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
        )
        .unwrap();
        s.insert("a.b", Tensor::new(vec![1], vec![-0.5]).unwrap())
            .unwrap();
        save_checkpoint(&s, dir.path()).unwrap();

        let m = read_manifest(dir.path()).unwrap();
        assert_eq!(m[0].offset, 0);
        assert_eq!(m[1].offset, 32);
        let bin = fs::read(dir.path().join("model.bin")).unwrap();
        assert_eq!(bin.len(), 40);
        assert_eq!(&bin[32..40], &(-0.5f64).to_le_bytes());

        let back = load_checkpoint(dir.path()).unwrap();
        let names: Vec<_> = back.names().collect();
        assert_eq!(names, vec!["a.w", "a.b"]);
        assert_eq!(back.value("a.w").unwrap(), s.value("a.w").unwrap());
    }

    #[test]
    fn truncated_bin_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ParamStore::new();
        s.insert("w", Tensor::zeros(&[4])).unwrap();
        save_checkpoint(&s, dir.path()).unwrap();
        fs::write(dir.path().join("model.bin"), [0u8; 12]).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()),
            Err(Error::Parse { offset: 12, .. })
        ));
    }
}
