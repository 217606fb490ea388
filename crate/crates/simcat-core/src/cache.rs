//! Embedding cache files. Embeddings are stored as f32 so caches stay
//! compact; the in-memory side is f64 like everything else. Layout:
//! magic `SCEB`, u32 version, u32 dim, u64 count, count*dim f32 values
//! (row major, little endian), then one length-prefixed UTF-8 id per
//! row.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::binio;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SCEB";
const VERSION: u32 = 1;
const MAX_ID_LEN: usize = 4096;

pub struct EmbeddingCache {
    pub embeddings: Array2<f64>,
    pub ids: Vec<String>,
}

impl EmbeddingCache {
    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn len(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_ids(ids: &[String], n: usize) -> Result<()> {
    if ids.len() != n {
        return Err(Error::shape(format!(
            "{} ids for {} embedding rows",
            ids.len(),
            n
        )));
    }
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::invalid(format!("duplicate embedding id {id}")));
        }
    }
    Ok(())
}

pub fn save_cache(path: &Path, embeddings: &Array2<f64>, ids: &[String]) -> Result<()> {
    check_ids(ids, embeddings.nrows())?;
    if embeddings.ncols() == 0 {
        return Err(Error::invalid("embedding dimension must be positive"));
    }
    for &v in embeddings.iter() {
        if !v.is_finite() {
            return Err(Error::invalid("embedding contains a non-finite value"));
        }
    }
    let ctx = |e| Error::io(path.display().to_string(), e);
    let f = File::create(path).map_err(ctx)?;
    let mut w = BufWriter::new(f);
    (|| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        binio::write_u32(&mut w, VERSION)?;
        binio::write_u32(&mut w, embeddings.ncols() as u32)?;
        binio::write_u64(&mut w, embeddings.nrows() as u64)?;
        let vals: Vec<f32> = embeddings.iter().map(|&v| v as f32).collect();
        binio::write_f32_slice(&mut w, &vals)?;
        for id in ids {
            binio::write_str(&mut w, id)?;
        }
        w.flush()
    })()
    .map_err(ctx)
}

pub fn load_cache(path: &Path) -> Result<EmbeddingCache> {
    let p = path.display().to_string();
    let f = File::open(path).map_err(|e| Error::io(p.clone(), e))?;
    let mut r = BufReader::new(f);
    let res = (|| -> std::io::Result<EmbeddingCache> {
        binio::expect_magic(&mut r, MAGIC)?;
        let version = binio::read_u32(&mut r)?;
        if version != VERSION {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("unsupported cache version {version}"),
            ));
        }
        let d = binio::read_u32(&mut r)? as usize;
        let n = binio::read_u64(&mut r)? as usize;
        if d == 0 || d > 1 << 20 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("implausible embedding dimension {d}"),
            ));
        }
        let vals = binio::read_f32_vec(&mut r, n * d)?;
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            ids.push(binio::read_str(&mut r, MAX_ID_LEN)?);
        }
        let embeddings =
            Array2::from_shape_vec((n, d), vals.iter().map(|&v| v as f64).collect())
                .expect("shape matches length");
        Ok(EmbeddingCache { embeddings, ids })
    })();
    let cache = res.map_err(|e| Error::format(p, e.to_string()))?;
    check_ids(&cache.ids, cache.len())?;
    Ok(cache)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn round_trip_is_bit_exact_at_file_level() {
        let emb = Array2::from_shape_fn((5, 3), |(i, j)| {
            (i as f64 * 1.37 - j as f64 * 0.211).sin()
        });
        let ids: Vec<String> = (0..5).map(|i| format!("row-{i}")).collect();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.sceb");
        let p2 = dir.path().join("b.sceb");
        save_cache(&p1, &emb, &ids).unwrap();
        let c = load_cache(&p1).unwrap();
        assert_eq!(c.ids, ids);
        save_cache(&p2, &c.embeddings, &c.ids).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2, "save(load(file)) changed bytes");
    }

    #[test]
    fn loaded_values_are_the_f32_truncation() {
        let emb = Array2::from_elem((1, 2), 0.123456789123456789);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.sceb");
        save_cache(&p, &emb, &["x".to_string()]).unwrap();
        let c = load_cache(&p).unwrap();
        assert_eq!(c.embeddings[[0, 0]], 0.123456789123456789f64 as f32 as f64);
    }

    #[test]
    fn rejects_duplicate_ids_and_bad_magic() {
        let emb = Array2::zeros((2, 2));
        let ids = vec!["same".to_string(), "same".to_string()];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.sceb");
        assert!(save_cache(&p, &emb, &ids).is_err());
        std::fs::write(&p, b"XXXX garbage").unwrap();
        assert!(load_cache(&p).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let mut emb = Array2::zeros((1, 2));
        emb[[0, 1]] = f64::INFINITY;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.sceb");
        assert!(save_cache(&p, &emb, &["a".to_string()]).is_err());
    }
}
