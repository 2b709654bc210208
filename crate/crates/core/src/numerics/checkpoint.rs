//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    b"LPT1"                       4 bytes
//! version  u32 = 1
//! meta_len u32, then meta_len bytes of UTF-8 "key=value\n" lines
//! count    u32
//! then per tensor:
//!   name_len u32, name bytes (UTF-8)
//!   rows u32, cols u32
//!   rows*cols f64 values, row-major, IEEE-754 little-endian bits
//! ```
//!
//! Values round-trip bit-exactly because they are written as raw `f64`
//! bit patterns.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::params::ParamStore;

const MAGIC: &[u8; 4] = b"LPT1";
const VERSION: u32 = 1;

/// Write all parameters plus a flat metadata map.
pub fn save(path: &Path, store: &ParamStore, meta: &BTreeMap<String, String>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;

    let mut meta_buf = String::new();
    for (k, v) in meta {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(Error::format(format!("invalid metadata key/value: {k}={v}")));
        }
        meta_buf.push_str(k);
        meta_buf.push('=');
        meta_buf.push_str(v);
        meta_buf.push('\n');
    }
    w.write_all(&(meta_buf.len() as u32).to_le_bytes())?;
    w.write_all(meta_buf.as_bytes())?;

    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (_, p) in store.iter() {
        w.write_all(&(p.name.len() as u32).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        w.write_all(&(p.shape.0 as u32).to_le_bytes())?;
        w.write_all(&(p.shape.1 as u32).to_le_bytes())?;
        for v in &p.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a checkpoint back into a fresh store plus its metadata map.
pub fn load(path: &Path) -> Result<(ParamStore, BTreeMap<String, String>)> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::format("not a parameter checkpoint (bad magic)"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }

    let meta_len = read_u32(&mut r)? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes)?;
    let meta_str =
        String::from_utf8(meta_bytes).map_err(|_| Error::format("metadata is not UTF-8"))?;
    let mut meta = BTreeMap::new();
    for line in meta_str.lines() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(format!("bad metadata line: {line}")))?;
        meta.insert(k.to_string(), v.to_string());
    }

    let count = read_u32(&mut r)? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name =
            String::from_utf8(name_bytes).map_err(|_| Error::format("tensor name is not UTF-8"))?;
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let mut values = vec![0.0f64; rows * cols];
        let mut buf = [0u8; 8];
        for v in values.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        store.add(&name, (rows, cols), values);
    }
    Ok((store, meta))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut store = ParamStore::new();
        store.add("enc.w0", (2, 3), vec![0.1, -0.2, 1.0 / 3.0, f64::MIN_POSITIVE, 1e300, -0.0]);
        store.add("enc.b0", (2, 1), vec![0.5f64.sqrt(), std::f64::consts::PI]);
        let mut meta = BTreeMap::new();
        meta.insert("model".to_string(), "leapt".to_string());
        meta.insert("seed".to_string(), "17".to_string());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save(&path, &store, &meta).unwrap();
        let (loaded, meta2) = load(&path).unwrap();

        assert_eq!(meta, meta2);
        assert_eq!(loaded.len(), store.len());
        for ((_, a), (_, b)) in store.iter().zip(loaded.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
            for (x, y) in a.values.iter().zip(b.values.iter()) {
                assert_eq!(x.to_bits(), y.to_bits(), "bit-exact round trip");
            }
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"NOPE0000").unwrap();
        assert!(matches!(load(&path), Err(Error::Format(_))));
    }
}
