//! Binary model files: magic `RRF1`, a tensor count, then per tensor its
//! name, rank, dimensions and little-endian f64 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"RRF1";

pub fn write_params<W: Write>(w: &mut W, store: &ParamStore) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(store.len() as u32)?;
    for (_, p) in store.iter() {
        w.write_u32::<LittleEndian>(p.name.len() as u32)?;
        w.write_all(p.name.as_bytes())?;
        w.write_u32::<LittleEndian>(p.value.rank() as u32)?;
        for &d in &p.value.shape {
            w.write_u64::<LittleEndian>(d as u64)?;
        }
        for &v in &p.value.data {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

/// Named tensors in file order.
pub fn read_tensors<R: Read>(r: &mut R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a model file".into()));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.read_u32::<LittleEndian>()? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = r.read_u32::<LittleEndian>()? as usize;
        let shape = (0..rank).map(|_| r.read_u64::<LittleEndian>().map(|d| d as usize)).collect::<std::io::Result<Vec<_>>>()?;
        let mut data = vec![0.0; shape.iter().product()];
        r.read_f64_into::<LittleEndian>(&mut data)?;
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

/// Loads values into a store with the same layout, checking names and shapes.
pub fn load_into<R: Read>(r: &mut R, store: &mut ParamStore) -> Result<()> {
    let tensors = read_tensors(r)?;
    if tensors.len() != store.len() {
        return Err(Error::Format(format!("file has {} tensors, model expects {}", tensors.len(), store.len())));
    }
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for (id, (name, t)) in ids.into_iter().zip(tensors) {
        let p = store.get_mut(id);
        if p.name != name || p.value.shape != t.shape {
            return Err(Error::Format(format!(
                "tensor {name} {:?} does not match {} {:?}",
                t.shape, p.name, p.value.shape
            )));
        }
        p.value = t;
    }
    Ok(())
}

pub fn save_file(path: &Path, store: &ParamStore) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_params(&mut w, store)?;
    w.flush()?;
    Ok(())
}

pub fn load_file(path: &Path, store: &mut ParamStore) -> Result<()> {
    load_into(&mut BufReader::new(File::open(path)?), store)
}
