//! Binary checkpoint of a [`ParameterSet`].
//!
//! Layout (little endian): magic `GZCK`, format version `u32`, parameter
//! version `u64`, tensor count `u32`, then per tensor: name length `u32`,
//! UTF-8 name, rows `u32`, cols `u32`, values as `f64` bit patterns.

use std::io::{Read, Write};

use crate::scalar::Scalar;

use super::{NnError, ParameterSet, Tensor};

const MAGIC: &[u8; 4] = b"GZCK";
const FORMAT: u32 = 1;

pub fn write_params<T: Scalar, W: Write>(p: &ParameterSet<T>, mut w: W) -> Result<(), NnError> {
    let io = |e: std::io::Error| NnError::Checkpoint(e.to_string());
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&FORMAT.to_le_bytes()).map_err(io)?;
    w.write_all(&p.version.to_le_bytes()).map_err(io)?;
    w.write_all(&(p.tensors.len() as u32).to_le_bytes())
        .map_err(io)?;
    for (name, t) in p.names.iter().zip(&p.tensors) {
        w.write_all(&(name.len() as u32).to_le_bytes())
            .map_err(io)?;
        w.write_all(name.as_bytes()).map_err(io)?;
        w.write_all(&(t.rows as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(t.cols as u32).to_le_bytes()).map_err(io)?;
        for v in &t.data {
            w.write_all(&v.as_f64().to_bits().to_le_bytes())
                .map_err(io)?;
        }
    }
    Ok(())
}

pub fn read_params<T: Scalar, R: Read>(mut r: R) -> Result<ParameterSet<T>, NnError> {
    let bad = |m: &str| NnError::Checkpoint(m.to_string());
    let mut read = |n: usize| -> Result<Vec<u8>, NnError> {
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf)
            .map_err(|e| NnError::Checkpoint(format!("truncated checkpoint: {e}")))?;
        Ok(buf)
    };
    if read(4)? != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let u32_of = |b: Vec<u8>| u32::from_le_bytes(b.try_into().expect("4 bytes"));
    let format = u32_of(read(4)?);
    if format != FORMAT {
        return Err(NnError::Checkpoint(format!(
            "unsupported checkpoint format {format}"
        )));
    }
    let version = u64::from_le_bytes(read(8)?.try_into().expect("8 bytes"));
    let count = u32_of(read(4)?) as usize;
    let mut p = ParameterSet::new();
    p.version = version;
    for _ in 0..count {
        let len = u32_of(read(4)?) as usize;
        let name = String::from_utf8(read(len)?).map_err(|_| bad("tensor name is not UTF-8"))?;
        let rows = u32_of(read(4)?) as usize;
        let cols = u32_of(read(4)?) as usize;
        let raw = read(rows * cols * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| {
                T::lit(f64::from_bits(u64::from_le_bytes(
                    c.try_into().expect("8 bytes"),
                )))
            })
            .collect();
        if p.find(&name).is_some() {
            return Err(NnError::Checkpoint(format!("duplicate tensor {name}")));
        }
        p.names.push(name);
        p.tensors.push(Tensor { rows, cols, data });
    }
    Ok(p)
}
