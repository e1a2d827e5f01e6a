//! Flat little-endian binary cache for problems.
//!
//! Layout: version byte, `u32` name length, UTF-8 name, `u64` n, nonlinearity
//! tag byte, then `A` row-major, `x†`, `y†` and the grid as `f64` values.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::operators::{ForwardOp, Nonlinearity, RowOperator};
use crate::problems::Problem;

pub const FORMAT_VERSION: u8 = 1;

pub fn write_problem(p: &Problem, mut w: impl Write) -> Result<()> {
    let n = p.n();
    let name = p.name.as_bytes();
    let name_len = u32::try_from(name.len()).map_err(|_| Error::Format("name too long".into()))?;
    w.write_all(&[FORMAT_VERSION])?;
    w.write_all(&name_len.to_le_bytes())?;
    w.write_all(name)?;
    w.write_all(&(n as u64).to_le_bytes())?;
    w.write_all(&[p.nonlinearity().tag()])?;
    let mut buf = Vec::with_capacity(8 * (n * n + 3 * n));
    for v in p.op.matrix().as_slice().iter().chain(&p.x_dag).chain(&p.y_dag).chain(&p.grid) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_problem(mut r: impl Read) -> Result<Problem> {
    let mut byte = [0u8; 1];
    r.read_exact(&mut byte)?;
    if byte[0] != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {}", byte[0])));
    }
    let mut len4 = [0u8; 4];
    r.read_exact(&mut len4)?;
    let mut name = vec![0u8; u32::from_le_bytes(len4) as usize];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|_| Error::Format("name is not UTF-8".into()))?;
    let mut len8 = [0u8; 8];
    r.read_exact(&mut len8)?;
    let n = usize::try_from(u64::from_le_bytes(len8)).map_err(|_| Error::Format("size overflow".into()))?;
    r.read_exact(&mut byte)?;
    let f = Nonlinearity::from_tag(byte[0]).ok_or_else(|| Error::Format(format!("unknown tag {}", byte[0])))?;
    let mut read_vec = |len: usize| -> Result<Vec<f64>> {
        let mut raw = vec![0u8; 8 * len];
        r.read_exact(&mut raw)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };
    let a = Matrix::from_row_major(n, n, read_vec(n.checked_mul(n).ok_or(Error::Format("size overflow".into()))?)?)?;
    let x_dag = read_vec(n)?;
    let y_dag = read_vec(n)?;
    let grid = read_vec(n)?;
    Ok(Problem { name, op: ForwardOp::new(a, f)?, x_dag, y_dag, grid })
}
