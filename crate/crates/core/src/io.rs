//! Tensor container files and matrix CSV.
//!
//! Binary container (little endian):
//!
//! ```text
//! magic  b"TFMT"
//! u32    format version (1)
//! u32    order K
//! u64    d_1 ... d_K
//! f64    data, d_1 * ... * d_K values, first index fastest
//! ```
//!
//! CSV container: the first line is `K,d_1,...,d_K`, followed by one value per
//! line in the same order. Files ending in `.csv` use the CSV form.
//!
//! A series of `T` tensors of shape `(d_1, ..., d_K)` is stored as a single
//! order-(K+1) tensor with time as the last mode, so each `X_t` is contiguous.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, TensorSeries, MAX_ORDER};

const MAGIC: &[u8; 4] = b"TFMT";
const VERSION: u32 = 1;

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn encode_tensor(x: &DenseTensor, out: &mut impl Write) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(x.order() as u32).to_le_bytes())?;
    for &d in x.dims() {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    for &v in x.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize>(input: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated tensor file: {e}")))?;
    Ok(buf)
}

pub fn decode_tensor(input: &mut impl Read) -> Result<DenseTensor> {
    if &read_array::<4>(input)? != MAGIC {
        return Err(Error::Format("bad magic, not a tensor container".into()));
    }
    let version = u32::from_le_bytes(read_array(input)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let order = u32::from_le_bytes(read_array(input)?) as usize;
    if order == 0 || order > MAX_ORDER + 1 {
        return Err(Error::Format(format!("unsupported order {order}")));
    }
    let dims = (0..order)
        .map(|_| Ok(u64::from_le_bytes(read_array(input)?) as usize))
        .collect::<Result<Vec<_>>>()?;
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("dimension product overflows".into()))?;
    let mut data = Vec::with_capacity(len.min(1 << 24));
    for _ in 0..len {
        data.push(f64::from_le_bytes(read_array(input)?));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after tensor data".into()));
    }
    DenseTensor::new(dims, data)
}

fn encode_tensor_csv(x: &DenseTensor, out: &mut impl Write) -> Result<()> {
    let header: Vec<String> = std::iter::once(x.order())
        .chain(x.dims().iter().copied())
        .map(|v| v.to_string())
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for v in x.data() {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

fn decode_tensor_csv(input: impl BufRead) -> Result<DenseTensor> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV tensor file".into()))??;
    let fields = header
        .split(',')
        .map(|f| f.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Format(format!("bad CSV header `{header}`: {e}")))?;
    let (&order, dims) = fields
        .split_first()
        .ok_or_else(|| Error::Format("empty CSV header".into()))?;
    if order != dims.len() {
        return Err(Error::Format(format!(
            "header declares order {order} but lists {} dims",
            dims.len()
        )));
    }
    let mut data = Vec::new();
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        data.push(
            line.parse::<f64>()
                .map_err(|e| Error::Format(format!("bad value `{line}`: {e}")))?,
        );
    }
    DenseTensor::new(dims.to_vec(), data)
}

pub fn write_tensor(path: impl AsRef<Path>, x: &DenseTensor) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(fs::File::create(path)?);
    if is_csv(path) {
        encode_tensor_csv(x, &mut out)?;
    } else {
        encode_tensor(x, &mut out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let path = path.as_ref();
    let file = BufReader::new(fs::File::open(path)?);
    if is_csv(path) {
        decode_tensor_csv(file)
    } else {
        let mut file = file;
        decode_tensor(&mut file)
    }
}

/// Stacks a series into one tensor with time as the last mode.
pub fn series_to_tensor(series: &TensorSeries) -> Result<DenseTensor> {
    let mut dims = series.shape().to_vec();
    dims.push(series.len());
    let data = series
        .items()
        .iter()
        .flat_map(|x| x.data().iter().copied())
        .collect();
    DenseTensor::new(dims, data)
}

/// Splits the last mode of `x` into time points.
pub fn series_from_tensor(x: &DenseTensor) -> Result<TensorSeries> {
    let (&t_len, shape) = x
        .dims()
        .split_last()
        .ok_or_else(|| Error::Format("empty dims".into()))?;
    if shape.is_empty() {
        return Err(Error::Format(
            "a series file needs at least one mode besides time".into(),
        ));
    }
    let n: usize = shape.iter().product();
    let items = (0..t_len)
        .map(|t| DenseTensor::new(shape.to_vec(), x.data()[t * n..(t + 1) * n].to_vec()))
        .collect::<Result<Vec<_>>>()?;
    TensorSeries::new(items)
}

pub fn write_series(path: impl AsRef<Path>, series: &TensorSeries) -> Result<()> {
    write_tensor(path, &series_to_tensor(series)?)
}

pub fn read_series(path: impl AsRef<Path>) -> Result<TensorSeries> {
    series_from_tensor(&read_tensor(path)?)
}

/// Writes a matrix as comma-separated rows.
pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    let rows = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("bad value `{v}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Format("ragged or empty matrix CSV".into()));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.into_iter().flatten(),
    ))
}
