//! NPY 1.0 array files: little-endian, C order, `<f4` for real planes and
//! `<c8` for complex planes. Readers also accept `f8`/`c16` and either byte
//! order, always returning `f64` data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use npyz::{DType, NpyFile, Order, TypeChar, WriteOptions, WriterBuilder};
use num_complex::{Complex, Complex64};
use ptycho_core::{ComplexField, RealField};

use crate::error::{PipelineError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementKind {
    Real,
    Complex,
}

/// Shape and element kind of an array file, read from its header only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArrayHeader {
    pub shape: Vec<usize>,
    pub kind: ElementKind,
}

fn open(path: &Path) -> Result<NpyFile<BufReader<File>>> {
    let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    NpyFile::new(BufReader::new(file)).map_err(|e| PipelineError::data(path, e.to_string()))
}

fn classify(path: &Path, npy: &NpyFile<BufReader<File>>) -> Result<ArrayHeader> {
    if npy.order() != Order::C {
        return Err(PipelineError::data(path, "Fortran-ordered arrays are not supported"));
    }
    let kind = match npy.dtype() {
        DType::Plain(ts) => match (ts.type_char(), ts.size_field()) {
            (TypeChar::Float, 4 | 8) => ElementKind::Real,
            (TypeChar::Complex, 8 | 16) => ElementKind::Complex,
            _ => return Err(PipelineError::data(path, format!("unsupported dtype {}", ts))),
        },
        other => return Err(PipelineError::data(path, format!("unsupported dtype {}", other.descr()))),
    };
    Ok(ArrayHeader {
        shape: npy.shape().iter().map(|&d| d as usize).collect(),
        kind,
    })
}

pub fn read_header(path: &Path) -> Result<ArrayHeader> {
    classify(path, &open(path)?)
}

fn read_real_data(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let npy = open(path)?;
    let header = classify(path, &npy)?;
    if header.kind != ElementKind::Real {
        return Err(PipelineError::data(path, "expected a real-valued array"));
    }
    let wide = matches!(npy.dtype(), DType::Plain(ts) if ts.size_field() == 8);
    let data = if wide {
        npy.into_vec::<f64>()
    } else {
        npy.into_vec::<f32>().map(|v| v.into_iter().map(f64::from).collect())
    }
    .map_err(|e| PipelineError::data(path, e.to_string()))?;
    Ok((header.shape, data))
}

fn expect_rank(path: &Path, shape: &[usize], rank: usize) -> Result<()> {
    if shape.len() != rank {
        return Err(PipelineError::data(path, format!("expected {rank}-d array, found shape {shape:?}")));
    }
    Ok(())
}

pub fn read_real(path: &Path) -> Result<RealField> {
    let (shape, data) = read_real_data(path)?;
    expect_rank(path, &shape, 2)?;
    Ok(RealField::new(shape[0], shape[1], data)?)
}

/// Reads a `[n, h, w]` array as `n` planes.
pub fn read_stack(path: &Path) -> Result<Vec<RealField>> {
    let (shape, data) = read_real_data(path)?;
    expect_rank(path, &shape, 3)?;
    let plane = shape[1] * shape[2];
    if plane == 0 {
        return Ok(vec![RealField::zeros(shape[1], shape[2]); shape[0]]);
    }
    data.chunks_exact(plane)
        .map(|c| Ok(RealField::new(shape[1], shape[2], c.to_vec())?))
        .collect()
}

pub fn read_complex(path: &Path) -> Result<ComplexField> {
    let npy = open(path)?;
    let header = classify(path, &npy)?;
    if header.kind != ElementKind::Complex {
        return Err(PipelineError::data(path, "expected a complex-valued array"));
    }
    expect_rank(path, &header.shape, 2)?;
    let wide = matches!(npy.dtype(), DType::Plain(ts) if ts.size_field() == 16);
    let data = if wide {
        npy.into_vec::<Complex64>()
    } else {
        npy.into_vec::<Complex<f32>>()
            .map(|v| v.into_iter().map(|z| Complex64::new(z.re.into(), z.im.into())).collect())
    }
    .map_err(|e| PipelineError::data(path, e.to_string()))?;
    Ok(ComplexField::new(header.shape[0], header.shape[1], data)?)
}

fn write_with<T>(path: &Path, shape: &[usize], values: impl Iterator<Item = T>) -> Result<()>
where
    T: npyz::AutoSerialize,
{
    let io = |e| PipelineError::io(path, e);
    let file = File::create(path).map_err(io)?;
    let mut out = BufWriter::new(file);
    let dims: Vec<u64> = shape.iter().map(|&d| d as u64).collect();
    let mut writer = WriteOptions::new()
        .default_dtype()
        .shape(&dims)
        .writer(&mut out)
        .begin_nd()
        .map_err(io)?;
    writer.extend(values).map_err(io)?;
    writer.finish().map_err(io)?;
    out.flush().map_err(io)
}

pub fn write_real(path: &Path, field: &RealField) -> Result<()> {
    let (h, w) = field.shape();
    write_with(path, &[h, w], field.data().iter().map(|&v| v as f32))
}

pub fn write_stack(path: &Path, planes: &[RealField]) -> Result<()> {
    let (h, w) = planes.first().map_or((0, 0), |p| p.shape());
    for p in planes {
        if p.shape() != (h, w) {
            return Err(PipelineError::data(path, "stack planes differ in shape"));
        }
    }
    write_with(
        path,
        &[planes.len(), h, w],
        planes.iter().flat_map(|p| p.data().iter().map(|&v| v as f32)),
    )
}

pub fn write_complex(path: &Path, field: &ComplexField) -> Result<()> {
    let (h, w) = field.shape();
    write_with(
        path,
        &[h, w],
        field.data().iter().map(|z| Complex::new(z.re as f32, z.im as f32)),
    )
}
