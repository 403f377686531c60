//! TNSR binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes      | field                          |
//! |------------|--------------------------------|
//! | 4          | magic `TNSR`                   |
//! | 1          | version (`1`)                  |
//! | 1          | dtype code (`0` = f32, `1` = u8) |
//! | 1          | ndim                           |
//! | 4 × ndim   | dims as u32, row-major         |
//! | rest       | payload, little-endian values  |

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TNSR";
pub const VERSION: u8 = 1;
const FIXED_HEADER: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    U8,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::U8 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::U8),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U8 => 1,
        }
    }
}

/// Typed payload of a tensor file.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::U8(_) => DType::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values as f32; u8 values map to `x / 255`.
    pub fn to_f32(&self) -> Vec<f32> {
        match self {
            TensorData::F32(v) => v.clone(),
            TensorData::U8(v) => v.iter().map(|&x| x as f32 / 255.0).collect(),
        }
    }

    pub fn into_f32(self) -> Vec<f32> {
        match self {
            TensorData::F32(v) => v,
            other => other.to_f32(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} holds {} values but {} were supplied",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn f32(shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        Tensor::new(shape, TensorData::F32(values))
    }

    pub fn u8(shape: Vec<usize>, values: Vec<u8>) -> Result<Self> {
        Tensor::new(shape, TensorData::U8(values))
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        encode(&self.shape, &self.data)
    }
}

/// Header fields of a TNSR file, readable without touching the payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorHeader {
    pub dtype: DType,
    pub shape: Vec<usize>,
}

impl TensorHeader {
    pub fn header_len(&self) -> usize {
        FIXED_HEADER + 4 * self.shape.len()
    }

    pub fn payload_len(&self) -> usize {
        self.shape.iter().product::<usize>() * self.dtype.size()
    }
}

fn encode(shape: &[usize], data: &TensorData) -> Result<Vec<u8>> {
    let numel: usize = shape.iter().product();
    if numel != data.len() {
        return Err(Error::shape(format!(
            "shape {:?} holds {} values but {} were supplied",
            shape,
            numel,
            data.len()
        )));
    }
    if shape.len() > u8::MAX as usize {
        return Err(Error::invalid(format!("ndim {} exceeds 255", shape.len())));
    }
    let header = TensorHeader {
        dtype: data.dtype(),
        shape: shape.to_vec(),
    };
    let mut buf = Vec::with_capacity(header.header_len() + header.payload_len());
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.push(data.dtype().code());
    buf.push(shape.len() as u8);
    for &dim in shape {
        let dim = u32::try_from(dim)
            .map_err(|_| Error::invalid(format!("dimension {dim} does not fit in u32")))?;
        buf.extend_from_slice(&dim.to_le_bytes());
    }
    match data {
        TensorData::F32(values) => {
            for v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        TensorData::U8(values) => buf.extend_from_slice(values),
    }
    Ok(buf)
}

pub fn write_tensor(path: impl AsRef<Path>, shape: &[usize], data: &TensorData) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(shape, data)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_f32(path: impl AsRef<Path>, shape: &[usize], values: &[f32]) -> Result<()> {
    write_tensor(path, shape, &TensorData::F32(values.to_vec()))
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<TensorHeader> {
    let parse_err = |offset: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < 4 {
        return Err(parse_err(
            0,
            format!(
                "truncated header: expected 4 magic bytes, found {}",
                bytes.len()
            ),
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(parse_err(0, "bad magic".into()));
    }
    if bytes.len() < FIXED_HEADER {
        return Err(parse_err(
            bytes.len(),
            format!(
                "truncated header: expected {FIXED_HEADER} bytes, found {}",
                bytes.len()
            ),
        ));
    }
    if bytes[4] != VERSION {
        return Err(parse_err(4, format!("unsupported version {}", bytes[4])));
    }
    let dtype = DType::from_code(bytes[5])
        .ok_or_else(|| parse_err(5, format!("unknown dtype code {}", bytes[5])))?;
    let ndim = bytes[6] as usize;
    let dims_end = FIXED_HEADER + 4 * ndim;
    if bytes.len() < dims_end {
        return Err(parse_err(
            bytes.len(),
            format!(
                "truncated header: expected {dims_end} bytes for {ndim} dims, found {}",
                bytes.len()
            ),
        ));
    }
    let shape = bytes[FIXED_HEADER..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    Ok(TensorHeader { dtype, shape })
}

/// Reads only the header of a TNSR file.
pub fn read_header(path: impl AsRef<Path>) -> Result<TensorHeader> {
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = vec![0u8; FIXED_HEADER];
    let n = read_up_to(&mut file, &mut head).map_err(|e| Error::io(path, e))?;
    head.truncate(n);
    if n == FIXED_HEADER && &head[..4] == MAGIC {
        let ndim = head[6] as usize;
        let mut dims = vec![0u8; 4 * ndim];
        let m = read_up_to(&mut file, &mut dims).map_err(|e| Error::io(path, e))?;
        head.extend_from_slice(&dims[..m]);
    }
    parse_header(path, &head)
}

fn read_up_to(file: &mut fs::File, buf: &mut [u8]) -> std::io::Result<usize> {
    use std::io::Read;
    let mut filled = 0;
    while filled < buf.len() {
        match file.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

pub fn decode(path: impl AsRef<Path>, bytes: &[u8]) -> Result<Tensor> {
    let path = path.as_ref();
    let header = parse_header(path, bytes)?;
    let start = header.header_len();
    let expected = header.payload_len();
    let actual = bytes.len() - start;
    if actual != expected {
        let what = if actual < expected {
            "truncated payload"
        } else {
            "trailing bytes after payload"
        };
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: (start + actual.min(expected)) as u64,
            message: format!("{what}: expected {expected} bytes, found {actual}"),
        });
    }
    let payload = &bytes[start..];
    let data = match header.dtype {
        DType::F32 => TensorData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
        DType::U8 => TensorData::U8(payload.to_vec()),
    };
    Ok(Tensor {
        shape: header.shape,
        data,
    })
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &bytes)
}
