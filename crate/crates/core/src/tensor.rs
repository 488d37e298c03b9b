//! Dense row-major tensors and the `SWGT` binary layout.
//!
//! All arithmetic is carried out in 64-bit floats. The on-disk layout stores
//! single precision: magic `SWGT`, a `u32` rank, `rank` little-endian `u64`
//! extents, then the little-endian `f32` payload in row-major order.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const SWGT_MAGIC: &[u8; 4] = b"SWGT";

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::shape("tensor", format!("zero extent in {shape:?}")));
        }
        if numel(&shape) != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {} values, got {}", numel(&shape), data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    /// Builds a tensor whose shape is known to match `data`.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(numel(&shape), data.len(), "shape {shape:?}");
        Tensor { shape, data }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor::from_parts(shape.to_vec(), vec![value; numel(shape)])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::from_parts(vec![1], vec![value])
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = numel(shape);
        Tensor::from_parts(shape.to_vec(), (0..n).map(&mut f).collect())
    }

    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        Self::from_fn(shape, |_| std * rng.sample::<f64, _>(StandardNormal))
    }

    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        Self::from_fn(shape, |_| rng.gen_range(lo..hi))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &d)| {
            assert!(i < d, "index {index:?} out of bounds for {:?}", self.shape);
            acc * d + i
        })
    }

    pub fn at(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape),
            ));
        }
        Ok(Tensor::from_parts(shape.to_vec(), self.data.clone()))
    }

    /// Reorders axes so that output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::shape("permute", format!("axes {axes:?} for rank {rank}")));
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let in_strides = strides(&self.shape);
        let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
        let mut out = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; rank];
        let mut src = 0usize;
        for _ in 0..self.len() {
            out.push(self.data[src]);
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                src += src_strides[ax];
                if idx[ax] < out_shape[ax] {
                    break;
                }
                src -= src_strides[ax] * out_shape[ax];
                idx[ax] = 0;
            }
        }
        Ok(Tensor::from_parts(out_shape, out))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape, other.shape, "zip_map shapes");
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shapes");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Rounds every value to the nearest `f32`, the precision of the file format.
    pub fn to_f32_precision(&self) -> Tensor {
        self.map(|x| x as f32 as f64)
    }

    pub fn write_swgt<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut buf = Vec::with_capacity(8 + 8 * self.rank() + 4 * self.len());
        buf.extend_from_slice(SWGT_MAGIC);
        buf.extend_from_slice(&(self.rank() as u32).to_le_bytes());
        for &d in &self.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in &self.data {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
        w.write_all(&buf).map_err(|e| Error::io("<swgt stream>", e))
    }

    /// Reads one tensor; `Ok(None)` on a clean end of stream.
    pub fn read_swgt<R: Read>(r: &mut R) -> Result<Option<Tensor>> {
        let mut magic = [0u8; 4];
        match read_exact_or_eof(r, &mut magic)? {
            false => return Ok(None),
            true if &magic != SWGT_MAGIC => {
                return Err(Error::Format { what: "swgt", detail: format!("bad magic {magic:?}") })
            }
            true => {}
        }
        let mut word = [0u8; 4];
        read_exact(r, &mut word)?;
        let rank = u32::from_le_bytes(word) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut ext = [0u8; 8];
            read_exact(r, &mut ext)?;
            shape.push(u64::from_le_bytes(ext) as usize);
        }
        let n = numel(&shape);
        let mut payload = vec![0u8; 4 * n];
        read_exact(r, &mut payload)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Tensor::new(shape, data)
            .map(Some)
            .map_err(|e| Error::Format { what: "swgt", detail: e.to_string() })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_swgt_file(path, std::slice::from_ref(self))
    }

    pub fn load(path: &Path) -> Result<Tensor> {
        let mut all = read_swgt_file(path)?;
        if all.len() != 1 {
            return Err(Error::Format {
                what: "swgt",
                detail: format!("{}: expected one tensor, found {}", path.display(), all.len()),
            });
        }
        Ok(all.pop().unwrap())
    }
}

pub fn write_swgt_file(path: &Path, tensors: &[Tensor]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in tensors {
        t.write_swgt(&mut w)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_swgt_file(path: &Path) -> Result<Vec<Tensor>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut out = Vec::new();
    while let Some(t) = Tensor::read_swgt(&mut r)? {
        out.push(t);
    }
    Ok(out)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::Format { what: "swgt", detail: format!("truncated: {e}") })
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(Error::Format { what: "swgt", detail: "truncated header".into() }),
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::io("<swgt stream>", e)),
        }
    }
    Ok(true)
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Splits `shape` around `axis` into (outer, extent, inner) element counts.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let inner = numel(&shape[axis + 1..]);
    (outer, shape[axis], inner)
}
