//! Layout (little-endian): `WFNN`, u16 version, u32 input c/h/w, u8 padding
//! (0 valid, 1 same), u32 layer count, one 10-byte record per layer
//! (u8 kind, u32 a, u32 b, u8 activation), u32 buffer count, then each
//! parameter buffer as u64 length followed by f32 values. Labels are not
//! stored.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::model::{Activation, CnnArchitecture, CnnModel, LayerSpec, Padding, Shape3};
use super::{NnError, Scalar};

const MAGIC: &[u8; 4] = b"WFNN";
const VERSION: u16 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> NnError + '_ {
    move |source| NnError::Io { path: path.to_path_buf(), source }
}

fn act_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Sigmoid => 1,
    }
}

pub fn write_checkpoint<T: Scalar, W: Write>(model: &CnnModel<T>, mut w: W) -> std::io::Result<()> {
    let arch = model.architecture();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for v in [arch.input.c, arch.input.h, arch.input.w] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.push(match arch.padding {
        Padding::Valid => 0,
        Padding::Same => 1,
    });
    buf.extend_from_slice(&(arch.layers.len() as u32).to_le_bytes());
    for layer in &arch.layers {
        let (kind, a, b, act) = match *layer {
            LayerSpec::Conv { filters, kernel, activation } => (0u8, filters, kernel, act_code(activation)),
            LayerSpec::MaxPool { window, stride } => (1, window, stride, 255),
            LayerSpec::Flatten => (2, 0, 0, 255),
            LayerSpec::Dense { units, activation } => (3, units, 0, act_code(activation)),
        };
        buf.push(kind);
        buf.extend_from_slice(&(a as u32).to_le_bytes());
        buf.extend_from_slice(&(b as u32).to_le_bytes());
        buf.push(act);
    }
    buf.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    w.write_all(&buf)?;
    for p in model.params() {
        buf.clear();
        buf.extend_from_slice(&(p.len() as u64).to_le_bytes());
        for &v in p {
            buf.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

struct Cursor<R> {
    r: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], NnError> {
        let mut b = [0u8; N];
        self.r
            .read_exact(&mut b)
            .map_err(|e| NnError::BadCheckpoint(format!("truncated: {e}")))?;
        Ok(b)
    }

    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u32(&mut self) -> Result<usize, NnError> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }
}

fn parse_act(code: u8) -> Result<Activation, NnError> {
    match code {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::Sigmoid),
        _ => Err(NnError::BadCheckpoint(format!("unknown activation code {code}"))),
    }
}

pub fn read_checkpoint<T: Scalar, R: Read>(r: R) -> Result<CnnModel<T>, NnError> {
    let mut c = Cursor { r };
    if &c.bytes::<4>()? != MAGIC {
        return Err(NnError::BadCheckpoint("bad magic".into()));
    }
    let version = u16::from_le_bytes(c.bytes()?);
    if version != VERSION {
        return Err(NnError::BadCheckpoint(format!("unsupported version {version}")));
    }
    let input = Shape3::new(c.u32()?, c.u32()?, c.u32()?);
    let padding = match c.u8()? {
        0 => Padding::Valid,
        1 => Padding::Same,
        p => return Err(NnError::BadCheckpoint(format!("unknown padding code {p}"))),
    };
    let n_layers = c.u32()?;
    if n_layers > 1024 {
        return Err(NnError::BadCheckpoint(format!("{n_layers} layers")));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let (kind, a, b, act) = (c.u8()?, c.u32()?, c.u32()?, c.u8()?);
        layers.push(match kind {
            0 => LayerSpec::Conv { filters: a, kernel: b, activation: parse_act(act)? },
            1 => LayerSpec::MaxPool { window: a, stride: b },
            2 => LayerSpec::Flatten,
            3 => LayerSpec::Dense { units: a, activation: parse_act(act)? },
            k => return Err(NnError::BadCheckpoint(format!("unknown layer kind {k}"))),
        });
    }
    let arch = CnnArchitecture { input, padding, layers };
    let expect = arch
        .param_shapes()
        .map_err(|e| NnError::BadCheckpoint(format!("invalid architecture: {e}")))?;
    let n_buffers = c.u32()?;
    if n_buffers != 2 * expect.len() {
        return Err(NnError::BadCheckpoint(format!("{n_buffers} parameter buffers, expected {}", 2 * expect.len())));
    }
    let mut params = Vec::with_capacity(n_buffers);
    for i in 0..n_buffers {
        let len = u64::from_le_bytes(c.bytes()?) as usize;
        let want = if i % 2 == 0 { expect[i / 2].0 } else { expect[i / 2].1 };
        if len != want {
            return Err(NnError::BadCheckpoint(format!("buffer {i} has {len} values, expected {want}")));
        }
        let mut raw = vec![0u8; len * 4];
        c.r.read_exact(&mut raw)
            .map_err(|e| NnError::BadCheckpoint(format!("truncated: {e}")))?;
        params.push(
            raw.chunks_exact(4)
                .map(|b| T::from_f64(f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))))
                .collect(),
        );
    }
    let trailing = c.r.read(&mut [0u8]).map_err(|e| NnError::BadCheckpoint(e.to_string()))?;
    if trailing != 0 {
        return Err(NnError::BadCheckpoint("trailing bytes".into()));
    }
    CnnModel::from_params(arch, params).map_err(|e| NnError::BadCheckpoint(e.to_string()))
}

pub fn save_checkpoint<T: Scalar>(model: &CnnModel<T>, path: &Path) -> Result<(), NnError> {
    let f = File::create(path).map_err(io_err(path))?;
    write_checkpoint(model, BufWriter::new(f)).map_err(io_err(path))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<CnnModel<T>, NnError> {
    let f = File::open(path).map_err(io_err(path))?;
    read_checkpoint(BufReader::new(f))
}
