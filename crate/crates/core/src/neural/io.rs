//! Model file: `MGTD` magic, one version byte, then little-endian blocks:
//! config, vocabulary, domain names, parameter tensors (f32, declaration
//! order), and a trailing FNV-1a checksum of everything before it.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ClassifierModel, EncoderConfig, NeuralError, Vocabulary};
use crate::genpipe::stable_hash;

pub const MAGIC: &[u8; 4] = b"MGTD";
pub const FORMAT_VERSION: u8 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len());
    buf.extend_from_slice(s.as_bytes());
}

pub fn to_bytes(model: &ClassifierModel) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(FORMAT_VERSION);
    let c = model.config();
    put_u32(&mut buf, c.embedding_dim);
    put_u32(&mut buf, c.num_layers);
    put_u32(&mut buf, c.num_heads);
    put_u32(&mut buf, c.feedforward_dim);
    put_u32(&mut buf, c.max_seq_len);
    buf.extend_from_slice(&c.dropout.to_le_bytes());
    buf.extend_from_slice(&model.grl_lambda.to_le_bytes());
    put_u32(&mut buf, model.vocab().len());
    for t in model.vocab().tokens() {
        put_str(&mut buf, t);
    }
    put_u32(&mut buf, model.domains().len());
    for d in model.domains() {
        put_str(&mut buf, d);
    }
    put_u32(&mut buf, model.layout().tensors.len());
    for t in &model.layout().tensors {
        put_u32(&mut buf, t.rows);
        put_u32(&mut buf, t.cols);
        for &p in &model.params()[t.range()] {
            buf.extend_from_slice(&(p as f32).to_le_bytes());
        }
    }
    let sum = stable_hash(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NeuralError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            NeuralError::Corrupt(format!("unexpected end of file at byte {}", self.pos))
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize, NeuralError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64, NeuralError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, NeuralError> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| NeuralError::Corrupt("invalid utf-8 string".into()))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<ClassifierModel, NeuralError> {
    if buf.len() < MAGIC.len() + 1 || &buf[..4] != MAGIC {
        return Err(NeuralError::Corrupt("missing magic bytes".into()));
    }
    if buf[4] != FORMAT_VERSION {
        return Err(NeuralError::Version { found: buf[4], expected: FORMAT_VERSION });
    }
    if buf.len() < 13 {
        return Err(NeuralError::Corrupt("file too short".into()));
    }
    let (body, tail) = buf.split_at(buf.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if stable_hash(body) != stored {
        return Err(NeuralError::Corrupt("checksum mismatch (truncated or modified file)".into()));
    }
    let mut r = Reader { buf: body, pos: 5 };
    let config = EncoderConfig {
        embedding_dim: r.u32()?,
        num_layers: r.u32()?,
        num_heads: r.u32()?,
        feedforward_dim: r.u32()?,
        max_seq_len: r.u32()?,
        dropout: r.f64()?,
    };
    let grl_lambda = r.f64()?;
    let n_tokens = r.u32()?;
    let tokens = (0..n_tokens).map(|_| r.string()).collect::<Result<Vec<_>, _>>()?;
    let n_domains = r.u32()?;
    let domains = (0..n_domains).map(|_| r.string()).collect::<Result<Vec<_>, _>>()?;
    let n_tensors = r.u32()?;
    let mut params = Vec::new();
    let mut shapes = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let rows = r.u32()?;
        let cols = r.u32()?;
        shapes.push((rows, cols));
        let bytes = r.take(rows.checked_mul(cols).and_then(|n| n.checked_mul(4)).ok_or_else(|| {
            NeuralError::Corrupt("tensor size overflow".into())
        })?)?;
        params.extend(bytes.chunks_exact(4).map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes")))));
    }
    if r.pos != body.len() {
        return Err(NeuralError::Corrupt("trailing bytes after parameter blocks".into()));
    }
    let model = ClassifierModel::from_parts(config, Vocabulary::from_tokens(tokens), domains, grl_lambda, params)
        .map_err(|e| NeuralError::Corrupt(e.to_string()))?;
    let expected: Vec<(usize, usize)> = model.layout().tensors.iter().map(|t| (t.rows, t.cols)).collect();
    if expected != shapes {
        return Err(NeuralError::Corrupt("tensor shapes do not match the config".into()));
    }
    Ok(model)
}

/// Writes atomically (temp file, then rename).
pub fn save_model(model: &ClassifierModel, path: impl AsRef<Path>) -> Result<(), NeuralError> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&to_bytes(model))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ClassifierModel, NeuralError> {
    from_bytes(&fs::read(path)?)
}
