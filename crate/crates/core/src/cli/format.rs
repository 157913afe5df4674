//! Binary file formats. All integers and floats are little-endian; grid
//! payloads are row-major pixel-then-channel `f32`.
//!
//! | file    | header                                                              |
//! |---------|---------------------------------------------------------------------|
//! | feature | `PANSFEAT` `u16 version` `u32 height` `u32 width` `u32 dim`          |
//! | model   | `PANSMODL` `u16 version` `u8 head` `u32 classes` `u32 dim` `f64 tau` |
//! | score   | `PANSSCOR` `u16 version` `u32 height` `u32 width`                    |
//!
//! Model payload: `classes x dim` weights, followed by `classes` biases when
//! `head == 1` (linear); `head == 0` is the cosine head. Masks are binary PGM
//! (`P5`, maxval 255), one byte per pixel holding the class id.

use std::fs;
use std::path::Path;

use crate::classifier::Model;
use crate::error::{Error, Result};
use crate::grid::{AnomalyMap, FeatureMap, HeadKind, LabelMask, PrototypeBank};

pub const FEATURE_MAGIC: &[u8; 8] = b"PANSFEAT";
pub const MODEL_MAGIC: &[u8; 8] = b"PANSMODL";
pub const SCORE_MAGIC: &[u8; 8] = b"PANSSCOR";
pub const VERSION: u16 = 1;

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], format: &'static str) -> Self {
        Self { buf, pos: 0, format }
    }

    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::format(
                self.format,
                field,
                format!("truncated: need {n} bytes at offset {}, file has {}", self.pos, self.buf.len()),
            )
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn magic(&mut self, want: &[u8; 8]) -> Result<()> {
        let got = self.take(8, "magic")?;
        if got != want {
            return Err(Error::format(
                self.format,
                "magic",
                format!("expected {:?}, found {:?}", String::from_utf8_lossy(want), String::from_utf8_lossy(got)),
            ));
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let v = self.u16("version")?;
        if v != VERSION {
            return Err(Error::format(self.format, "version", format!("unsupported version {v}")));
        }
        Ok(())
    }

    fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    fn u16(&mut self, field: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, field)?.try_into().unwrap()))
    }

    fn u32(&mut self, field: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn f32s(&mut self, count: usize, field: &str) -> Result<Vec<f64>> {
        let bytes = count
            .checked_mul(4)
            .ok_or_else(|| Error::format(self.format, field, "size overflows"))?;
        Ok(self
            .take(bytes, field)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(
                self.format,
                "payload",
                format!("{} trailing bytes after payload", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidInput(format!("{what} {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f32s(out: &mut Vec<u8>, values: &[f64]) -> Result<()> {
    for &v in values {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::NonFinite(format!("value {v} does not fit in f32")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(())
}

pub fn encode_features(map: &FeatureMap) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(22 + map.data().len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, map.height(), "height")?;
    put_u32(&mut out, map.width(), "width")?;
    put_u32(&mut out, map.dim(), "dim")?;
    put_f32s(&mut out, map.data())?;
    Ok(out)
}

pub fn decode_features(buf: &[u8]) -> Result<FeatureMap> {
    let mut cur = Cursor::new(buf, "feature");
    cur.magic(FEATURE_MAGIC)?;
    cur.version()?;
    let height = cur.u32("height")?;
    let width = cur.u32("width")?;
    let dim = cur.u32("dim")?;
    if dim == 0 {
        return Err(Error::format("feature", "dim", "must be positive"));
    }
    let count = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(dim))
        .ok_or_else(|| Error::format("feature", "height", "grid size overflows"))?;
    let data = cur.f32s(count, "payload")?;
    cur.finish()?;
    FeatureMap::new(height, width, dim, data)
}

pub fn encode_mask(mask: &LabelMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend_from_slice(mask.labels());
    out
}

/// Parse a binary PGM; header tokens may be separated by any whitespace and `#` comments.
pub fn decode_mask(buf: &[u8]) -> Result<LabelMask> {
    let fail = |field: &str, reason: String| Error::format("mask", field, reason);
    if buf.len() < 2 || &buf[..2] != b"P5" {
        return Err(fail("magic", "expected binary PGM `P5`".into()));
    }
    let mut pos = 2;
    let mut token = |field: &str| -> Result<usize> {
        loop {
            match buf.get(pos) {
                Some(b'#') => {
                    while buf.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while buf.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(fail(field, "missing or non-numeric value".into()));
        }
        std::str::from_utf8(&buf[start..pos])
            .unwrap()
            .parse()
            .map_err(|e| fail(field, format!("{e}")))
    };
    let width = token("width")?;
    let height = token("height")?;
    let maxval = token("maxval")?;
    if maxval != 255 {
        return Err(fail("maxval", format!("expected 255, found {maxval}")));
    }
    if !buf.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(fail("maxval", "missing whitespace before raster".into()));
    }
    pos += 1;
    let raster = &buf[pos..];
    let want = width.checked_mul(height).ok_or_else(|| fail("width", "size overflows".into()))?;
    if raster.len() != want {
        return Err(fail(
            "raster",
            format!("expected {want} bytes for {width}x{height}, found {}", raster.len()),
        ));
    }
    LabelMask::new(height, width, raster.to_vec())
}

pub fn encode_model(model: &Model) -> Result<Vec<u8>> {
    let bank = &model.bank;
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match bank.head_kind() {
        HeadKind::Cosine => 0,
        HeadKind::Linear => 1,
    });
    put_u32(&mut out, bank.classes(), "classes")?;
    put_u32(&mut out, bank.dim(), "dim")?;
    out.extend_from_slice(&model.temperature.to_le_bytes());
    put_f32s(&mut out, bank.weights())?;
    if let Some(bias) = bank.bias() {
        put_f32s(&mut out, bias)?;
    }
    Ok(out)
}

pub fn decode_model(buf: &[u8]) -> Result<Model> {
    let mut cur = Cursor::new(buf, "model");
    cur.magic(MODEL_MAGIC)?;
    cur.version()?;
    let head = match cur.u8("head_kind")? {
        0 => HeadKind::Cosine,
        1 => HeadKind::Linear,
        other => return Err(Error::format("model", "head_kind", format!("unknown head {other}"))),
    };
    let classes = cur.u32("classes")?;
    let dim = cur.u32("dim")?;
    let temperature = cur.f64("tau")?;
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::format("model", "tau", format!("must be positive, found {temperature}")));
    }
    let count = classes
        .checked_mul(dim)
        .ok_or_else(|| Error::format("model", "classes", "size overflows"))?;
    let weights = cur.f32s(count, "weights")?;
    let bank = match head {
        HeadKind::Cosine => {
            cur.finish()?;
            PrototypeBank::cosine(classes, dim, weights)?
        }
        HeadKind::Linear => {
            let bias = cur.f32s(classes, "bias")?;
            cur.finish()?;
            PrototypeBank::linear(classes, dim, weights, bias)?
        }
    };
    Ok(Model { bank, temperature })
}

pub fn encode_scores(map: &AnomalyMap) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(18 + map.data().len() * 4);
    out.extend_from_slice(SCORE_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, map.height(), "height")?;
    put_u32(&mut out, map.width(), "width")?;
    put_f32s(&mut out, map.data())?;
    Ok(out)
}

pub fn decode_scores(buf: &[u8]) -> Result<AnomalyMap> {
    let mut cur = Cursor::new(buf, "score");
    cur.magic(SCORE_MAGIC)?;
    cur.version()?;
    let height = cur.u32("height")?;
    let width = cur.u32("width")?;
    let count = height
        .checked_mul(width)
        .ok_or_else(|| Error::format("score", "height", "grid size overflows"))?;
    let data = cur.f32s(count, "payload")?;
    cur.finish()?;
    AnomalyMap::new(height, width, data)
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Attach the offending path to format errors.
fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Format { format, field, reason } => Error::Format {
            format,
            field,
            reason: format!("{reason} ({})", path.display()),
        },
        other => other,
    })
}

pub fn read_features(path: &Path) -> Result<FeatureMap> {
    with_path(path, decode_features(&read_bytes(path)?))
}

pub fn read_mask(path: &Path) -> Result<LabelMask> {
    with_path(path, decode_mask(&read_bytes(path)?))
}

pub fn read_model(path: &Path) -> Result<Model> {
    with_path(path, decode_model(&read_bytes(path)?))
}

pub fn read_scores(path: &Path) -> Result<AnomalyMap> {
    with_path(path, decode_scores(&read_bytes(path)?))
}

pub fn write_features(path: &Path, map: &FeatureMap) -> Result<()> {
    write_bytes(path, &encode_features(map)?)
}

pub fn write_mask(path: &Path, mask: &LabelMask) -> Result<()> {
    write_bytes(path, &encode_mask(mask))
}

pub fn write_model(path: &Path, model: &Model) -> Result<()> {
    write_bytes(path, &encode_model(model)?)
}

pub fn write_scores(path: &Path, map: &AnomalyMap) -> Result<()> {
    write_bytes(path, &encode_scores(map)?)
}
