//! On-disk formats: binary `A3TN` tensors (single or named containers) and
//! JSON lane files.
//!
//! Tensor layout, all little-endian:
//!
//! ```text
//! "A3TN" | version u8 = 1 | ndim u8 | 0u8 0u8 | ndim × u64 dims | f32 payload
//! ```
//!
//! A named container is a sequence of `u16 name length | UTF-8 name | tensor`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{EvalFrame, Prediction};
use crate::geometry::{CameraRig, GroundPoint};
use crate::head::Proposal;
use crate::lane::Lane3D;

pub const MAGIC: &[u8; 4] = b"A3TN";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::shape("tensor payload", len, data.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn from_f64(dims: Vec<usize>, data: impl IntoIterator<Item = f64>) -> Result<Self> {
        Self::new(dims, data.into_iter().map(|v| v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.dims.len() as u8);
        out.extend_from_slice(&[0, 0]);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.reserve(self.data.len() * 4);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Byte cursor that reports failures with the file path and offset.
struct Reader<'a> {
    path: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::MalformedTensor { path: self.path.to_string(), offset: offset as u64, reason: reason.into() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(
                self.err(self.pos, format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos))
            );
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let start = self.pos;
        if self.take(4, "magic")? != MAGIC {
            return Err(self.err(start, "bad magic, expected \"A3TN\""));
        }
        let header = self.take(4, "header")?;
        if header[0] != VERSION {
            return Err(self.err(start + 4, format!("unsupported version {}", header[0])));
        }
        if header[2] != 0 || header[3] != 0 {
            return Err(self.err(start + 6, "nonzero padding"));
        }
        let ndim = header[1] as usize;
        let mut dims = Vec::with_capacity(ndim);
        let mut len: usize = 1;
        for _ in 0..ndim {
            let at = self.pos;
            let d = u64::from_le_bytes(self.take(8, "dims")?.try_into().unwrap());
            let d = usize::try_from(d).map_err(|_| self.err(at, "dimension overflows usize"))?;
            len = len.checked_mul(d).ok_or_else(|| self.err(at, "element count overflows"))?;
            dims.push(d);
        }
        let bytes = len.checked_mul(4).ok_or_else(|| self.err(self.pos, "payload size overflows"))?;
        let payload = self.take(bytes, "payload")?;
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Tensor { dims, data })
    }
}

pub fn decode_tensor(bytes: &[u8], path: &str) -> Result<Tensor> {
    let mut r = Reader { path, bytes, pos: 0 };
    let t = r.tensor()?;
    if !r.at_end() {
        return Err(r.err(r.pos, "trailing bytes after tensor"));
    }
    Ok(t)
}

pub fn encode_named(tensors: &BTreeMap<String, Tensor>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for (name, t) in tensors {
        let len =
            u16::try_from(name.len()).map_err(|_| Error::InvalidConfig(format!("tensor name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        t.encode(&mut out);
    }
    Ok(out)
}

/// Decodes a named container. A file holding one bare tensor yields a single
/// entry with an empty name.
pub fn decode_named(bytes: &[u8], path: &str) -> Result<BTreeMap<String, Tensor>> {
    if bytes.starts_with(MAGIC) {
        return Ok(BTreeMap::from([(String::new(), decode_tensor(bytes, path)?)]));
    }
    let mut r = Reader { path, bytes, pos: 0 };
    let mut map = BTreeMap::new();
    while !r.at_end() {
        let at = r.pos;
        let n = u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap()) as usize;
        let name =
            std::str::from_utf8(r.take(n, "name")?).map_err(|_| r.err(at + 2, "tensor name is not UTF-8"))?.to_string();
        let t = r.tensor()?;
        if map.insert(name.clone(), t).is_some() {
            return Err(r.err(at, format!("duplicate tensor name `{name}`")));
        }
    }
    Ok(map)
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| io_err(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    decode_tensor(&read_bytes(path)?, &path.display().to_string())
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let mut out = Vec::new();
    t.encode(&mut out);
    write_bytes(path, &out)
}

pub fn read_named(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    decode_named(&read_bytes(path)?, &path.display().to_string())
}

pub fn write_named(path: &Path, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
    write_bytes(path, &encode_named(tensors)?)
}

// ---------------------------------------------------------------------------
// Lane files

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneRecord {
    pub category: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub points: Vec<GroundPoint>,
    pub visibility: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_probs: Option<Vec<f64>>,
}

impl LaneRecord {
    pub fn from_lane(lane: &Lane3D) -> Self {
        Self {
            category: lane.category,
            score: None,
            points: lane.points.clone(),
            visibility: lane.visibility.clone(),
            class_probs: None,
        }
    }

    pub fn from_proposal(p: &Proposal) -> Self {
        Self {
            category: p.category(),
            score: Some(p.score),
            points: p.points().collect(),
            visibility: p.vis.clone(),
            class_probs: Some(p.class_probs.clone()),
        }
    }

    pub fn to_lane(&self) -> Lane3D {
        Lane3D { category: self.category, points: self.points.clone(), visibility: self.visibility.clone() }
    }

    pub fn score(&self) -> f64 {
        self.score.unwrap_or(1.0)
    }

    /// Stored class probabilities, or `score` on `category` and the rest on
    /// the non-lane class.
    pub fn to_proposal(&self, num_classes: usize) -> Proposal {
        let probs = self.class_probs.clone().unwrap_or_else(|| {
            let mut p = vec![0.0; num_classes.max(self.category + 1)];
            p[self.category] += self.score();
            p[0] += 1.0 - self.score();
            p
        });
        Proposal::new(
            probs,
            self.points.iter().map(|p| p.y).collect(),
            self.points.iter().map(|p| p.x).collect(),
            self.points.iter().map(|p| p.z).collect(),
            self.visibility.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneFrame {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraRig>,
    pub lanes: Vec<LaneRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LaneFile {
    pub frames: Vec<LaneFrame>,
}

impl LaneFile {
    /// Checks every lane; errors carry a JSON pointer to the offending lane.
    pub fn validate(&self, path: &str) -> Result<()> {
        for (f, frame) in self.frames.iter().enumerate() {
            for (l, lane) in frame.lanes.iter().enumerate() {
                let fail = |reason: String| Error::MalformedJson {
                    path: path.to_string(),
                    reason: format!("/frames/{f}/lanes/{l}: {reason}"),
                };
                lane.to_lane().validate().map_err(|e| fail(e.to_string()))?;
                if let Some(p) = &lane.class_probs {
                    if p.len() <= lane.category {
                        return Err(fail(format!(
                            "class_probs has {} entries, category is {}",
                            p.len(),
                            lane.category
                        )));
                    }
                }
            }
        }
        let mut ids: Vec<&str> = self.frames.iter().map(|f| f.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::MalformedJson {
                path: path.to_string(),
                reason: format!("duplicate frame id `{}`", w[0]),
            });
        }
        Ok(())
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text).map_err(|e| Error::malformed_json(path, &e))?;
        file.validate(path)?;
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("lane file serialises");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, self.to_json().as_bytes())
    }

    pub fn frame(&self, id: &str) -> Option<&LaneFrame> {
        self.frames.iter().find(|f| f.id == id)
    }
}

/// Pairs ground-truth and prediction frames by id, in ground-truth order.
/// Frames missing from `preds` get no predictions.
pub fn eval_frames(gt: &LaneFile, preds: &LaneFile, tag: Option<&str>) -> Vec<EvalFrame> {
    gt.frames
        .iter()
        .filter(|f| tag.is_none_or(|t| f.tags.iter().any(|x| x == t)))
        .map(|f| EvalFrame {
            id: f.id.clone(),
            gts: f.lanes.iter().map(LaneRecord::to_lane).collect(),
            preds: preds
                .frame(&f.id)
                .map(|p| p.lanes.iter().map(|l| Prediction { lane: l.to_lane(), score: l.score() }).collect())
                .unwrap_or_default(),
        })
        .collect()
}
