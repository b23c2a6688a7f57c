//! Flat binary checkpoint container.
//!
//! Layout: an ASCII header of newline-terminated lines followed by raw
//! little-endian f64 values for every tensor, in header order.
//!
//! ```text
//! PROBE-ARENA-CHECKPOINT 1
//! kind <model kind>
//! meta <key> <value to end of line>      (zero or more, sorted by key)
//! tensor <name> <dim> [<dim> ...]        (one per tensor)
//! end <total value count>
//! <8 * total bytes of f64 LE>
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &str = "PROBE-ARENA-CHECKPOINT 1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

fn check_token(what: &str, s: &str, allow_spaces: bool) -> Result<()> {
    let bad = s.contains('\n') || s.contains('\r') || (!allow_spaces && (s.is_empty() || s.contains(' ')));
    if bad {
        return Err(Error::format("checkpoint", format!("{what} {s:?} cannot be stored in the header")));
    }
    Ok(())
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Checkpoint {
            kind: kind.into(),
            ..Default::default()
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.insert(key.into(), value.to_string());
        self
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::format("checkpoint", format!("missing metadata key {key:?}")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta_str(key)?;
        raw.parse()
            .map_err(|_| Error::format("checkpoint", format!("metadata {key}={raw:?} does not parse")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        check_token("kind", &self.kind, false)?;
        let mut header = format!("{MAGIC}\nkind {}\n", self.kind);
        for (k, v) in &self.meta {
            check_token("meta key", k, false)?;
            check_token("meta value", v, true)?;
            header.push_str(&format!("meta {k} {v}\n"));
        }
        let mut total = 0;
        for (name, t) in &self.tensors {
            check_token("tensor name", name, false)?;
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            header.push_str(&format!("tensor {name} {}\n", dims.join(" ")));
            total += t.len();
        }
        header.push_str(&format!("end {total}\n"));
        let mut bytes = header.into_bytes();
        bytes.reserve(total * 8);
        for (_, t) in &self.tensors {
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |d: String| Error::format("checkpoint", d);
        let mut pos = 0;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[pos..];
            let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header".into()))?;
            let line = std::str::from_utf8(&rest[..nl]).map_err(|_| bad("header is not UTF-8".into()))?;
            pos += nl + 1;
            Ok(line)
        };
        if next_line()? != MAGIC {
            return Err(bad("missing magic line".into()));
        }
        let kind = next_line()?
            .strip_prefix("kind ")
            .ok_or_else(|| bad("missing kind line".into()))?
            .to_string();
        let mut meta = BTreeMap::new();
        let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
        let total: usize = loop {
            let line = next_line()?;
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                meta.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let mut parts = rest.split(' ');
                let name = parts.next().unwrap_or_default().to_string();
                let dims = parts
                    .map(|d| d.parse::<usize>().map_err(|_| bad(format!("bad dimension {d:?} for {name}"))))
                    .collect::<Result<Vec<_>>>()?;
                shapes.push((name, dims));
            } else if let Some(rest) = line.strip_prefix("end ") {
                break rest.parse().map_err(|_| bad(format!("bad value count {rest:?}")))?;
            } else {
                return Err(bad(format!("unexpected header line {line:?}")));
            }
        };
        let declared: usize = shapes.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        if declared != total {
            return Err(bad(format!("shape table sums to {declared} values but end line says {total}")));
        }
        let body = &bytes[pos..];
        if body.len() != total * 8 {
            return Err(bad(format!("expected {} data bytes, found {}", total * 8, body.len())));
        }
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
        let mut tensors = Vec::with_capacity(shapes.len());
        for (name, shape) in shapes {
            let n = shape.iter().product();
            let data: Vec<f64> = values.by_ref().take(n).collect();
            tensors.push((name, Tensor::from_vec(&shape, data)?));
        }
        Ok(Checkpoint { kind, meta, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
