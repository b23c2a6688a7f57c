//! Labelled trajectory datasets and their on-disk format.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! "PADS"  u32 version (=1)  u32 record count
//! per record:
//!   u32 T   u8 height   u8 width   u8 class id
//!   T bytes           probe action codes
//!   (T + 1) * h * w   cell codes, one matrix per state, row-major
//! ```

use std::fs;
use std::path::Path;

use super::Trajectory;
use crate::error::{Error, Result};
use crate::grid_env::{Action, StateEncoding};
use crate::opponent_zoo::OpponentClass;
use crate::rollout::{collect_episodes, EnvSpec, ProbePolicy};

const MAGIC: &[u8; 4] = b"PADS";
const VERSION: u32 = 1;

/// Rolls `episodes` labelled episodes with the opponent class drawn uniformly
/// from `class_set` for each one.
pub fn dataset_generate(
    env: &EnvSpec,
    policy: &dyn ProbePolicy,
    class_set: &[OpponentClass],
    episodes: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if episodes == 0 {
        return Err(Error::Config("dataset needs at least one episode".into()));
    }
    Ok(collect_episodes(env, policy, class_set, episodes, seed, 0)?
        .into_iter()
        .map(|r| r.trajectory)
        .collect())
}

pub fn encode_dataset(data: &[Trajectory]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32::try_from(data.len()).map_err(|_| Error::Config("too many records".into()))?.to_le_bytes());
    for t in data {
        let first = &t.states[0];
        let steps = u32::try_from(t.steps()).map_err(|_| Error::Config("trajectory too long".into()))?;
        out.extend_from_slice(&steps.to_le_bytes());
        out.push(first.height() as u8);
        out.push(first.width() as u8);
        out.push(t.label.id() as u8);
        out.extend(t.actions.iter().map(|a| a.index() as u8));
        for s in &t.states {
            out.extend_from_slice(s.cells());
        }
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<Trajectory>> {
    let bad = |d: String| Error::format("dataset", d);
    let mut cur = bytes;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(bad("unexpected end of file".into()));
        }
        let (head, tail) = cur.split_at(n);
        cur = tail;
        Ok(head)
    };
    if take(4)? != MAGIC {
        return Err(bad("missing PADS magic".into()));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
    let mut data = Vec::with_capacity(count.min(1 << 16));
    for rec in 0..count {
        let steps = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let hdr = take(3)?;
        let (height, width, class_id) = (hdr[0] as usize, hdr[1] as usize, hdr[2] as usize);
        let label = OpponentClass::from_id(class_id).ok_or_else(|| bad(format!("record {rec}: class id {class_id}")))?;
        let actions = take(steps)?
            .iter()
            .map(|&b| Action::from_index(b as usize).ok_or_else(|| bad(format!("record {rec}: action code {b}"))))
            .collect::<Result<Vec<_>>>()?;
        let cells = width * height;
        let states = (0..=steps)
            .map(|_| StateEncoding::from_cells(width, height, take(cells)?.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        data.push(Trajectory::new(states, actions, label)?);
    }
    if !cur.is_empty() {
        return Err(bad(format!("{} trailing bytes", cur.len())));
    }
    Ok(data)
}

pub fn write_dataset(path: &Path, data: &[Trajectory]) -> Result<()> {
    fs::write(path, encode_dataset(data)?).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Vec<Trajectory>> {
    decode_dataset(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
