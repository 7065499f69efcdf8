//! `CP2T` dataset container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CP2T"  u16 version=1  u32 count  u32 side  u32 K
//! per sample: u32 label  u32 partition  u32 pose (0xFFFFFFFF = none)
//!             side² × f32 pixels, row-major
//! ```
//!
//! Pose indices carry no group order, so readers supply the group.

use std::path::Path;

use super::{Dataset, LabeledSample, Split};
use crate::codec::{read_file, write_file, Reader};
use crate::error::{Error, Result};
use crate::group::CyclicGroup;
use crate::image::GridImage;

pub const DATASET_MAGIC: &[u8; 4] = b"CP2T";
pub const DATASET_VERSION: u16 = 1;
pub const NO_POSE: u32 = u32::MAX;

pub fn encode_dataset(d: &Dataset) -> Result<Vec<u8>> {
    let side = d.side();
    let mut out = Vec::with_capacity(18 + d.len() * (12 + 4 * side * side));
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    let header = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::invalid(format!("{what} {v} does not fit in u32")))
    };
    out.extend_from_slice(&header(d.len(), "sample count")?.to_le_bytes());
    out.extend_from_slice(&header(side, "side")?.to_le_bytes());
    out.extend_from_slice(&header(d.num_classes(), "class count")?.to_le_bytes());
    for s in d {
        out.extend_from_slice(&header(s.label, "label")?.to_le_bytes());
        out.extend_from_slice(&header(s.partition, "partition")?.to_le_bytes());
        let pose = s.true_pose.map_or(NO_POSE, |g| g.index());
        out.extend_from_slice(&pose.to_le_bytes());
        for &p in s.image.pixels() {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_dataset(
    bytes: &[u8],
    path: &Path,
    split: Split,
    pose_group: CyclicGroup,
) -> Result<Dataset> {
    let mut r = Reader::new(bytes, path);
    r.magic(DATASET_MAGIC)?;
    let version = r.u16("format version")?;
    if version != DATASET_VERSION {
        return Err(r.error(format!("unsupported dataset version {version}")));
    }
    let count = r.u32("sample count")? as usize;
    let side = r.u32("image side")? as usize;
    let classes = r.u32("class count")? as usize;
    if count == 0 || side == 0 || classes == 0 {
        return Err(r.error("count, side and class count must be positive"));
    }
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let start = r.position();
        let label = r.u32("label")? as usize;
        let partition = r.u32("partition")? as usize;
        let pose = r.u32("true pose")?;
        let mut pixels = Vec::with_capacity(side * side);
        for _ in 0..side * side {
            pixels.push(r.f32("pixel")?);
        }
        if label >= classes {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                offset: start as u64,
                reason: format!("sample {i}: label {label} >= class count {classes}"),
            });
        }
        let true_pose = if pose == NO_POSE {
            None
        } else {
            Some(pose_group.element(pose).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                offset: start as u64 + 8,
                reason: format!("sample {i}: {e}"),
            })?)
        };
        let image = GridImage::new(side, pixels).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            offset: start as u64 + 12,
            reason: format!("sample {i}: {e}"),
        })?;
        samples.push(LabeledSample {
            image,
            label,
            partition,
            true_pose,
        });
    }
    r.finish()?;
    Dataset::new(split, classes, samples)
}

pub fn write_dataset(d: &Dataset, path: &Path) -> Result<()> {
    write_file(path, &encode_dataset(d)?)
}

/// Read a `CP2T` file; stored pose indices are interpreted in `pose_group`.
pub fn read_dataset(path: &Path, split: Split, pose_group: CyclicGroup) -> Result<Dataset> {
    decode_dataset(&read_file(path)?, path, split, pose_group)
}
