//! MNIST ingestion from the big-endian IDX format.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LogisticObjective, Objective, ProblemInstance};
use crate::{Error, Mat, Result, Vector};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixels, `count · rows · cols` bytes.
    pub pixels: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format("truncated IDX header".into()))
}

fn expect_magic(bytes: &[u8], magic: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != magic {
        return Err(Error::Format(format!("bad IDX magic {found:#010x}, expected {magic:#010x}")));
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    expect_magic(bytes, IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let len = count * rows * cols;
    let pixels = bytes
        .get(16..16 + len)
        .ok_or_else(|| Error::Format(format!("IDX image payload truncated: expected {len} bytes")))?
        .to_vec();
    Ok(IdxImages { count, rows, cols, pixels })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    expect_magic(bytes, LABELS_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    bytes
        .get(8..8 + count)
        .map(<[u8]>::to_vec)
        .ok_or_else(|| Error::Format(format!("IDX label payload truncated: expected {count} bytes")))
}

/// Binary logistic task on a digit pair, split evenly across `m` agents.
///
/// Digit `p` maps to label `+1` and `q` to `−1`; pixels are scaled to
/// `[0, 1]`; samples are shuffled with `seed` and the remainder after equal
/// partition is dropped.
pub fn load_mnist_partition(
    images_path: &Path,
    labels_path: &Path,
    m: usize,
    digit_pair: (u8, u8),
    seed: u64,
) -> Result<ProblemInstance> {
    let images = parse_idx_images(&std::fs::read(images_path)?)?;
    let labels = parse_idx_labels(&std::fs::read(labels_path)?)?;
    partition(&images, &labels, m, digit_pair, seed)
}

fn partition(
    images: &IdxImages,
    labels: &[u8],
    m: usize,
    (p, q): (u8, u8),
    seed: u64,
) -> Result<ProblemInstance> {
    if p == q {
        return Err(Error::Parameter(format!("digit pair must be distinct, got ({p}, {q})")));
    }
    if m == 0 {
        return Err(Error::InvalidSize("need at least one agent".into()));
    }
    if images.count != labels.len() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    let mut kept: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] == p || labels[j] == q).collect();
    let n = kept.len() / m;
    if n == 0 {
        return Err(Error::InsufficientData(format!(
            "{} samples of digits ({p}, {q}) for {m} agents",
            kept.len()
        )));
    }
    kept.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let d = images.rows * images.cols;
    let objectives = kept
        .chunks_exact(n)
        .take(m)
        .map(|chunk| {
            let features = Mat::from_fn(n, d, |r, c| images.pixels[chunk[r] * d + c] as f64 / 255.0);
            let labels = Vector::from_fn(n, |r, _| if labels[chunk[r]] == p { 1.0 } else { -1.0 });
            LogisticObjective::new(features, labels).map(Objective::Logistic)
        })
        .collect::<Result<Vec<_>>>()?;
    ProblemInstance::new(objectives)
}
