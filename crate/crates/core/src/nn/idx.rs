//! IDX binary format reader (the MNIST file format).
//!
//! Images: big-endian magic `0x00000803`, then count, rows, cols, then
//! `count*rows*cols` unsigned bytes. Labels: magic `0x00000801`, count,
//! `count` bytes. Pixels are scaled to `[0, 1]`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::data::{LabeledBatch, Targets};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn read_u32(&mut self) -> Result<u32> {
        if self.pos + 4 > self.bytes.len() {
            return Err(Error::InvalidInput("truncated idx file".into()));
        }
        let v = u32::from_be_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        Ok(v)
    }

    fn read_bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::InvalidInput("truncated idx file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

/// Read an IDX image file into an `n x (rows*cols)` matrix scaled to [0,1].
pub fn read_idx_images(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes);
    let magic = r.read_u32()?;
    if magic != IMAGES_MAGIC {
        return Err(Error::InvalidInput(format!(
            "wrong magic {magic:#010x} for idx image file (expected {IMAGES_MAGIC:#010x})"
        )));
    }
    let count = r.read_u32()? as usize;
    let rows = r.read_u32()? as usize;
    let cols = r.read_u32()? as usize;
    let pixels = r.read_bytes(count * rows * cols)?;
    let data = pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    Matrix::from_vec(count, rows * cols, data)
}

/// Read an IDX label file into a vector of class indices.
pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes);
    let magic = r.read_u32()?;
    if magic != LABELS_MAGIC {
        return Err(Error::InvalidInput(format!(
            "wrong magic {magic:#010x} for idx label file (expected {LABELS_MAGIC:#010x})"
        )));
    }
    let count = r.read_u32()? as usize;
    let labels = r.read_bytes(count)?;
    Ok(labels.iter().map(|&b| b as usize).collect())
}

/// Load a paired image/label file set into a labeled batch.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledBatch> {
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if images.rows() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "image/label count mismatch: {} images vs {} labels",
            images.rows(),
            labels.len()
        )));
    }
    LabeledBatch::new(images, Targets::Labels(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_images(path: &Path, count: u32, rows: u32, cols: u32, pixels: &[u8]) {
        let mut f = fs::File::create(path).unwrap();
        f.write_all(&IMAGES_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&count.to_be_bytes()).unwrap();
        f.write_all(&rows.to_be_bytes()).unwrap();
        f.write_all(&cols.to_be_bytes()).unwrap();
        f.write_all(pixels).unwrap();
    }

    fn write_labels(path: &Path, labels: &[u8]) {
        let mut f = fs::File::create(path).unwrap();
        f.write_all(&LABELS_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&(labels.len() as u32).to_be_bytes()).unwrap();
        f.write_all(labels).unwrap();
    }

    #[test]
    fn handcrafted_fixture_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("imgs");
        let lbl_path = dir.path().join("lbls");
        // two 3x3 images: zeros, and a ramp 0..=8 scaled by 31
        let mut pixels = vec![0u8; 9];
        pixels.extend((0..9u8).map(|i| i * 31));
        write_images(&img_path, 2, 3, 3, &pixels);
        write_labels(&lbl_path, &[1, 0]);

        let batch = load_idx(&img_path, &lbl_path).unwrap();
        assert_eq!(batch.inputs.rows(), 2);
        assert_eq!(batch.inputs.cols(), 9);
        assert_eq!(batch.inputs.row(0), &[0.0; 9]);
        for (j, v) in batch.inputs.row(1).iter().enumerate() {
            assert_eq!(*v, f64::from(j as u8 * 31) / 255.0);
        }
        assert_eq!(batch.targets, Targets::Labels(vec![1, 0]));
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad");
        // an images magic in a file read as labels
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(&IMAGES_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&[0, 1]).unwrap();
        drop(f);
        let err = read_idx_labels(&path).unwrap_err();
        assert!(err.to_string().contains("wrong magic"), "{err}");
    }

    #[test]
    fn empty_file_is_truncation_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty");
        fs::File::create(&path).unwrap();
        let err = read_idx_images(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("imgs");
        let lbl_path = dir.path().join("lbls");
        write_images(&img_path, 1, 2, 2, &[0, 0, 0, 0]);
        write_labels(&lbl_path, &[0, 1]);
        let err = load_idx(&img_path, &lbl_path).unwrap_err();
        assert!(err.to_string().contains("mismatch"), "{err}");
    }
}
