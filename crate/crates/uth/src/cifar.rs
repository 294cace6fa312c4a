//! CIFAR-10 binary batches: 3073-byte records, a label byte followed by
//! 1024 red, 1024 green and 1024 blue bytes (row-major planes).

use std::fs;
use std::io::Write;
use std::path::Path;

use uth_core::{Dataset, Dims};

use crate::error::{Error, Result};
use crate::idx::pixel_bytes;

pub const RECORD_LEN: usize = 1 + 3 * 1024;

/// Decodes the concatenated records of one or more batch files.
pub fn decode_cifar10(batches: &[Vec<u8>]) -> Result<Dataset> {
    let dims = Dims::CIFAR10;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (b, bytes) in batches.iter().enumerate() {
        if bytes.len() % RECORD_LEN != 0 {
            return Err(Error::format(format!("batch {b}: {} bytes is not a multiple of {RECORD_LEN}", bytes.len())));
        }
        for rec in bytes.chunks_exact(RECORD_LEN) {
            if rec[0] > 9 {
                return Err(Error::format(format!("batch {b}: label byte {} > 9", rec[0])));
            }
            labels.push(u32::from(rec[0]));
            let planes = &rec[1..];
            // channel-major planes -> H x W x C
            let mut px = vec![0.0; dims.len()];
            for c in 0..3 {
                for p in 0..1024 {
                    px[p * 3 + c] = f64::from(planes[c * 1024 + p]) / 255.0;
                }
            }
            images.push(px);
        }
    }
    Ok(Dataset::from_pixels("cifar10", dims, images, Some(labels))?)
}

pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    let batches = batch_paths.iter().map(fs::read).collect::<std::io::Result<Vec<_>>>()?;
    decode_cifar10(&batches)
}

/// Writes a 32×32×3 dataset in the CIFAR-10 record layout.
pub fn write_cifar10(mut w: impl Write, dataset: &Dataset) -> Result<()> {
    if dataset.dims() != Dims::CIFAR10 {
        return Err(Error::format("CIFAR-10 records hold 32x32x3 images"));
    }
    for s in dataset.samples() {
        let label = s.label.filter(|&l| l <= 9).ok_or_else(|| Error::format("label must be 0..=9"))?;
        let bytes = pixel_bytes(&s.pixels);
        let mut rec = Vec::with_capacity(RECORD_LEN);
        rec.push(label as u8);
        for c in 0..3 {
            rec.extend((0..1024).map(|p| bytes[p * 3 + c]));
        }
        w.write_all(&rec)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_black_record() {
        let mut rec = vec![0u8; RECORD_LEN];
        rec[0] = 3;
        let ds = decode_cifar10(&[rec]).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.samples()[0].label, Some(3));
        assert!(ds.samples()[0].pixels.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn channel_planes_are_interleaved() {
        let mut rec = vec![0u8; RECORD_LEN];
        rec[1] = 255; // red at (0,0)
        rec[1 + 1024 + 1] = 51; // green at (0,1)
        let ds = decode_cifar10(&[rec]).unwrap();
        let s = &ds.samples()[0];
        assert_eq!(s.at(0, 0, 0), 1.0);
        assert_eq!(s.at(0, 1, 1), 0.2);
        assert_eq!(s.at(0, 0, 2), 0.0);
    }

    #[test]
    fn rejects_bad_lengths_and_labels() {
        assert!(matches!(decode_cifar10(&[vec![0u8; RECORD_LEN + 1]]), Err(Error::Format(_))));
        let mut rec = vec![0u8; RECORD_LEN];
        rec[0] = 10;
        assert!(matches!(decode_cifar10(&[rec]), Err(Error::Format(_))));
    }
}
