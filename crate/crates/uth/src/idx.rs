//! MNIST IDX files: big-endian headers, one unsigned byte per pixel.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use uth_core::{Dataset, Dims};

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_be_bytes(buf))
}

/// Raw image bytes and their `(rows, cols)`.
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<Vec<u8>>,
}

pub fn read_idx_images(mut r: impl Read) -> Result<IdxImages> {
    let magic = read_u32(&mut r)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(format!("bad IDX image magic {magic:#010x}")));
    }
    let count = read_u32(&mut r)? as usize;
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    let mut pixels = Vec::with_capacity(count);
    for _ in 0..count {
        let mut img = vec![0u8; rows * cols];
        r.read_exact(&mut img)?;
        pixels.push(img);
    }
    Ok(IdxImages { rows, cols, pixels })
}

pub fn read_idx_labels(mut r: impl Read) -> Result<Vec<u8>> {
    let magic = read_u32(&mut r)?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(format!("bad IDX label magic {magic:#010x}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut labels = vec![0u8; count];
    r.read_exact(&mut labels)?;
    Ok(labels)
}

/// Decodes an image/label file pair. Pixels are scaled by `1/255`.
pub fn decode_mnist(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let images = read_idx_images(images)?;
    let labels = read_idx_labels(labels)?;
    if images.pixels.len() != labels.len() {
        return Err(Error::Consistency(format!("{} images but {} labels", images.pixels.len(), labels.len())));
    }
    let dims = Dims::new(images.rows, images.cols, 1);
    let pixels = images.pixels.into_iter().map(|img| img.into_iter().map(|b| f64::from(b) / 255.0).collect()).collect();
    let labels = labels.into_iter().map(u32::from).collect();
    Ok(Dataset::from_pixels("mnist", dims, pixels, Some(labels))?)
}

pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    decode_mnist(&fs::read(images_path)?, &fs::read(labels_path)?)
}

/// Quantizes pixels back to bytes (`round(p * 255)`).
pub fn pixel_bytes(pixels: &[f64]) -> Vec<u8> {
    pixels.iter().map(|p| (p * 255.0).round().clamp(0.0, 255.0) as u8).collect()
}

/// Writes a single-channel dataset as an IDX image file.
pub fn write_idx_images(mut w: impl Write, dataset: &Dataset) -> Result<()> {
    let dims = dataset.dims();
    if dims.channels != 1 {
        return Err(Error::format("IDX image files hold single-channel images"));
    }
    w.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    w.write_all(&(dataset.len() as u32).to_be_bytes())?;
    w.write_all(&(dims.height as u32).to_be_bytes())?;
    w.write_all(&(dims.width as u32).to_be_bytes())?;
    for s in dataset.samples() {
        w.write_all(&pixel_bytes(&s.pixels))?;
    }
    Ok(())
}

pub fn write_idx_labels(mut w: impl Write, dataset: &Dataset) -> Result<()> {
    w.write_all(&LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(dataset.len() as u32).to_be_bytes())?;
    for s in dataset.samples() {
        let label = s.label.ok_or_else(|| Error::format("sample without label"))?;
        let byte = u8::try_from(label).map_err(|_| Error::format("label does not fit a byte"))?;
        w.write_all(&[byte])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_pair(pixels: &[&[u8]], labels: &[u8], rows: u32, cols: u32) -> (Vec<u8>, Vec<u8>) {
        let mut img = Vec::new();
        img.extend(IMAGES_MAGIC.to_be_bytes());
        img.extend((pixels.len() as u32).to_be_bytes());
        img.extend(rows.to_be_bytes());
        img.extend(cols.to_be_bytes());
        for p in pixels {
            img.extend_from_slice(p);
        }
        let mut lab = Vec::new();
        lab.extend(LABELS_MAGIC.to_be_bytes());
        lab.extend((labels.len() as u32).to_be_bytes());
        lab.extend_from_slice(labels);
        (img, lab)
    }

    #[test]
    fn scales_endpoints() {
        let (img, lab) = idx_pair(&[&[0, 255, 0, 255], &[255, 255, 0, 0]], &[7, 2], 2, 2);
        let ds = decode_mnist(&img, &lab).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dims(), Dims::new(2, 2, 1));
        assert_eq!(ds.samples()[0].pixels, vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(ds.samples()[1].label, Some(2));
    }

    #[test]
    fn bad_magic_is_format_error() {
        let (mut img, lab) = idx_pair(&[&[0; 4]], &[1], 2, 2);
        img[3] = 0x01;
        assert!(matches!(decode_mnist(&img, &lab), Err(Error::Format(_))));
        let (img, mut lab) = idx_pair(&[&[0; 4]], &[1], 2, 2);
        lab[3] = 0x03;
        assert!(matches!(decode_mnist(&img, &lab), Err(Error::Format(_))));
    }

    #[test]
    fn count_mismatch_is_consistency_error() {
        let (img, lab) = idx_pair(&[&[0; 4], &[1; 4]], &[1], 2, 2);
        assert!(matches!(decode_mnist(&img, &lab), Err(Error::Consistency(_))));
    }

    #[test]
    fn truncation_is_io_error() {
        let (img, lab) = idx_pair(&[&[0; 4], &[1; 4]], &[1, 2], 2, 2);
        match decode_mnist(&img[..img.len() - 1], &lab) {
            Err(Error::Io(e)) => assert_eq!(e.kind(), io::ErrorKind::UnexpectedEof),
            other => panic!("expected io error, got {other:?}"),
        }
        assert!(matches!(decode_mnist(&img, &lab[..9]), Err(Error::Io(_))));
    }
}
