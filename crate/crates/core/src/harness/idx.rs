//! Big-endian IDX containers (the MNIST distribution format).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Length(format!("{what}: header truncated at byte {at}")))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let magic = read_u32(bytes, 0, what)?;
    if magic != expected {
        return Err(Error::Format(format!(
            "{what}: magic {magic:#010x}, expected {expected:#010x}"
        )));
    }
    Ok(())
}

/// Images as `[n, rows, cols]` with pixels scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Tensor> {
    check_magic(bytes, IMAGE_MAGIC, "image file")?;
    let n = read_u32(bytes, 4, "image file")? as usize;
    let rows = read_u32(bytes, 8, "image file")? as usize;
    let cols = read_u32(bytes, 12, "image file")? as usize;
    let need = n * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::Length(format!(
            "image file: {} pixel bytes, header promises {need}",
            body.len()
        )));
    }
    if n == 0 || rows == 0 || cols == 0 {
        return Err(Error::Format(format!("image file: empty dims {n}×{rows}×{cols}")));
    }
    let data = body[..need].iter().map(|&b| f64::from(b) / 255.0).collect();
    Tensor::new(vec![n, rows, cols], data)
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, LABEL_MAGIC, "label file")?;
    let n = read_u32(bytes, 4, "label file")? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::Length(format!(
            "label file: {} label bytes, header promises {n}",
            body.len()
        )));
    }
    Ok(body[..n].iter().map(|&b| b as usize).collect())
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<(Tensor, Vec<usize>)> {
    let images = parse_idx_images(&fs::read(images_path)?)?;
    let labels = parse_idx_labels(&fs::read(labels_path)?)?;
    if images.shape()[0] != labels.len() {
        return Err(Error::Consistency(format!(
            "{} images but {} labels",
            images.shape()[0],
            labels.len()
        )));
    }
    Ok((images, labels))
}

/// Encodes `[n, rows, cols]` pixels in `[0, 1]` (rounded to bytes).
pub fn encode_idx_images(images: &Tensor) -> Result<Vec<u8>> {
    let &[n, rows, cols] = images.shape() else {
        return Err(Error::Dimension(format!("expected [n, rows, cols], got {:?}", images.shape())));
    };
    let mut out = Vec::with_capacity(16 + images.len());
    for v in [IMAGE_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(images.data().iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn encode_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        let b = u8::try_from(l).map_err(|_| Error::Value(format!("label {l} does not fit a byte")))?;
        out.push(b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut b = magic.to_be_bytes().to_vec();
        for d in dims {
            b.extend_from_slice(&d.to_be_bytes());
        }
        b
    }

    #[test]
    fn hand_crafted_image() {
        let mut bytes = header(0x803, &[1, 2, 2]);
        bytes.extend_from_slice(&[0, 255, 0, 255]);
        let t = parse_idx_images(&bytes).unwrap();
        assert_eq!(t.shape(), &[1, 2, 2]);
        assert_eq!(t.data(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let mut bytes = header(0x803, &[3]);
        bytes.extend_from_slice(&[1, 2, 3]);
        assert!(matches!(parse_idx_labels(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_is_length_error() {
        let mut bytes = header(0x803, &[2, 2, 2]);
        bytes.extend_from_slice(&[0; 7]);
        assert!(matches!(parse_idx_images(&bytes), Err(Error::Length(_))));
        assert!(matches!(parse_idx_labels(&[0, 0, 8]), Err(Error::Length(_))));
    }

    #[test]
    fn count_mismatch_is_consistency_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        let images = Tensor::new(vec![2, 1, 1], vec![0.0, 1.0]).unwrap();
        fs::write(&img, encode_idx_images(&images).unwrap()).unwrap();
        fs::write(&lab, encode_idx_labels(&[0, 1, 2]).unwrap()).unwrap();
        assert!(matches!(load_idx(&img, &lab), Err(Error::Consistency(_))));
        fs::write(&lab, encode_idx_labels(&[3, 7]).unwrap()).unwrap();
        let (x, y) = load_idx(&img, &lab).unwrap();
        assert_eq!(x, images);
        assert_eq!(y, vec![3, 7]);
    }
}
