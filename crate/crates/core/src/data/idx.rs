//! MNIST IDX container (big-endian headers, u8 payload).

use std::fs;
use std::io::{self, Cursor, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Images and labels as stored on disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxData {
    pub rows: usize,
    pub cols: usize,
    /// One row-major `rows * cols` pixel buffer per image.
    pub images: Vec<Vec<u8>>,
    pub labels: Vec<u8>,
}

impl IdxData {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<IdxData> {
    let (rows, cols, images) = parse_images(&fs::read(images_path)?)?;
    let labels = parse_labels(&fs::read(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    Ok(IdxData {
        rows,
        cols,
        images,
        labels,
    })
}

fn truncated(what: &'static str) -> impl Fn(io::Error) -> Error {
    move |e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::Truncated {
                what,
                detail: "file ends before the declared item count".into(),
            }
        } else {
            Error::Io(e)
        }
    }
}

fn check_magic(found: u32, expected: u32, what: &'static str) -> Result<()> {
    if found != expected {
        return Err(Error::BadMagic {
            what,
            expected: format!("0x{expected:08x}"),
            found: format!("0x{found:08x}"),
        });
    }
    Ok(())
}

pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    const WHAT: &str = "IDX image file";
    let mut cur = Cursor::new(bytes);
    let t = truncated(WHAT);
    check_magic(cur.read_u32::<BigEndian>().map_err(&t)?, IMAGE_MAGIC, WHAT)?;
    let n = cur.read_u32::<BigEndian>().map_err(&t)? as usize;
    let rows = cur.read_u32::<BigEndian>().map_err(&t)? as usize;
    let cols = cur.read_u32::<BigEndian>().map_err(&t)? as usize;
    let mut images = Vec::with_capacity(n);
    for _ in 0..n {
        let mut px = vec![0u8; rows * cols];
        cur.read_exact(&mut px).map_err(&t)?;
        images.push(px);
    }
    Ok((rows, cols, images))
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    const WHAT: &str = "IDX label file";
    let mut cur = Cursor::new(bytes);
    let t = truncated(WHAT);
    check_magic(cur.read_u32::<BigEndian>().map_err(&t)?, LABEL_MAGIC, WHAT)?;
    let n = cur.read_u32::<BigEndian>().map_err(&t)? as usize;
    let mut labels = vec![0u8; n];
    cur.read_exact(&mut labels).map_err(&t)?;
    Ok(labels)
}

pub fn write_idx(data: &IdxData, images_path: &Path, labels_path: &Path) -> Result<()> {
    write_atomic(images_path, |w| write_images(w, data))?;
    write_atomic(labels_path, |w| write_labels(w, &data.labels))
}

pub fn write_images(w: &mut dyn Write, data: &IdxData) -> Result<()> {
    w.write_u32::<BigEndian>(IMAGE_MAGIC)?;
    w.write_u32::<BigEndian>(data.images.len() as u32)?;
    w.write_u32::<BigEndian>(data.rows as u32)?;
    w.write_u32::<BigEndian>(data.cols as u32)?;
    for img in &data.images {
        if img.len() != data.pixels_per_image() {
            return Err(Error::dim(format!(
                "image has {} pixels, expected {}",
                img.len(),
                data.pixels_per_image()
            )));
        }
        w.write_all(img)?;
    }
    Ok(())
}

pub fn write_labels(w: &mut dyn Write, labels: &[u8]) -> Result<()> {
    w.write_u32::<BigEndian>(LABEL_MAGIC)?;
    w.write_u32::<BigEndian>(labels.len() as u32)?;
    w.write_all(labels)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> IdxData {
        IdxData {
            rows: 2,
            cols: 3,
            images: vec![vec![0, 1, 2, 3, 4, 255], vec![9, 8, 7, 6, 5, 4]],
            labels: vec![3, 7],
        }
    }

    #[test]
    fn fixture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lbl"));
        let data = fixture();
        write_idx(&data, &ip, &lp).unwrap();
        let bytes = fs::read(&ip).unwrap();
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        assert_eq!(bytes.len(), 16 + 12);
        assert_eq!(load_idx(&ip, &lp).unwrap(), data);
    }

    #[test]
    fn label_file_as_image_file_is_magic_error() {
        let mut lbl = Vec::new();
        write_labels(&mut lbl, &[1, 2]).unwrap();
        assert!(matches!(parse_images(&lbl), Err(Error::BadMagic { .. })));
        let mut img = Vec::new();
        write_images(&mut img, &fixture()).unwrap();
        assert!(matches!(parse_labels(&img), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn truncation_and_count_mismatch() {
        let mut img = Vec::new();
        write_images(&mut img, &fixture()).unwrap();
        img.pop();
        assert!(matches!(parse_images(&img), Err(Error::Truncated { .. })));
        assert!(matches!(parse_labels(&[0, 0, 8]), Err(Error::Truncated { .. })));

        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lbl"));
        let mut data = fixture();
        write_idx(&data, &ip, &lp).unwrap();
        data.labels.push(1);
        write_atomic(&lp, |w| write_labels(w, &data.labels)).unwrap();
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(Error::CountMismatch { images: 2, labels: 3 })
        ));
    }
}
