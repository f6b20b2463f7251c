//! Dataset ingestion and synthetic signal generation.

use std::path::{Path, PathBuf};

use image::{imageops, DynamicImage, ImageBuffer, Luma};
use osen_core::rng;
use osen_core::Tensor;
use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{OsenError, Result};

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

/// Images scaled to `[0, 1]`, optionally labelled.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSet {
    pub images: Vec<Tensor>,
    pub labels: Option<Vec<usize>>,
    pub rows: usize,
    pub cols: usize,
}

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
}

/// Parses an IDX image file (`u8` pixels, magic `0x00000803`).
pub fn parse_idx_images(bytes: &[u8]) -> std::result::Result<ImageSet, String> {
    let magic = be_u32(bytes, 0).ok_or("truncated header")?;
    if magic != IDX_IMAGES {
        return Err(format!("bad magic {:#010x}, expected {:#010x}", magic, IDX_IMAGES));
    }
    let (count, rows, cols) = match (be_u32(bytes, 4), be_u32(bytes, 8), be_u32(bytes, 12)) {
        (Some(c), Some(r), Some(k)) => (c as usize, r as usize, k as usize),
        _ => return Err("truncated header".into()),
    };
    let size = rows * cols;
    let payload = &bytes[16..];
    if payload.len() < count * size {
        return Err(format!("truncated payload: {} bytes for {} images of {}x{}", payload.len(), count, rows, cols));
    }
    let images = (0..count)
        .map(|i| {
            let px = payload[i * size..(i + 1) * size].iter().map(|&b| b as f64 / 255.0).collect();
            Tensor::new(&[rows, cols], px).expect("sized")
        })
        .collect();
    Ok(ImageSet { images, labels: None, rows, cols })
}

/// Parses an IDX label file (magic `0x00000801`).
pub fn parse_idx_labels(bytes: &[u8]) -> std::result::Result<Vec<usize>, String> {
    let magic = be_u32(bytes, 0).ok_or("truncated header")?;
    if magic != IDX_LABELS {
        return Err(format!("bad magic {:#010x}, expected {:#010x}", magic, IDX_LABELS));
    }
    let count = be_u32(bytes, 4).ok_or("truncated header")? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(format!("truncated payload: {} labels promised, {} present", count, payload.len()));
    }
    Ok(payload[..count].iter().map(|&b| b as usize).collect())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| OsenError::io(path, e))
}

pub fn ingest_idx(images: &Path, labels: Option<&Path>) -> Result<ImageSet> {
    let mut set = parse_idx_images(&read(images)?).map_err(|m| OsenError::data(images, m))?;
    if let Some(lp) = labels {
        let l = parse_idx_labels(&read(lp)?).map_err(|m| OsenError::data(lp, m))?;
        if l.len() != set.images.len() {
            return Err(OsenError::data(lp, format!("{} labels for {} images", l.len(), set.images.len())));
        }
        set.labels = Some(l);
    }
    Ok(set)
}

/// Index partition into train, validation and test sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffled 5:1:1 split.
pub fn split_5_1_1(count: usize, seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut rng::stream(seed, rng::purpose::SPLIT, 0));
    let n_train = count * 5 / 7;
    let n_val = count / 7;
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Split { train: idx, val, test }
}

fn to_tensor(img: &ImageBuffer<Luma<u16>, Vec<u16>>) -> Tensor {
    let (w, h) = img.dimensions();
    Tensor::new(&[h as usize, w as usize], img.pixels().map(|p| p.0[0] as f64 / 65535.0).collect()).expect("sized")
}

/// Reads every `.pgm` file in `dir` (sorted by name), centre-crops to a
/// square and resizes to `side x side`. 8-bit samples scale by 1/255 and
/// 16-bit samples by 1/65535.
pub fn ingest_image_dir(dir: &Path, side: usize) -> Result<ImageSet> {
    let entries = std::fs::read_dir(dir).map_err(|e| OsenError::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(OsenError::data(dir, "no .pgm files"));
    }
    let mut images = Vec::with_capacity(files.len());
    let mut failures = Vec::new();
    for f in &files {
        let wide = match image::open(f) {
            Ok(DynamicImage::ImageLuma8(g)) => DynamicImage::ImageLuma8(g).into_luma16(),
            Ok(DynamicImage::ImageLuma16(g)) => g,
            Ok(other) => {
                failures.push(format!("{}: not grayscale ({:?})", f.display(), other.color()));
                continue;
            }
            Err(e) => {
                failures.push(format!("{}: {}", f.display(), e));
                continue;
            }
        };
        let (w, h) = wide.dimensions();
        let s = w.min(h);
        let cropped = imageops::crop_imm(&wide, (w - s) / 2, (h - s) / 2, s, s).to_image();
        let fitted = if s as usize == side {
            cropped
        } else {
            imageops::resize(&cropped, side as u32, side as u32, imageops::FilterType::Triangle)
        };
        images.push(to_tensor(&fitted));
    }
    if !failures.is_empty() {
        return Err(OsenError::data(dir, format!("unreadable files:\n  {}", failures.join("\n  "))));
    }
    Ok(ImageSet { images, labels: None, rows: side, cols: side })
}

/// Writes an image clamped to `[0, 1]` as an 8-bit PGM.
pub fn write_pgm(path: &Path, img: &Tensor) -> Result<()> {
    let (h, w) = img.dims2()?;
    let px = img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(w as u32, h as u32, px).expect("sized");
    buf.save_with_format(path, image::ImageFormat::Pnm).map_err(|e| OsenError::data(path, e.to_string()))
}

/// Reads a single grayscale PGM at its native size.
pub fn read_pgm(path: &Path) -> Result<Tensor> {
    let img = match image::open(path).map_err(|e| OsenError::data(path, e.to_string()))? {
        DynamicImage::ImageLuma8(g) => DynamicImage::ImageLuma8(g).into_luma16(),
        DynamicImage::ImageLuma16(g) => g,
        other => return Err(OsenError::data(path, format!("not grayscale ({:?})", other.color()))),
    };
    Ok(to_tensor(&img))
}

/// `count` length-`n` signals with exactly `k` non-zeros at uniformly random
/// positions and amplitudes uniform in `[0.2, 1]`. Signal `i` depends only
/// on `(seed, i)`.
pub fn synth_sparse(n: usize, k: usize, count: usize, seed: u64) -> std::result::Result<Vec<Tensor>, String> {
    if k >= n {
        return Err(format!("sparsity {} must be below the dimension {}", k, n));
    }
    Ok((0..count)
        .map(|i| {
            let mut g = rng::stream(seed, rng::purpose::SIGNALS, i as u64);
            let mut x = vec![0.0; n];
            for p in index::sample(&mut g, n, k).into_iter() {
                x[p] = g.gen_range(0.2..=1.0);
            }
            Tensor::vector(x)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(count: u32, rows: u32, cols: u32, payload: usize) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IDX_IMAGES, count, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend((0..payload).map(|i| (i % 256) as u8));
        b
    }

    #[test]
    fn idx_header_only_is_truncated() {
        let e = parse_idx_images(&idx_images(2, 28, 28, 0)).unwrap_err();
        assert!(e.contains("truncated"));
        assert!(parse_idx_images(&[0, 0, 8]).is_err());
    }

    #[test]
    fn idx_payload_matches_header() {
        let set = parse_idx_images(&idx_images(3, 28, 28, 3 * 784)).unwrap();
        assert_eq!(set.images.len(), 3);
        assert_eq!(set.images[0].shape(), &[28, 28]);
        assert_eq!(set.images[0].data()[255], 1.0);
        let mut bad = idx_images(1, 2, 2, 4);
        bad[3] = 0x01;
        assert!(parse_idx_images(&bad).unwrap_err().contains("magic"));
    }

    #[test]
    fn idx_labels() {
        let mut b = Vec::new();
        b.extend_from_slice(&IDX_LABELS.to_be_bytes());
        b.extend_from_slice(&3u32.to_be_bytes());
        b.extend([7u8, 1, 9]);
        assert_eq!(parse_idx_labels(&b).unwrap(), vec![7, 1, 9]);
        assert!(parse_idx_labels(&b[..10]).is_err());
    }

    #[test]
    fn split_ratio() {
        let s = split_5_1_1(7000, 1);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (5000, 1000, 1000));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..7000).collect::<Vec<_>>());
        assert_eq!(s, split_5_1_1(7000, 1));
    }

    #[test]
    fn sparse_signals() {
        let zero = synth_sparse(50, 0, 3, 1).unwrap();
        assert!(zero.iter().all(|x| x.data().iter().all(|&v| v == 0.0)));
        let xs = synth_sparse(100, 20, 10, 4).unwrap();
        for x in &xs {
            let nz: Vec<f64> = x.data().iter().copied().filter(|&v| v != 0.0).collect();
            assert_eq!(nz.len(), 20);
            assert!(nz.iter().all(|v| (0.2..=1.0).contains(v)));
        }
        assert_eq!(xs, synth_sparse(100, 20, 10, 4).unwrap());
        assert_eq!(xs[..5], synth_sparse(100, 20, 5, 4).unwrap()[..]);
        assert!(synth_sparse(10, 10, 1, 0).is_err());
    }
}
