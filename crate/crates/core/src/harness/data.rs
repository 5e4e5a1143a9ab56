//! Image classification datasets: IDX (MNIST-style) and CIFAR-10 binary.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::backbone::pad_to;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;

/// Images in `[0, 1]` (before normalisation) with integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

/// Per-channel statistics computed on a training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Normalization {
    pub fn fit(d: &Dataset) -> Self {
        let s = d.images.shape();
        let (mut mean, mut std) = (vec![0f32; s.c], vec![0f32; s.c]);
        for c in 0..s.c {
            let (mut sum, mut sq) = (0f64, 0f64);
            for n in 0..s.n {
                for &v in d.images.plane(n, c) {
                    sum += v as f64;
                    sq += (v as f64) * (v as f64);
                }
            }
            let count = (s.n * s.plane()) as f64;
            let m = sum / count;
            mean[c] = m as f32;
            std[c] = ((sq / count - m * m).max(0.0).sqrt() as f32).max(1e-6);
        }
        Normalization { mean, std }
    }

    pub fn apply(&self, d: &mut Dataset) {
        let s = d.images.shape();
        for n in 0..s.n {
            for c in 0..s.c {
                let (m, sd) = (self.mean[c], self.std[c]);
                for v in d.images.plane_mut(n, c) {
                    *v = (*v - m) / sd;
                }
            }
        }
    }

    /// `1 x 2 x 1 x C` tensor: row 0 mean, row 1 std.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let c = self.mean.len();
        Tensor::from_vec(
            Shape::new(1, 2, 1, c),
            self.mean.iter().chain(&self.std).copied().collect(),
        )
        .unwrap()
    }
}

impl Dataset {
    pub fn new(images: Tensor<f32>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.shape().n != labels.len() {
            return Err(Error::CountMismatch {
                images: images.shape().n,
                labels: labels.len(),
            });
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Format(format!(
                "label {l} outside {num_classes} classes"
            )));
        }
        Ok(Dataset {
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: self.images.gather(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// The first `n` samples (all if `n` is larger).
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Zero-pads every image to the next multiple of `m` on both axes.
    pub fn pad_to_multiple(&mut self, m: usize) -> Result<()> {
        let s = self.images.shape();
        let (h, w) = (s.h.div_ceil(m) * m, s.w.div_ceil(m) * m);
        if (h, w) != (s.h, s.w) {
            self.images = pad_to(&self.images, h, w)?;
        }
        Ok(())
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &'static str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or(Error::Truncated {
            what,
            expected: at + 4,
            found: bytes.len(),
        })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Parses an IDX image file and its label file. Pixels are scaled to `[0, 1]`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let ib = read_file(images)?;
    let lb = read_file(labels)?;
    parse_idx(&ib, &lb)
}

pub fn parse_idx(ib: &[u8], lb: &[u8]) -> Result<Dataset> {
    let magic = be_u32(ib, 0, "IDX image header")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            what: "IDX images",
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let magic = be_u32(lb, 0, "IDX label header")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            what: "IDX labels",
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(ib, 4, "IDX image header")? as usize;
    let rows = be_u32(ib, 8, "IDX image header")? as usize;
    let cols = be_u32(ib, 12, "IDX image header")? as usize;
    let nl = be_u32(lb, 4, "IDX label header")? as usize;
    if n != nl {
        return Err(Error::CountMismatch {
            images: n,
            labels: nl,
        });
    }
    let need = 16 + n * rows * cols;
    if ib.len() != need {
        return Err(Error::Truncated {
            what: "IDX images",
            expected: need,
            found: ib.len(),
        });
    }
    if lb.len() != 8 + n {
        return Err(Error::Truncated {
            what: "IDX labels",
            expected: 8 + n,
            found: lb.len(),
        });
    }
    let data = ib[16..].iter().map(|&p| p as f32 / 255.0).collect();
    let images = Tensor::from_vec(Shape::new(n, 1, rows, cols), data)?;
    let labels: Vec<usize> = lb[8..].iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(images, labels, classes)
}

/// Writes an IDX image/label pair (`pixels` row-major, `n * rows * cols`).
pub fn write_idx(
    images: &Path,
    labels: &Path,
    rows: usize,
    cols: usize,
    pixels: &[u8],
    label_bytes: &[u8],
) -> Result<()> {
    let n = label_bytes.len();
    if pixels.len() != n * rows * cols {
        return Err(Error::CountMismatch {
            images: pixels.len() / (rows * cols).max(1),
            labels: n,
        });
    }
    let mut ib = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        ib.extend_from_slice(&v.to_be_bytes());
    }
    ib.extend_from_slice(pixels);
    let mut lb = Vec::with_capacity(8 + n);
    for v in [IDX_LABELS_MAGIC, n as u32] {
        lb.extend_from_slice(&v.to_be_bytes());
    }
    lb.extend_from_slice(label_bytes);
    fs::write(images, ib)?;
    fs::write(labels, lb)?;
    Ok(())
}

/// Concatenates CIFAR-10 binary batch files (label byte + R, G, B planes).
pub fn load_cifar10(files: &[PathBuf]) -> Result<Dataset> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for f in files {
        let bytes = read_file(f)?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
            return Err(Error::Format(format!(
                "{}: {} bytes is not a whole number of {CIFAR_RECORD}-byte records",
                f.display(),
                bytes.len()
            )));
        }
        for rec in bytes.chunks_exact(CIFAR_RECORD) {
            if rec[0] > 9 {
                return Err(Error::Format(format!(
                    "{}: label byte {}",
                    f.display(),
                    rec[0]
                )));
            }
            labels.push(rec[0] as usize);
            pixels.extend(rec[1..].iter().map(|&p| p as f32 / 255.0));
        }
    }
    let images = Tensor::from_vec(Shape::new(labels.len(), 3, 32, 32), pixels)?;
    Dataset::new(images, labels, 10)
}

pub fn write_cifar10(path: &Path, labels: &[u8], pixels: &[u8]) -> Result<()> {
    if pixels.len() != labels.len() * (CIFAR_RECORD - 1) {
        return Err(Error::Format(
            "pixel buffer does not match record count".into(),
        ));
    }
    let mut out = Vec::with_capacity(labels.len() * CIFAR_RECORD);
    for (i, &l) in labels.iter().enumerate() {
        out.push(l);
        out.extend_from_slice(&pixels[i * (CIFAR_RECORD - 1)..(i + 1) * (CIFAR_RECORD - 1)]);
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetName {
    Mnist,
    Fashion,
    Cifar10,
}

impl DatasetName {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::Fashion => "fashion",
            DatasetName::Cifar10 => "cifar10",
        }
    }

    pub fn channels(self) -> usize {
        match self {
            DatasetName::Cifar10 => 3,
            _ => 1,
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetName::Mnist),
            "fashion" | "fashion-mnist" => Ok(DatasetName::Fashion),
            "cifar10" | "cifar-10" => Ok(DatasetName::Cifar10),
            _ => Err(Error::Usage(format!(
                "unknown dataset `{s}` (mnist, fashion, cifar10)"
            ))),
        }
    }
}

/// `$WCC_DATA_DIR`, else `./data`.
pub fn data_root() -> PathBuf {
    std::env::var_os("WCC_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Loads a split from `root/<name>/`: IDX files named as the official
/// MNIST distribution, or `data_batch_{1..5}.bin` / `test_batch.bin`.
pub fn load_split(name: DatasetName, root: &Path, train: bool) -> Result<Dataset> {
    let dir = root.join(name.as_str());
    let mut d = match name {
        DatasetName::Mnist | DatasetName::Fashion => {
            let prefix = if train { "train" } else { "t10k" };
            load_idx(
                &dir.join(format!("{prefix}-images-idx3-ubyte")),
                &dir.join(format!("{prefix}-labels-idx1-ubyte")),
            )?
        }
        DatasetName::Cifar10 => {
            let files: Vec<PathBuf> = if train {
                (1..=5)
                    .map(|i| dir.join(format!("data_batch_{i}.bin")))
                    .collect()
            } else {
                vec![dir.join("test_batch.bin")]
            };
            load_cifar10(&files)?
        }
    };
    d.num_classes = 10;
    if let Some(&l) = d.labels.iter().find(|&&l| l >= 10) {
        return Err(Error::Format(format!("label {l} outside 10 classes")));
    }
    Ok(d)
}
