//! Datasets: IDX and CSV ingestion plus a seeded Gaussian-blob generator.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// One labelled input with every pixel in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub pixels: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<Example>,
    pub dim: usize,
    pub classes: usize,
}

impl Dataset {
    /// Builds a dataset, checking the shared-dimension, label and pixel-range
    /// invariants.
    pub fn new(name: impl Into<String>, examples: Vec<Example>, dim: usize, classes: usize) -> Result<Self> {
        let name = name.into();
        for (record, ex) in examples.iter().enumerate() {
            if ex.pixels.len() != dim {
                return Err(bad_record(
                    &name,
                    record,
                    format!("has {} features, expected {dim}", ex.pixels.len()),
                ));
            }
            if ex.label >= classes {
                return Err(bad_record(
                    &name,
                    record,
                    format!("label {} >= class count {classes}", ex.label),
                ));
            }
            if let Some((j, v)) = ex.pixels.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(bad_record(&name, record, format!("feature {j} = {v} outside [0,1]")));
            }
        }
        Ok(Dataset {
            name,
            examples,
            dim,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Splits off the first `n` examples; returns `(head, tail)`.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let part = |suffix: &str, ex: &[Example]| Dataset {
            name: format!("{}-{suffix}", self.name),
            examples: ex.to_vec(),
            dim: self.dim,
            classes: self.classes,
        };
        (part("head", &self.examples[..n]), part("tail", &self.examples[n..]))
    }
}

fn bad_record(source: &str, record: usize, reason: String) -> Error {
    Error::BadRecord {
        source_name: source.to_string(),
        record,
        reason,
    }
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Idx {
        images: PathBuf,
        labels: PathBuf,
        classes: usize,
    },
    Csv {
        path: PathBuf,
        classes: usize,
    },
    Blobs(BlobSpec),
}

pub fn load_dataset(source: &DatasetSource) -> Result<Dataset> {
    match source {
        DatasetSource::Idx {
            images,
            labels,
            classes,
        } => load_idx(images, labels, *classes),
        DatasetSource::Csv { path, classes } => load_csv(path, *classes),
        DatasetSource::Blobs(spec) => spec.generate(),
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}

fn check_magic(path: &Path, cur: &mut Cursor<Vec<u8>>, expected: u32) -> Result<()> {
    let found = cur.read_u32::<BigEndian>().map_err(|_| Error::Truncated {
        path: path.into(),
        record: 0,
    })?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.into(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Raw IDX image payload: `(rows, cols, bytes per image)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    let mut cur = Cursor::new(read_file(path)?);
    check_magic(path, &mut cur, IDX_IMAGES_MAGIC)?;
    let mut header = [0u32; 3];
    for h in header.iter_mut() {
        *h = cur.read_u32::<BigEndian>().map_err(|_| Error::Truncated {
            path: path.into(),
            record: 0,
        })?;
    }
    let [count, rows, cols] = header.map(|v| v as usize);
    let mut images = Vec::with_capacity(count);
    for record in 0..count {
        let mut buf = vec![0u8; rows * cols];
        cur.read_exact(&mut buf).map_err(|_| Error::Truncated {
            path: path.into(),
            record,
        })?;
        images.push(buf);
    }
    Ok((rows, cols, images))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let mut cur = Cursor::new(read_file(path)?);
    check_magic(path, &mut cur, IDX_LABELS_MAGIC)?;
    let count = cur.read_u32::<BigEndian>().map_err(|_| Error::Truncated {
        path: path.into(),
        record: 0,
    })? as usize;
    let mut labels = vec![0u8; count];
    for (record, slot) in labels.iter_mut().enumerate() {
        *slot = cur.read_u8().map_err(|_| Error::Truncated {
            path: path.into(),
            record,
        })?;
    }
    Ok(labels)
}

pub fn load_idx(images: &Path, labels: &Path, classes: usize) -> Result<Dataset> {
    let (_, _, raw) = read_idx_images(images)?;
    let lab = read_idx_labels(labels)?;
    if raw.len() != lab.len() {
        return Err(Error::BadRecord {
            source_name: labels.display().to_string(),
            record: raw.len().min(lab.len()),
            reason: format!("{} images but {} labels", raw.len(), lab.len()),
        });
    }
    let dim = raw.first().map_or(0, Vec::len);
    let examples = raw
        .into_iter()
        .zip(lab)
        .map(|(bytes, label)| Example {
            pixels: bytes.into_iter().map(|b| b as f64 / 255.0).collect(),
            label: label as usize,
        })
        .collect();
    let name = images
        .file_stem()
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, examples, dim, classes)
}

pub fn write_idx_images(path: &Path, rows: usize, cols: usize, images: &[Vec<u8>]) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + images.len() * rows * cols);
    buf.write_u32::<BigEndian>(IDX_IMAGES_MAGIC).unwrap();
    for v in [images.len(), rows, cols] {
        buf.write_u32::<BigEndian>(v as u32).unwrap();
    }
    for (record, img) in images.iter().enumerate() {
        if img.len() != rows * cols {
            return Err(bad_record(
                &path.display().to_string(),
                record,
                "wrong image size".into(),
            ));
        }
        buf.extend_from_slice(img);
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 + labels.len());
    buf.write_u32::<BigEndian>(IDX_LABELS_MAGIC).unwrap();
    buf.write_u32::<BigEndian>(labels.len() as u32).unwrap();
    buf.extend_from_slice(labels);
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads `label,f0,...,f{n-1}` with a header row.
pub fn load_csv(path: &Path, classes: usize) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad_record(&source, 0, "missing header".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"label") {
        return Err(bad_record(&source, 0, "header must start with `label`".into()));
    }
    let dim = cols.len() - 1;
    for (j, c) in cols[1..].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(bad_record(
                &source,
                0,
                format!("header column {} is `{c}`, expected `f{j}`", j + 1),
            ));
        }
    }
    let mut examples = Vec::new();
    for (record, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(bad_record(
                &source,
                record,
                format!("{} fields, expected {}", fields.len(), dim + 1),
            ));
        }
        let label = fields[0]
            .parse::<usize>()
            .map_err(|_| bad_record(&source, record, format!("bad label `{}`", fields[0])))?;
        let pixels = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| bad_record(&source, record, format!("bad feature `{f}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        examples.push(Example { pixels, label });
    }
    let name = path
        .file_stem()
        .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, examples, dim, classes)
}

pub fn write_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = Vec::new();
    write!(out, "label").unwrap();
    for j in 0..data.dim {
        write!(out, ",f{j}").unwrap();
    }
    writeln!(out).unwrap();
    for ex in &data.examples {
        write!(out, "{}", ex.label).unwrap();
        for v in &ex.pixels {
            write!(out, ",{v}").unwrap();
        }
        writeln!(out).unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Isotropic Gaussian clusters, one per class, rescaled per coordinate into
/// `[0, 1]` by the min/max over all generated points.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub means: Vec<Vec<f64>>,
    pub per_cluster: usize,
    pub spread: f64,
    pub seed: u64,
}

impl BlobSpec {
    /// `classes` cluster centres drawn uniformly from the unit cube.
    pub fn random_means(classes: usize, dim: usize, per_cluster: usize, spread: f64, seed: u64) -> Self {
        let mut s = rng::derive_stream(seed, &[0xb10b]);
        let means = (0..classes)
            .map(|_| (0..dim).map(|_| s.random::<f64>()).collect())
            .collect();
        BlobSpec {
            means,
            per_cluster,
            spread,
            seed,
        }
    }

    pub fn generate(&self) -> Result<Dataset> {
        let classes = self.means.len();
        if classes == 0 || self.per_cluster == 0 {
            return Err(Error::EmptyDataset);
        }
        let dim = self.means[0].len();
        if self.means.iter().any(|m| m.len() != dim) || dim == 0 {
            return Err(Error::invalid("blob means must share a non-zero dimension"));
        }
        if !(self.spread >= 0.0) {
            return Err(Error::invalid("blob spread must be non-negative"));
        }
        let mut s = rng::derive_stream(self.seed, &[0xda7a]);
        let mut raw = Vec::with_capacity(classes * self.per_cluster);
        for (label, mean) in self.means.iter().enumerate() {
            for _ in 0..self.per_cluster {
                let pixels: Vec<f64> = mean
                    .iter()
                    .map(|m| m + self.spread * s.sample::<f64, _>(StandardNormal))
                    .collect();
                raw.push(Example { pixels, label });
            }
        }
        for j in 0..dim {
            let lo = raw.iter().map(|e| e.pixels[j]).fold(f64::INFINITY, f64::min);
            let hi = raw.iter().map(|e| e.pixels[j]).fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            for e in raw.iter_mut() {
                e.pixels[j] = if span > 0.0 {
                    ((e.pixels[j] - lo) / span).clamp(0.0, 1.0)
                } else {
                    0.5
                };
            }
        }
        Dataset::new(format!("blobs-c{classes}-n{dim}"), raw, dim, classes)
    }
}
