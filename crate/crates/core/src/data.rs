//! Datasets and result files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fault::FaultType;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Scale of quantized input pixels: a pixel in [0, 1] maps to [0, 127].
pub const INPUT_SCALE: f64 = 1.0 / 127.0;

/// Quantizes a raw 0..=255 pixel to the int8 input grid.
pub fn quantize_pixel(p: u8) -> i8 {
    (p as f64 / 255.0 / INPUT_SCALE).round_ties_even().clamp(-127.0, 127.0) as i8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DatasetName {
    Mnist,
    FashionMnist,
}

impl DatasetName {
    pub fn code(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::FashionMnist => "fashion",
        }
    }

    /// Subdirectory of the data root holding this dataset's IDX files.
    pub fn dir_name(self) -> &'static str {
        self.code()
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetName::Mnist),
            "fashion" | "fashion-mnist" | "fashionmnist" | "fmnist" => Ok(DatasetName::FashionMnist),
            _ => Err(Error::Argument(format!("unknown dataset {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

/// Images quantized to int8 (one row per image) with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: DatasetName,
    pub images: Array2<i8>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.images.ncols()
    }

    pub fn images(&self) -> ArrayView2<'_, i8> {
        self.images.view()
    }

    /// Dequantized pixels in [0, 1].
    pub fn float_images(&self) -> Array2<f64> {
        self.images.mapv(|q| q as f64 * INPUT_SCALE)
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name,
            images: self.images.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// The first `n` images.
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// `n` distinct images drawn with a fixed seed, kept in dataset order.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n > self.len() {
            return Err(Error::Argument(format!(
                "subset of {n} images requested from {} available",
                self.len()
            )));
        }
        if n == self.len() {
            return Ok(self.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = index::sample(&mut rng, self.len(), n).into_vec();
        idx.sort_unstable();
        Ok(self.select(&idx))
    }
}

fn read_u32_be(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an IDX image/label file pair.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, name: DatasetName) -> Result<Dataset> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let img = read_file(images_path)?;
    let lbl = read_file(labels_path)?;
    let fmt_err = |path: &Path, msg: String| Error::Format(format!("{}: {msg}", path.display()));

    let magic = read_u32_be(&img, 0).ok_or_else(|| fmt_err(images_path, "truncated header".into()))?;
    if magic != IMAGE_MAGIC {
        return Err(fmt_err(images_path, format!("bad image magic {magic:#010x}")));
    }
    let header = |at| read_u32_be(&img, at).ok_or_else(|| fmt_err(images_path, "truncated header".into()));
    let (count, rows, cols) = (header(4)? as usize, header(8)? as usize, header(12)? as usize);
    let pixels = &img[16..];
    if pixels.len() != count * rows * cols {
        return Err(fmt_err(
            images_path,
            format!(
                "header declares {count} images of {rows}x{cols} but {} pixel bytes follow",
                pixels.len()
            ),
        ));
    }

    let magic = read_u32_be(&lbl, 0).ok_or_else(|| fmt_err(labels_path, "truncated header".into()))?;
    if magic != LABEL_MAGIC {
        return Err(fmt_err(labels_path, format!("bad label magic {magic:#010x}")));
    }
    let label_count = read_u32_be(&lbl, 4).ok_or_else(|| fmt_err(labels_path, "truncated header".into()))? as usize;
    let labels = lbl[8..].to_vec();
    if labels.len() != label_count {
        return Err(fmt_err(
            labels_path,
            format!("header declares {label_count} labels but {} follow", labels.len()),
        ));
    }
    if label_count != count {
        return Err(Error::Consistency(format!("{count} images but {label_count} labels")));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 9) {
        return Err(fmt_err(labels_path, format!("label {bad} outside 0..=9")));
    }

    let images = Array2::from_shape_vec(
        (count, rows * cols),
        pixels.iter().map(|&p| quantize_pixel(p)).collect(),
    )
    .map_err(|e| Error::Internal(e.to_string()))?;
    Ok(Dataset { name, images, labels })
}

/// Paths of the standard IDX files under `root/<dataset>/`.
pub fn idx_paths(root: &Path, name: DatasetName, split: Split) -> (PathBuf, PathBuf) {
    let dir = root.join(name.dir_name());
    (
        dir.join(format!("{}-images-idx3-ubyte", split.prefix())),
        dir.join(format!("{}-labels-idx1-ubyte", split.prefix())),
    )
}

pub fn load_split(root: &Path, name: DatasetName, split: Split) -> Result<Dataset> {
    let (images, labels) = idx_paths(root, name, split);
    load_idx(images, labels, name)
}

/// One evaluated grid point, or a fault-free baseline when `fault_type` is
/// `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub dataset: DatasetName,
    pub arch: u8,
    pub multiplier: String,
    pub fault_type: Option<FaultType>,
    pub bit: Option<u8>,
    pub layer: Option<usize>,
    /// Percent correct.
    pub accuracy: f64,
    /// Percentage points lost against the same multiplier's fault-free run.
    pub accuracy_loss: f64,
    pub energy_j: f64,
    pub images: usize,
}

impl SweepResult {
    pub fn is_baseline(&self) -> bool {
        self.fault_type.is_none()
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !(0.0..=100.0).contains(&self.accuracy) {
            return Err(format!("accuracy {} outside [0, 100]", self.accuracy));
        }
        let present = [self.fault_type.is_some(), self.bit.is_some(), self.layer.is_some()];
        if present.iter().any(|&p| p != present[0]) {
            return Err("fault_type, bit and layer must be all present or all empty".into());
        }
        if let Some(bit) = self.bit {
            if !(1..=16).contains(&bit) {
                return Err(format!("bit {bit} outside 1..=16"));
            }
        }
        if self.layer == Some(0) {
            return Err("layer numbers start at 1".into());
        }
        if !matches!(self.arch, 1 | 2) {
            return Err(format!("arch {} is not 1 or 2", self.arch));
        }
        Ok(())
    }
}

pub const RESULTS_HEADER: [&str; 10] = [
    "dataset",
    "arch",
    "multiplier",
    "fault_type",
    "bit",
    "layer",
    "accuracy",
    "accuracy_loss",
    "energy_j",
    "images",
];

const NO_FAULT: &str = "none";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Serializes rows to CSV text with the fixed header.
pub fn results_to_csv(rows: &[SweepResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Internal(e.to_string());
    w.write_record(RESULTS_HEADER).map_err(csv_err)?;
    for r in rows {
        r.check().map_err(Error::Argument)?;
        w.write_record([
            r.dataset.to_string(),
            r.arch.to_string(),
            r.multiplier.clone(),
            r.fault_type.map_or_else(|| NO_FAULT.to_owned(), |t| t.to_string()),
            opt(r.bit),
            opt(r.layer),
            r.accuracy.to_string(),
            r.accuracy_loss.to_string(),
            r.energy_j.to_string(),
            r.images.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Internal(e.to_string()))
}

pub fn write_results(rows: &[SweepResult], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, results_to_csv(rows)?).map_err(|e| Error::io(path, e))
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<SweepResult>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    parse_results(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_results(bytes: &[u8]) -> Result<Vec<SweepResult>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(bytes);
    let mut records = rdr.records();
    match records.next() {
        Some(Ok(h)) if h.iter().eq(RESULTS_HEADER) => {}
        Some(Ok(h)) => {
            return Err(Error::Format(format!(
                "unexpected header {:?}",
                h.iter().collect::<Vec<_>>().join(",")
            )))
        }
        Some(Err(e)) => return Err(Error::Format(e.to_string())),
        None => return Err(Error::Format("empty results file".into())),
    }
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let row_no = i + 1;
        let bad = |msg: String| Error::Format(format!("row {row_no}: {msg}"));
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != RESULTS_HEADER.len() {
            return Err(bad(format!(
                "expected {} fields, found {}",
                RESULTS_HEADER.len(),
                rec.len()
            )));
        }
        fn field<T: FromStr>(rec: &csv::StringRecord, i: usize) -> std::result::Result<T, String> {
            rec[i]
                .parse()
                .map_err(|_| format!("bad {} value {:?}", RESULTS_HEADER[i], &rec[i]))
        }
        fn optional<T: FromStr>(rec: &csv::StringRecord, i: usize) -> std::result::Result<Option<T>, String> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                field(rec, i).map(Some)
            }
        }
        let fault_type = match &rec[3] {
            NO_FAULT => None,
            s => Some(
                s.parse::<FaultType>()
                    .map_err(|_| bad(format!("bad fault_type {s:?}")))?,
            ),
        };
        let row = SweepResult {
            dataset: rec[0].parse().map_err(|_| bad(format!("bad dataset {:?}", &rec[0])))?,
            arch: field(&rec, 1).map_err(bad)?,
            multiplier: rec[2].to_owned(),
            fault_type,
            bit: optional(&rec, 4).map_err(bad)?,
            layer: optional(&rec, 5).map_err(bad)?,
            accuracy: field(&rec, 6).map_err(bad)?,
            accuracy_loss: field(&rec, 7).map_err(bad)?,
            energy_j: field(&rec, 8).map_err(bad)?,
            images: field(&rec, 9).map_err(bad)?,
        };
        row.check().map_err(bad)?;
        rows.push(row);
    }
    Ok(rows)
}
