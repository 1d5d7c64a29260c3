//! Dataset acquisition (IDX files, synthetic blobs) and the non-stationary
//! task-stream protocols: permuted inputs, random labels, and chunked
//! splits.
//!
//! Streams are immutable after construction; `next_task(t)` is a pure
//! function of (base dataset, kind, master seed, t), so any task can be
//! replayed at any time.

use crate::error::{Error, Result};
use crate::numkit::{derive_seed, Matrix, Rng};
use std::io::{Read, Write};
use std::path::Path;

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

// Stream tags for deriving independent child seeds.
const TAG_CHUNKS: u64 = 0x43_48_55_4E_4B; // "CHUNK"
const TAG_TASK: u64 = 0x54_41_53_4B; // "TASK"

/// Labelled dataset: `x` is samples x features with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(x: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if x.rows() != labels.len() {
            return Err(Error::CountMismatch {
                images: x.rows(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|l| **l >= num_classes) {
            return Err(Error::invalid(
                "Dataset",
                format!("label {bad} out of range for {num_classes} classes"),
            ));
        }
        Ok(Dataset {
            x,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> usize {
        self.x.cols()
    }

    /// Rows of the dataset selected by `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let x = Matrix::from_fn(indices.len(), self.features(), |r, c| {
            self.x.get(indices[r], c)
        });
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset {
            x,
            labels,
            num_classes: self.num_classes,
        }
    }
}

// ---- IDX files --------------------------------------------------------

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Ok(bytes)
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    if at + 4 > bytes.len() {
        return Err(Error::Truncated {
            path: path.display().to_string(),
            needed: at + 4,
            found: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap()))
}

/// Parse an IDX image/label pair. Big-endian headers; image magic 2051,
/// label magic 2049. Pixels are scaled to `[0, 1]` by dividing by 255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img = read_file(images_path)?;
    let magic = be_u32(&img, 0, images_path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::BadMagic {
            path: images_path.display().to_string(),
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(&img, 4, images_path)? as usize;
    let rows = be_u32(&img, 8, images_path)? as usize;
    let cols = be_u32(&img, 12, images_path)? as usize;
    let features = rows * cols;
    let pixel_bytes = n * features;
    if img.len() < 16 + pixel_bytes {
        return Err(Error::Truncated {
            path: images_path.display().to_string(),
            needed: 16 + pixel_bytes,
            found: img.len(),
        });
    }

    let lbl = read_file(labels_path)?;
    let magic = be_u32(&lbl, 0, labels_path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::BadMagic {
            path: labels_path.display().to_string(),
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let n_labels = be_u32(&lbl, 4, labels_path)? as usize;
    if n_labels != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: n_labels,
        });
    }
    if lbl.len() < 8 + n {
        return Err(Error::Truncated {
            path: labels_path.display().to_string(),
            needed: 8 + n,
            found: lbl.len(),
        });
    }

    let mut data = Vec::with_capacity(pixel_bytes);
    for &byte in &img[16..16 + pixel_bytes] {
        data.push(byte as f64 / 255.0);
    }
    let x = Matrix::from_vec(n, features, data)?;
    let labels: Vec<usize> = lbl[8..8 + n].iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(x, labels, num_classes)
}

/// Write a dataset as an IDX pair (features become a `d x 1` image per
/// sample; values are quantized to bytes).
pub fn write_idx(ds: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let mut img: Vec<u8> = Vec::with_capacity(16 + ds.len() * ds.features());
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    img.extend_from_slice(&(ds.features() as u32).to_be_bytes());
    img.extend_from_slice(&1u32.to_be_bytes());
    for &v in ds.x.data() {
        img.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    std::fs::File::create(images_path)?.write_all(&img)?;

    let mut lbl: Vec<u8> = Vec::with_capacity(8 + ds.len());
    lbl.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lbl.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    for &l in &ds.labels {
        lbl.push(l as u8);
    }
    std::fs::File::create(labels_path)?.write_all(&lbl)?;
    Ok(())
}

// ---- synthetic data -----------------------------------------------------

/// Gaussian class blobs: each class mean is drawn uniformly from the unit
/// cube, samples get isotropic noise with sigma = 0.5 / separation, and
/// values are clipped to `[0, 1]`. Exists so the full suite runs with zero
/// network access.
pub fn synth_dataset(
    per_class: usize,
    classes: usize,
    features: usize,
    separation: f64,
    rng: &mut Rng,
) -> Result<Dataset> {
    if per_class == 0 || classes == 0 || features == 0 {
        return Err(Error::invalid("synth_dataset", "all counts must be positive"));
    }
    if !(separation > 0.0) {
        return Err(Error::invalid("synth_dataset", "separation must be positive"));
    }
    let sigma = 0.5 / separation;
    let n = per_class * classes;
    let mut data = Vec::with_capacity(n * features);
    let mut labels = Vec::with_capacity(n);
    for class in 0..classes {
        let mean: Vec<f64> = (0..features).map(|_| rng.uniform()).collect();
        for _ in 0..per_class {
            for m in &mean {
                data.push((m + sigma * rng.normal()).clamp(0.0, 1.0));
            }
            labels.push(class);
        }
    }
    Dataset::new(Matrix::from_vec(n, features, data)?, labels, classes)
}

// ---- task streams --------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum StreamKind {
    /// Fresh feature permutation applied uniformly to all samples at each
    /// task.
    PermutedInput,
    /// Labels redrawn uniformly at random each task. With
    /// `exclude_previous` the redraw is forced to differ from the previous
    /// task's label for every sample.
    RandomLabel { exclude_previous: bool },
    /// The base dataset split into `n_chunks` disjoint chunks; task `t` is
    /// chunk `t` alone, or the union of chunks `0..=t` when `retain_past`.
    Chunked { n_chunks: usize, retain_past: bool },
}

/// Deterministic generator of per-task datasets.
#[derive(Debug, Clone)]
pub struct TaskStream {
    kind: StreamKind,
    base: Dataset,
    master_seed: u64,
}

impl TaskStream {
    pub fn new(kind: StreamKind, base: Dataset, master_seed: u64) -> Result<Self> {
        if base.is_empty() {
            return Err(Error::invalid("TaskStream", "base dataset is empty"));
        }
        if let StreamKind::Chunked { n_chunks, .. } = &kind {
            if *n_chunks == 0 || *n_chunks > base.len() {
                return Err(Error::invalid(
                    "TaskStream",
                    format!("{n_chunks} chunks for {} samples", base.len()),
                ));
            }
        }
        Ok(TaskStream {
            kind,
            base,
            master_seed,
        })
    }

    pub fn kind(&self) -> &StreamKind {
        &self.kind
    }

    pub fn base(&self) -> &Dataset {
        &self.base
    }

    fn task_rng(&self, t: usize) -> Rng {
        Rng::new(derive_seed(
            self.master_seed,
            TAG_TASK.wrapping_add((t as u64).wrapping_mul(0x1000_0001)),
        ))
    }

    /// The feature permutation used by task `t` of a permuted-input stream.
    pub fn permutation_for(&self, t: usize) -> Vec<usize> {
        self.task_rng(t).permutation(self.base.features())
    }

    /// Chunk index assignment: a seeded shuffle of the sample indices split
    /// into nearly equal parts (first chunks take the remainder).
    fn chunk_indices(&self, n_chunks: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.base.len()).collect();
        let mut rng = Rng::new(derive_seed(self.master_seed, TAG_CHUNKS));
        rng.shuffle(&mut order);
        let n = self.base.len();
        let base_size = n / n_chunks;
        let remainder = n % n_chunks;
        let mut chunks = Vec::with_capacity(n_chunks);
        let mut at = 0;
        for c in 0..n_chunks {
            let size = base_size + usize::from(c < remainder);
            chunks.push(order[at..at + size].to_vec());
            at += size;
        }
        chunks
    }

    /// Labels of task `t` for a random-label stream. Computed by iterating
    /// the per-task redraws from task 0 so that `exclude_previous` stays a
    /// pure function of `t`.
    fn random_labels_for(&self, t: usize, exclude_previous: bool) -> Vec<usize> {
        let k = self.base.num_classes;
        let mut prev = self.base.labels.clone();
        for task in 0..=t {
            let mut rng = self.task_rng(task);
            let labels: Vec<usize> = if exclude_previous && k > 1 {
                prev.iter()
                    .map(|&old| {
                        let draw = rng.index(k - 1);
                        if draw >= old {
                            draw + 1
                        } else {
                            draw
                        }
                    })
                    .collect()
            } else {
                (0..prev.len()).map(|_| rng.index(k)).collect()
            };
            prev = labels;
            if !exclude_previous {
                // Without the exclusion each task is independent of the
                // previous labels; only the final redraw matters.
                if task == t {
                    return prev;
                }
            }
        }
        prev
    }

    /// Dataset for task `t`. Pure and replayable.
    pub fn next_task(&self, t: usize) -> Result<Dataset> {
        match &self.kind {
            StreamKind::PermutedInput => {
                let perm = self.permutation_for(t);
                let x = Matrix::from_fn(self.base.len(), self.base.features(), |r, c| {
                    self.base.x.get(r, perm[c])
                });
                Dataset::new(x, self.base.labels.clone(), self.base.num_classes)
            }
            StreamKind::RandomLabel { exclude_previous } => {
                let labels = self.random_labels_for(t, *exclude_previous);
                Dataset::new(self.base.x.clone(), labels, self.base.num_classes)
            }
            StreamKind::Chunked {
                n_chunks,
                retain_past,
            } => {
                if t >= *n_chunks {
                    return Err(Error::invalid(
                        "next_task",
                        format!("task {t} out of range for {n_chunks} chunks"),
                    ));
                }
                let chunks = self.chunk_indices(*n_chunks);
                let mut indices = Vec::new();
                if *retain_past {
                    for chunk in &chunks[..=t] {
                        indices.extend_from_slice(chunk);
                    }
                } else {
                    indices.extend_from_slice(&chunks[t]);
                }
                Ok(self.base.subset(&indices))
            }
        }
    }
}
