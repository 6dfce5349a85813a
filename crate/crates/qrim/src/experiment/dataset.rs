//! Snapshot datasets and the `QRDS` file format (version 1, little-endian).
//!
//! A dataset holds, per snapshot, the interfered range-Doppler map, the
//! clean map, and the exact ground-truth peak cells. Maps are stored as
//! 32-bit float re/im pairs in row-major order. Layout: magic `QRDS`,
//! u16 version, u64 generation seed, u32 count, u32 rows, u32 cols, then the
//! records.

use num_complex::{Complex32, Complex64};
use rayon::prelude::*;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiment::config::{mix_seed, DatasetConfig};
use crate::rd::{dft_2d, RdMap, Stage};
use crate::sim::{add_interference, sample_random_scene, synthesize_clean};

pub const MAGIC: &[u8; 4] = b"QRDS";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRecord {
    pub interfered: Vec<Complex32>,
    pub clean: Vec<Complex32>,
    pub truth: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub records: Vec<SnapshotRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Rebuild a record's map as a full-precision range-Doppler map.
    pub fn map_of(&self, record: usize, interfered: bool) -> RdMap {
        let src = if interfered {
            &self.records[record].interfered
        } else {
            &self.records[record].clean
        };
        let data: Vec<Complex64> =
            src.iter().map(|z| Complex64::new(z.re as f64, z.im as f64)).collect();
        RdMap::new(self.rows, self.cols, Stage::RangeDoppler, data).expect("record shape")
    }

    pub fn truth_of(&self, record: usize) -> Vec<(usize, usize)> {
        self.records[record].truth.iter().map(|&(r, c)| (r as usize, c as usize)).collect()
    }
}

/// Stream ids for the three splits (disjoint seed streams).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn stream(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }
}

/// Generate one split. Snapshots are independent; each draws its scene from
/// a seed mixed from (dataset seed, split stream, index).
pub fn generate_split(cfg: &DatasetConfig, split: Split, count: usize) -> Result<Dataset> {
    let records: Result<Vec<SnapshotRecord>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = mix_seed(&[cfg.seed, split.stream(), i as u64]);
            let scene = sample_random_scene(&cfg.scene, seed)?;
            let clean_if = synthesize_clean(&scene)?;
            let interfered_if = add_interference(&clean_if, &scene.interference)?;
            let clean = dft_2d(&clean_if, cfg.window);
            let interfered = dft_2d(&interfered_if, cfg.window);
            let to32 = |m: &RdMap| -> Vec<Complex32> {
                m.data().iter().map(|z| Complex32::new(z.re as f32, z.im as f32)).collect()
            };
            Ok(SnapshotRecord {
                interfered: to32(&interfered),
                clean: to32(&clean),
                truth: scene.truth_cells().iter().map(|&(r, c)| (r as u32, c as u32)).collect(),
            })
        })
        .collect();
    Ok(Dataset { rows: cfg.scene.n_samples, cols: cfg.scene.n_ramps, seed: cfg.seed, records: records? })
}

/// The three splits of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

pub fn generate_all(cfg: &DatasetConfig) -> Result<ExperimentData> {
    Ok(ExperimentData {
        train: generate_split(cfg, Split::Train, cfg.n_train)?,
        val: generate_split(cfg, Split::Val, cfg.n_val)?,
        test: generate_split(cfg, Split::Test, cfg.n_test)?,
    })
}

// ---------------------------------------------------------------------------
// QRDS serialization
// ---------------------------------------------------------------------------

pub fn dataset_to_bytes(ds: &Dataset) -> Vec<u8> {
    let cells = ds.rows * ds.cols;
    let mut buf = Vec::with_capacity(16 + ds.records.len() * (16 * cells + 16));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&ds.seed.to_le_bytes());
    buf.extend_from_slice(&(ds.records.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.rows as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.cols as u32).to_le_bytes());
    for rec in &ds.records {
        for plane in [&rec.interfered, &rec.clean] {
            for z in plane.iter() {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        buf.extend_from_slice(&(rec.truth.len() as u32).to_le_bytes());
        for &(r, c) in &rec.truth {
            buf.extend_from_slice(&r.to_le_bytes());
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    buf
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::Dataset("dataset file truncated".into()));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != MAGIC {
        return Err(Error::Dataset("not a QRDS dataset (bad magic)".into()));
    }
    let version = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Dataset(format!("unsupported dataset version {version}")));
    }
    let seed = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let rows = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let cells = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Dataset("dataset dimensions overflow".into()))?;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let read_plane = |pos: &mut usize| -> Result<Vec<Complex32>> {
            let raw = take(pos, 8 * cells)?;
            let mut out = Vec::with_capacity(cells);
            for chunk in raw.chunks_exact(8) {
                let re = f32::from_le_bytes(chunk[0..4].try_into().unwrap());
                let im = f32::from_le_bytes(chunk[4..8].try_into().unwrap());
                if !re.is_finite() || !im.is_finite() {
                    return Err(Error::Dataset("non-finite map values".into()));
                }
                out.push(Complex32::new(re, im));
            }
            Ok(out)
        };
        let interfered = read_plane(&mut pos)?;
        let clean = read_plane(&mut pos)?;
        let k = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut truth = Vec::with_capacity(k);
        for _ in 0..k {
            let r = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
            let c = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
            if r as usize >= rows || c as usize >= cols {
                return Err(Error::Dataset("ground-truth cell outside the map".into()));
            }
            truth.push((r, c));
        }
        records.push(SnapshotRecord { interfered, clean, truth });
    }
    if pos != bytes.len() {
        return Err(Error::Dataset("trailing bytes after last record".into()));
    }
    Ok(Dataset { rows, cols, seed, records })
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, dataset_to_bytes(ds))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_bytes(&fs::read(path)?)
}

/// Standard file names inside a dataset directory.
pub fn split_path(dir: &Path, split: Split) -> std::path::PathBuf {
    let name = match split {
        Split::Train => "train.qrds",
        Split::Val => "val.qrds",
        Split::Test => "test.qrds",
    };
    dir.join(name)
}

pub fn write_all(data: &ExperimentData, dir: &Path) -> Result<()> {
    write_dataset(&data.train, &split_path(dir, Split::Train))?;
    write_dataset(&data.val, &split_path(dir, Split::Val))?;
    write_dataset(&data.test, &split_path(dir, Split::Test))?;
    Ok(())
}

pub fn read_all(dir: &Path) -> Result<ExperimentData> {
    Ok(ExperimentData {
        train: read_dataset(&split_path(dir, Split::Train))?,
        val: read_dataset(&split_path(dir, Split::Val))?,
        test: read_dataset(&split_path(dir, Split::Test))?,
    })
}
