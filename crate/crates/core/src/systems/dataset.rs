//! Trajectory ensembles and their binary container.
//!
//! Container layout (all integers and floats little-endian):
//!
//! | field    | type            | notes                                   |
//! |----------|-----------------|-----------------------------------------|
//! | magic    | 8 bytes         | `DMKRRDS\0`                             |
//! | version  | u32             | currently 1                             |
//! | n        | u64             | state dimension                         |
//! | T        | u64             | common trajectory length, 0 if ragged   |
//! | J        | u64             | number of trajectories                  |
//! | dt       | f64             | sampling step                           |
//! | tag      | u32 + bytes     | UTF-8 system tag, length-prefixed       |
//! | seed     | u64             | generator seed                          |
//! | lengths  | J x u64         | length of each trajectory               |
//! | payload  | f64             | trajectories in order, column-major     |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binio::{
    expect_end, expect_magic, get_f64, get_f64s, get_len, get_u32, get_u64, put_f64, put_f64s,
    put_u32, put_u64, truncated,
};
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

pub const DATASET_MAGIC: &[u8; 8] = b"DMKRRDS\0";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    trajectories: Vec<Matrix>,
    dt: f64,
    system: String,
    seed: u64,
}

impl TrajectoryDataset {
    pub fn new(
        trajectories: Vec<Matrix>,
        dt: f64,
        system: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        let n = trajectories.first().map_or(0, Matrix::nrows);
        for (k, t) in trajectories.iter().enumerate() {
            if t.nrows() != n {
                return Err(Error::Shape(format!(
                    "trajectory {k} has dimension {}, expected {n}",
                    t.nrows()
                )));
            }
            if let Some(index) = t.first_non_finite_col() {
                return Err(Error::NonFinite {
                    what: "trajectory column",
                    index,
                });
            }
        }
        Ok(Self {
            trajectories,
            dt,
            system: system.into(),
            seed,
        })
    }

    pub fn trajectories(&self) -> &[Matrix] {
        &self.trajectories
    }

    pub fn into_trajectories(self) -> Vec<Matrix> {
        self.trajectories
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn system(&self) -> &str {
        &self.system
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.trajectories.first().map_or(0, Matrix::nrows)
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn total_states(&self) -> usize {
        self.trajectories.iter().map(Matrix::ncols).sum()
    }

    /// Common trajectory length, or `None` for ragged ensembles.
    pub fn common_len(&self) -> Option<usize> {
        let first = self.trajectories.first()?.ncols();
        self.trajectories
            .iter()
            .all(|t| t.ncols() == first)
            .then_some(first)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DATASET_MAGIC)?;
        put_u32(&mut w, DATASET_VERSION)?;
        put_u64(&mut w, self.dim() as u64)?;
        put_u64(&mut w, self.common_len().unwrap_or(0) as u64)?;
        put_u64(&mut w, self.len() as u64)?;
        put_f64(&mut w, self.dt)?;
        let tag = self.system.as_bytes();
        let tag_len =
            u32::try_from(tag.len()).map_err(|_| Error::Format("system tag too long".into()))?;
        put_u32(&mut w, tag_len)?;
        w.write_all(tag)?;
        put_u64(&mut w, self.seed)?;
        for t in &self.trajectories {
            put_u64(&mut w, t.ncols() as u64)?;
        }
        for t in &self.trajectories {
            put_f64s(&mut w, t.as_slice())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        expect_magic(&mut r, DATASET_MAGIC, "trajectory dataset")?;
        let version = get_u32(&mut r)?;
        if version != DATASET_VERSION {
            return Err(Error::Format(format!(
                "unsupported dataset version {version}"
            )));
        }
        let n = get_len(&mut r)?;
        let common = get_len(&mut r)?;
        let count = get_len(&mut r)?;
        let dt = get_f64(&mut r)?;
        let tag_len = get_u32(&mut r)? as usize;
        let mut tag = vec![0u8; tag_len];
        r.read_exact(&mut tag).map_err(truncated)?;
        let system =
            String::from_utf8(tag).map_err(|_| Error::Format("system tag is not UTF-8".into()))?;
        let seed = get_u64(&mut r)?;
        let mut lens = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            lens.push(get_len(&mut r)?);
        }
        if common != 0 && lens.iter().any(|&l| l != common) {
            return Err(Error::Format(
                "length table disagrees with the header".into(),
            ));
        }
        let mut trajectories = Vec::with_capacity(lens.len());
        for len in lens {
            let cells = n
                .checked_mul(len)
                .ok_or_else(|| Error::Format("trajectory size overflows".into()))?;
            trajectories.push(Matrix::from_col_major(n, len, get_f64s(&mut r, cells)?)?);
        }
        expect_end(&mut r)?;
        Self::new(trajectories, dt, system, seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// CSV with columns `trajectory,step,x0,...,x{n-1}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["trajectory".to_string(), "step".to_string()];
        header.extend((0..self.dim()).map(|k| format!("x{k}")));
        w.write_record(&header).map_err(csv_err)?;
        for (j, t) in self.trajectories.iter().enumerate() {
            for (i, c) in t.columns().enumerate() {
                let mut row = vec![j.to_string(), i.to_string()];
                row.extend(c.iter().map(|v| format!("{v:e}")));
                w.write_record(&row).map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}
