//! Bit-exact binary snapshots of fitted models and reducers.
//!
//! A snapshot is a model block optionally followed by a reducer block, so a
//! model trained in PCA coordinates carries the map back to full states.
//! Floats are stored as raw little-endian bits and reload identically.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binio::*;
use crate::error::{Error, Result};
use crate::kernels::KernelKind;
use crate::krr::{EstimatorForm, KrrModel};
use crate::matrix::Matrix;
use crate::reduction::PcaReducer;

pub const MODEL_MAGIC: &[u8; 8] = b"DMKRRMDL";
pub const REDUCER_MAGIC: &[u8; 8] = b"DMKRRPCA";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub model: KrrModel,
    pub reducer: Option<PcaReducer>,
}

impl Snapshot {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        write_model(&mut w, &self.model)?;
        match &self.reducer {
            Some(r) => {
                put_u8(&mut w, 1)?;
                write_reducer(&mut w, r)?;
            }
            None => put_u8(&mut w, 0)?,
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let model = read_model(&mut r)?;
        let reducer = match get_u8(&mut r)? {
            0 => None,
            1 => Some(read_reducer(&mut r)?),
            f => return Err(Error::Format(format!("bad reducer flag {f}"))),
        };
        expect_end(&mut r)?;
        if let Some(red) = &reducer {
            if red.rank() != model.dim() {
                return Err(Error::Format(format!(
                    "reducer rank {} does not match model dimension {}",
                    red.rank(),
                    model.dim()
                )));
            }
        }
        Ok(Self { model, reducer })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn kind_code(k: KernelKind) -> u8 {
    match k {
        KernelKind::Rbf => 0,
        KernelKind::Dm => 1,
    }
}

fn form_code(f: EstimatorForm) -> u8 {
    match f {
        EstimatorForm::Direct => 0,
        EstimatorForm::SkipConnection => 1,
    }
}

pub fn write_model<W: Write>(w: &mut W, m: &KrrModel) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    put_u32(w, VERSION)?;
    put_u8(w, kind_code(m.kind()))?;
    put_u8(w, form_code(m.form()))?;
    for v in [
        m.eps(),
        m.lambda_reg(),
        m.dt(),
        m.divergence_bound(),
        m.solve_residual(),
    ] {
        put_f64(w, v)?;
    }
    let (n, count) = m.anchors().shape();
    put_u64(w, n as u64)?;
    put_u64(w, count as u64)?;
    put_f64s(w, m.anchors().as_slice())?;
    put_f64s(w, m.alpha().as_slice())?;
    if let Some(dm) = m.dm_model() {
        put_f64s(w, dm.q())?;
        put_f64s(w, dm.qhat())?;
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<KrrModel> {
    expect_magic(r, MODEL_MAGIC, "model snapshot")?;
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported model version {version}"
        )));
    }
    let kind = match get_u8(r)? {
        0 => KernelKind::Rbf,
        1 => KernelKind::Dm,
        c => return Err(Error::Format(format!("unknown kernel code {c}"))),
    };
    let form = match get_u8(r)? {
        0 => EstimatorForm::Direct,
        1 => EstimatorForm::SkipConnection,
        c => return Err(Error::Format(format!("unknown form code {c}"))),
    };
    let eps = get_f64(r)?;
    let lambda = get_f64(r)?;
    let dt = get_f64(r)?;
    let bound = get_f64(r)?;
    let residual = get_f64(r)?;
    let n = get_len(r)?;
    let count = get_len(r)?;
    let cells = n
        .checked_mul(count)
        .ok_or_else(|| Error::Format("model size overflows".into()))?;
    let anchors = Matrix::from_col_major(n, count, get_f64s(r, cells)?)?;
    let alpha = Matrix::from_col_major(n, count, get_f64s(r, cells)?)?;
    let densities = match kind {
        KernelKind::Rbf => None,
        KernelKind::Dm => Some((get_f64s(r, count)?, get_f64s(r, count)?)),
    };
    KrrModel::from_parts(
        kind, form, eps, lambda, dt, anchors, alpha, densities, bound, residual,
    )
}

pub fn write_reducer<W: Write>(w: &mut W, p: &PcaReducer) -> Result<()> {
    w.write_all(REDUCER_MAGIC)?;
    put_u32(w, VERSION)?;
    put_u64(w, p.dim() as u64)?;
    put_u64(w, p.rank() as u64)?;
    put_f64(w, p.sigma1())?;
    put_f64(w, p.energy())?;
    put_f64s(w, p.mean())?;
    put_f64s(w, p.basis().as_slice())?;
    put_u64(w, p.singular_values().len() as u64)?;
    put_f64s(w, p.singular_values())
}

pub fn read_reducer<R: Read>(r: &mut R) -> Result<PcaReducer> {
    expect_magic(r, REDUCER_MAGIC, "reducer snapshot")?;
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported reducer version {version}"
        )));
    }
    let n = get_len(r)?;
    let rank = get_len(r)?;
    let sigma1 = get_f64(r)?;
    let energy = get_f64(r)?;
    let mean = get_f64s(r, n)?;
    let cells = n
        .checked_mul(rank)
        .ok_or_else(|| Error::Format("reducer size overflows".into()))?;
    let basis = Matrix::from_col_major(n, rank, get_f64s(r, cells)?)?;
    let count = get_len(r)?;
    let svs = get_f64s(r, count)?;
    PcaReducer::from_parts(mean, basis, sigma1, energy, svs)
}
