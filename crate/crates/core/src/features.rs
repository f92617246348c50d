//! Feature maps behind one trait, dataset-wide extraction and the feature
//! matrix storage consumed by the readout.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::os::unix::fs::FileExt;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::encoding::{qrf_features_fast, qrfrff_features, EncodingParams, RffLikeParams};
use crate::error::{Error, Result};
use crate::ising::{qdrf_features, Propagator};
use crate::permutation::PermutationSpec;
use crate::rff::{rff_features_into, RffParams};

pub trait FeatureMap: Send + Sync {
    fn input_dim(&self) -> usize;
    fn feature_dim(&self) -> usize;
    fn features_into(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.feature_dim()];
        self.features_into(x, &mut out)?;
        Ok(out)
    }
}

fn copy_out(src: Vec<f64>, out: &mut [f64]) -> Result<()> {
    if src.len() != out.len() {
        return Err(Error::dim("feature output", src.len(), out.len()));
    }
    out.copy_from_slice(&src);
    Ok(())
}

/// QRF: phase layers interleaved with one fixed basis permutation.
#[derive(Clone, Debug)]
pub struct QrfModel {
    pub params: EncodingParams,
    pub perm: PermutationSpec,
}

impl FeatureMap for QrfModel {
    fn input_dim(&self) -> usize {
        self.params.input_dim()
    }
    fn feature_dim(&self) -> usize {
        1 << self.params.n_qubits()
    }
    fn features_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        copy_out(qrf_features_fast(x, &self.params, &self.perm)?, out)
    }
}

#[derive(Clone, Debug)]
pub struct QrfRffModel {
    pub params: RffLikeParams,
}

impl FeatureMap for QrfRffModel {
    fn input_dim(&self) -> usize {
        self.params.input_dim()
    }
    fn feature_dim(&self) -> usize {
        1 << self.params.n_qubits()
    }
    fn features_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        copy_out(qrfrff_features(x, &self.params)?, out)
    }
}

#[derive(Clone, Debug)]
pub struct QdrfModel {
    pub params: EncodingParams,
    pub propagator: Propagator,
}

impl FeatureMap for QdrfModel {
    fn input_dim(&self) -> usize {
        self.params.input_dim()
    }
    fn feature_dim(&self) -> usize {
        1 << self.params.n_qubits()
    }
    fn features_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        copy_out(qdrf_features(x, &self.params, &self.propagator)?, out)
    }
}

#[derive(Clone, Debug)]
pub struct RffModel {
    pub params: RffParams,
}

impl FeatureMap for RffModel {
    fn input_dim(&self) -> usize {
        self.params.input_dim()
    }
    fn feature_dim(&self) -> usize {
        self.params.n_features()
    }
    fn features_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        rff_features_into(x, &self.params, out)
    }
}

/// Row-access interface for training data.
pub trait FeatureSource: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn read_row(&self, row: usize, out: &mut [f64]) -> Result<()>;
}

/// Dense `n × N_f` row-major table.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("feature matrix", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

impl FeatureSource for FeatureMatrix {
    fn n_rows(&self) -> usize {
        self.rows
    }
    fn n_cols(&self) -> usize {
        self.cols
    }
    fn read_row(&self, row: usize, out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(self.row(row));
        Ok(())
    }
}

/// Feature rows spilled to an anonymous temporary file as little-endian
/// `f64`, read back with positioned reads.
#[derive(Debug)]
pub struct DiskFeatures {
    rows: usize,
    cols: usize,
    file: File,
    path: PathBuf,
}

impl FeatureSource for DiskFeatures {
    fn n_rows(&self) -> usize {
        self.rows
    }
    fn n_cols(&self) -> usize {
        self.cols
    }
    fn read_row(&self, row: usize, out: &mut [f64]) -> Result<()> {
        let mut bytes = vec![0u8; self.cols * 8];
        self.file
            .read_exact_at(&mut bytes, (row * self.cols * 8) as u64)
            .map_err(|e| Error::io(&self.path, e))?;
        for (o, b) in out.iter_mut().zip(bytes.chunks_exact(8)) {
            *o = f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub enum FeatureStore {
    Memory(FeatureMatrix),
    Disk(DiskFeatures),
}

impl FeatureStore {
    pub fn is_on_disk(&self) -> bool {
        matches!(self, FeatureStore::Disk(_))
    }

    pub fn as_matrix(&self) -> Option<&FeatureMatrix> {
        match self {
            FeatureStore::Memory(m) => Some(m),
            FeatureStore::Disk(_) => None,
        }
    }

    /// Loads every row into memory.
    pub fn to_matrix(&self) -> Result<FeatureMatrix> {
        match self {
            FeatureStore::Memory(m) => Ok(m.clone()),
            FeatureStore::Disk(d) => {
                let mut m = FeatureMatrix::zeros(d.rows, d.cols);
                for i in 0..d.rows {
                    d.read_row(i, m.row_mut(i))?;
                }
                Ok(m)
            }
        }
    }
}

impl FeatureSource for FeatureStore {
    fn n_rows(&self) -> usize {
        match self {
            FeatureStore::Memory(m) => m.n_rows(),
            FeatureStore::Disk(d) => d.n_rows(),
        }
    }
    fn n_cols(&self) -> usize {
        match self {
            FeatureStore::Memory(m) => m.n_cols(),
            FeatureStore::Disk(d) => d.n_cols(),
        }
    }
    fn read_row(&self, row: usize, out: &mut [f64]) -> Result<()> {
        match self {
            FeatureStore::Memory(m) => m.read_row(row, out),
            FeatureStore::Disk(d) => d.read_row(row, out),
        }
    }
}

/// Maps every row of `inputs` (`n × d`, row-major). Rows are independent,
/// so the result does not depend on the rayon pool size.
pub fn extract(map: &dyn FeatureMap, inputs: &[f64], n: usize) -> Result<FeatureMatrix> {
    let d = map.input_dim();
    if inputs.len() != n * d {
        return Err(Error::dim("extract inputs", n * d, inputs.len()));
    }
    let cols = map.feature_dim();
    let mut out = FeatureMatrix::zeros(n, cols);
    if n == 0 {
        return Ok(out);
    }
    out.data
        .par_chunks_mut(cols)
        .zip(inputs.par_chunks(d))
        .try_for_each(|(o, x)| map.features_into(x, o))?;
    Ok(out)
}

/// Like [`extract`], but spills to a temporary file when the matrix would
/// exceed `budget_bytes`. Extraction then proceeds in chunks that each fit
/// the budget.
pub fn extract_to_store(map: &dyn FeatureMap, inputs: &[f64], n: usize, budget_bytes: u64) -> Result<FeatureStore> {
    let cols = map.feature_dim();
    let total = (n as u64) * (cols as u64) * 8;
    if total <= budget_bytes {
        return extract(map, inputs, n).map(FeatureStore::Memory);
    }
    let d = map.input_dim();
    if inputs.len() != n * d {
        return Err(Error::dim("extract inputs", n * d, inputs.len()));
    }
    let dir = std::env::temp_dir();
    let file = tempfile::tempfile_in(&dir).map_err(|e| Error::io(&dir, e))?;
    let chunk_rows = ((budget_bytes / (cols as u64 * 8)).max(1) as usize).min(n);
    let mut writer = BufWriter::new(file.try_clone().map_err(|e| Error::io(&dir, e))?);
    let mut start = 0;
    while start < n {
        let end = (start + chunk_rows).min(n);
        let block = extract(map, &inputs[start * d..end * d], end - start)?;
        for v in block.data() {
            writer.write_all(&v.to_le_bytes()).map_err(|e| Error::io(&dir, e))?;
        }
        start = end;
    }
    writer.flush().map_err(|e| Error::io(&dir, e))?;
    drop(writer);
    log::info!("feature matrix ({n} x {cols}) spilled to disk: {total} bytes over budget {budget_bytes}");
    Ok(FeatureStore::Disk(DiskFeatures {
        rows: n,
        cols,
        file,
        path: dir,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::permutation::PermutationKind;

    #[test]
    fn disk_store_matches_memory() {
        let params = EncodingParams::draw(5, 4, 3, 1.0, 1).unwrap();
        let perm = PermutationSpec::draw(4, PermutationKind::General, 2).unwrap();
        let model = QrfModel { params, perm };
        let inputs: Vec<f64> = (0..35).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let mem = extract(&model, &inputs, 7).unwrap();
        let disk = extract_to_store(&model, &inputs, 7, 16 * 8 * 2).unwrap();
        assert!(disk.is_on_disk());
        assert_eq!(disk.to_matrix().unwrap(), mem);
        let small = extract_to_store(&model, &inputs, 7, 1 << 20).unwrap();
        assert!(!small.is_on_disk());
    }

    #[test]
    fn extract_checks_shape() {
        let model = RffModel {
            params: RffParams::draw(3, 8, 1.0, 0).unwrap(),
        };
        assert!(extract(&model, &[0.0; 7], 3).is_err());
        let m = extract(&model, &[0.0; 9], 3).unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 8));
    }
}
