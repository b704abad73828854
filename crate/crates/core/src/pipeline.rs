//! Secure analysis pipelines: decomposed and traditional variants of PCA,
//! SVD and factor analysis.
//!
//! Decomposed variants never share raw rows. Each party folds its stream
//! into constant-size aggregates (column sums, row count, Gram blocks) and
//! only those enter the protocol, so traffic and live share memory depend
//! on the column count, not the row count. The traditional variants secret
//! share every row up front and run the whole computation inside the
//! protocol; their cost grows linearly with the pooled row count. In
//! traditional mode the per-party row counts are public (they size the
//! shared input tensors); decomposed mode keeps them secret.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::channel::PartyChannel;
use crate::eigen::{power_iteration, shift_power_iteration, IterParams};
use crate::engine::{MpcEngine, MpcError};
use crate::ingest::Accumulator;
use crate::linalg::Matrix;
use crate::tensor::ShareTensor;
use crate::triple::TripleSource;

/// Public protocol parameters, identical on every party.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Magnitude bound on every raw data value.
    pub max_abs: f64,
    /// Public cap on the pooled row count.
    pub max_total_rows: u64,
    /// Power iteration rounds per eigenpair.
    pub power_iterations: u32,
    /// Shift power iteration rounds per eigenpair (factor analysis).
    pub shift_iterations: u32,
    /// Newton rounds per inverse square root.
    pub newton_rounds: u32,
    /// Bound on the largest covariance eigenvalue.
    pub spectral_bound: f64,
    /// Floor on the smallest covariance/correlation eigenvalue. Spectra
    /// below this floor make normalisation overflow the ring headroom.
    pub spectral_floor: f64,
    /// Bound on the largest eigenvalue of the rescaled Gram matrix.
    pub gram_bound: f64,
    /// Floor on the smallest eigenvalue of the rescaled Gram matrix.
    pub gram_floor: f64,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        PipelineConfig {
            max_abs: 10.0,
            max_total_rows: 2048,
            power_iterations: 50,
            shift_iterations: 300,
            newton_rounds: 26,
            spectral_bound: 16.0,
            spectral_floor: 0.05,
            gram_bound: 64.0,
            gram_floor: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// Pooled column averages, 1 x d.
    pub total_avg: Matrix,
    /// Covariance eigenvalues, descending.
    pub eigenvalue_array: Vec<f64>,
    /// One unit eigenvector per column.
    pub eigenvector_matrix: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvdModel {
    /// Nonnegative, nonincreasing.
    pub singular_value: Vec<f64>,
    /// One right singular vector per column.
    pub right_singular_matrix: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaModel {
    /// Correlation eigenvalues, descending; they sum to d.
    pub principal_factors: Vec<f64>,
    /// Entry (i, j) is eigenvector-matrix entry (i, j) scaled by the square
    /// root of principal factor i.
    pub factor_loading_matrix: Matrix,
}

fn ceil_log2(n: u64) -> u32 {
    let mut k = 0;
    while (1u64 << k) < n {
        k += 1;
    }
    k
}

/// Shares `mine` from every party and returns the shared sum.
fn input_sum<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    rows: usize,
    cols: usize,
    mine: &Matrix,
) -> Result<ShareTensor, MpcError> {
    let me = eng.party();
    let mut acc: Option<ShareTensor> = None;
    for owner in 0..eng.parties() {
        let part = eng.input(owner, rows, cols, if owner == me { Some(mine) } else { None })?;
        acc = Some(match acc {
            None => part,
            Some(prev) => eng.add(&prev, &part)?,
        });
    }
    Ok(acc.expect("at least two parties"))
}

fn spectral_params(cfg: &PipelineConfig, bound: f64, floor: f64, iterations: u32) -> IterParams {
    IterParams {
        iterations,
        nrm2_bound: bound * bound,
        nrm2_floor: floor * floor,
        newton_rounds: cfg.newton_rounds,
    }
}

/// First revealed sub-task of PCA and FA: pooled column averages.
///
/// Each party contributes its column sums and row count in one shared
/// vector; the pooled count stays shared, and the averages are formed as
/// S * (1/sqrt(T))^2 so no tiny reciprocal is ever materialised at fixed
/// point. Returns the shared count and the revealed averages.
fn total_average<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    acc: &Accumulator,
    cfg: &PipelineConfig,
) -> Result<(ShareTensor, Matrix), MpcError> {
    let d = acc.dim();
    let mut mine = Matrix::zeros(1, d + 1);
    let sums = acc.column_sum();
    for j in 0..d {
        mine.set(0, j, sums.get(0, j));
    }
    mine.set(0, d, acc.total_lines() as f64);
    let pooled = input_sum(eng, 1, d + 1, &mine)?;
    let s = ShareTensor::new(1, d, pooled.data[..d].to_vec());
    let count = ShareTensor::new(1, 1, alloc::vec![pooled.data[d]]);
    let rows_bound = cfg.max_total_rows as f64;
    let y = eng.inv_sqrt_bounded(&count, rows_bound, 2.0, cfg.newton_rounds)?;
    let partial = eng.mul_scalar(&y, &s)?;
    let avg = eng.mul_scalar(&y, &partial)?;
    let avg_mat = eng.reveal_group("total_avg", false, &[&avg])?.swap_remove(0);
    Ok((count, avg_mat))
}

/// Pooled covariance from locally centered Gram blocks: sum of blocks
/// divided by T - 1, again via a squared inverse square root.
fn pooled_covariance<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    acc: &Accumulator,
    cfg: &PipelineConfig,
    count: &ShareTensor,
    avg: &Matrix,
) -> Result<ShareTensor, MpcError> {
    let d = acc.dim();
    let centered = acc.centered_gram(avg);
    let pooled = input_sum(eng, d, d, &centered)?;
    let denom = eng.add_public_scalar(count, -1.0)?;
    let y = eng.inv_sqrt_bounded(&denom, cfg.max_total_rows as f64, 1.0, cfg.newton_rounds)?;
    let half = eng.mul_scalar(&y, &pooled)?;
    eng.mul_scalar(&y, &half)
}

fn assemble_spectrum(opened: &[Matrix], d: usize) -> (Vec<f64>, Matrix) {
    let values: Vec<f64> = opened[..d].iter().map(|m| m.get(0, 0)).collect();
    // Opened vector i becomes column i.
    let mut vectors = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            vectors.set(j, i, opened[d + i].get(j, 0));
        }
    }
    (values, vectors)
}

fn reveal_spectrum<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    label: &str,
    irreversible: bool,
    values: &[ShareTensor],
    vectors: &[ShareTensor],
) -> Result<(Vec<f64>, Matrix), MpcError> {
    let refs: Vec<&ShareTensor> = values.iter().chain(vectors.iter()).collect();
    let opened = eng.reveal_group(label, irreversible, &refs)?;
    Ok(assemble_spectrum(&opened, values.len()))
}

/// Decomposed PCA: reveals the pooled averages and the eigen model.
pub fn decomposed_pca<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    acc: &Accumulator,
    cfg: &PipelineConfig,
) -> Result<PcaModel, MpcError> {
    let (count, avg) = total_average(eng, acc, cfg)?;
    let cov = pooled_covariance(eng, acc, cfg, &count, &avg)?;
    let params = spectral_params(cfg, cfg.spectral_bound, cfg.spectral_floor, cfg.power_iterations);
    let (vals, vecs) = power_iteration(eng, &cov, &params, "pca_eigen")?;
    let (eigenvalue_array, eigenvector_matrix) = reveal_spectrum(eng, "eigen", false, &vals, &vecs)?;
    Ok(PcaModel { total_avg: avg, eigenvalue_array, eigenvector_matrix })
}

/// Decomposed SVD: merges raw Gram blocks, rescales by a public power of
/// two to stay inside the ring, and reveals only the irreversible model.
pub fn decomposed_svd<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    acc: &Accumulator,
    cfg: &PipelineConfig,
) -> Result<SvdModel, MpcError> {
    let d = acc.dim();
    let pooled = input_sum(eng, d, d, acc.gram())?;
    let k0 = ceil_log2(cfg.max_total_rows);
    let normalised = eng.trunc(&pooled, k0)?;
    let params = spectral_params(cfg, cfg.gram_bound, cfg.gram_floor, cfg.power_iterations);
    let (vals, vecs) = power_iteration(eng, &normalised, &params, "svd_eigen")?;
    let (eigenvalues, right_singular_matrix) =
        reveal_spectrum(eng, "svd_model", true, &vals, &vecs)?;
    let scale = libm::exp2(k0 as f64 / 2.0);
    let singular_value = eigenvalues
        .iter()
        .map(|&v| libm::sqrt(v.max(0.0)) * scale)
        .collect();
    Ok(SvdModel { singular_value, right_singular_matrix })
}

/// Covariance to correlation, then the two-stage eigensolve and the factor
/// loading columns, all shared until the final irreversible reveal.
fn fa_from_covariance<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    cov: &ShareTensor,
    cfg: &PipelineConfig,
) -> Result<FaModel, MpcError> {
    let d = cov.rows;
    let var_bound = cfg.max_abs * cfg.max_abs;
    let mut inv_sd = Vec::with_capacity(d);
    for i in 0..d {
        let var = ShareTensor::new(1, 1, alloc::vec![cov.get(i, i)]);
        inv_sd.push(eng.inv_sqrt_bounded(
            &var,
            var_bound,
            cfg.spectral_floor,
            cfg.newton_rounds,
        )?);
    }
    let col = ShareTensor::new(d, 1, inv_sd.iter().map(|t| t.data[0]).collect());
    let outer = eng.matmul(&col, &col.transpose())?;
    let corr = eng.mul(cov, &outer)?;
    let params = spectral_params(cfg, d as f64, cfg.spectral_floor, cfg.power_iterations);
    let (coarse, _) = power_iteration(eng, &corr, &params, "fa_power")?;
    let shift_params = spectral_params(cfg, d as f64, cfg.spectral_floor, cfg.shift_iterations);
    let (factors, vectors) = shift_power_iteration(eng, &corr, &coarse, &shift_params, "fa_shift")?;
    // Loading entry (i, j) is eigenvector entry (i, j) times sqrt(pf_i), so
    // every loading column is the row-wise product of the same root vector
    // with that eigenvector.
    let mut roots = Vec::with_capacity(d);
    for factor in &factors {
        roots.push(eng.sqrt(factor, d as f64, cfg.newton_rounds)?);
    }
    let root_col = ShareTensor::new(d, 1, roots.iter().map(|t| t.data[0]).collect());
    let mut loading_cols = Vec::with_capacity(d);
    for vector in &vectors {
        loading_cols.push(eng.mul(&root_col, vector)?);
    }
    let (principal_factors, factor_loading_matrix) =
        reveal_spectrum(eng, "fa_model", true, &factors, &loading_cols)?;
    Ok(FaModel { principal_factors, factor_loading_matrix })
}

/// Decomposed factor analysis: one reversible reveal (the averages), then
/// the irreversible factor model.
pub fn decomposed_fa<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    acc: &Accumulator,
    cfg: &PipelineConfig,
) -> Result<FaModel, MpcError> {
    let (count, avg) = total_average(eng, acc, cfg)?;
    let cov = pooled_covariance(eng, acc, cfg, &count, &avg)?;
    fa_from_covariance(eng, &cov, cfg)
}

/// Shares every row of every party and returns the stacked matrix. Row
/// counts are public in this mode.
fn share_all_rows<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    my_rows: &Matrix,
    row_counts: &[usize],
    dim: usize,
) -> Result<ShareTensor, MpcError> {
    let me = eng.party();
    let mut blocks = Vec::with_capacity(row_counts.len());
    for owner in 0..eng.parties() {
        let rows = row_counts[owner];
        blocks.push(eng.input(owner, rows, dim, if owner == me { Some(my_rows) } else { None })?);
    }
    let refs: Vec<&ShareTensor> = blocks.iter().collect();
    eng.concat_rows(&refs)
}

/// Centers the stacked rows and forms the covariance under the protocol.
/// Returns the shared centered covariance and the shared mean row.
fn shared_row_covariance<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    x: &ShareTensor,
    cfg: &PipelineConfig,
) -> Result<(ShareTensor, ShareTensor), MpcError> {
    let n = x.rows;
    let sums = eng.column_sums(x)?;
    let mean_mag = ceil_log2(libm::ceil(cfg.max_abs) as u64 + 1);
    let mean = eng.scale_public(&sums, 1.0 / n as f64, mean_mag)?;
    let centered = eng.sub_row_broadcast(x, &mean)?;
    let gram = eng.matmul(&centered.transpose(), &centered)?;
    let cov_mag = ceil_log2(libm::ceil(cfg.max_abs * cfg.max_abs) as u64 + 1);
    let cov = eng.scale_public(&gram, 1.0 / (n as f64 - 1.0), cov_mag)?;
    Ok((cov, mean))
}

/// Traditional PCA baseline: every row is shared, centering, covariance and
/// the eigensolve all run under the protocol, and the model is revealed in
/// one group at the end.
pub fn traditional_pca<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    my_rows: &Matrix,
    row_counts: &[usize],
    dim: usize,
    cfg: &PipelineConfig,
) -> Result<PcaModel, MpcError> {
    let x = share_all_rows(eng, my_rows, row_counts, dim)?;
    let (cov, mean) = shared_row_covariance(eng, &x, cfg)?;
    let params = spectral_params(cfg, cfg.spectral_bound, cfg.spectral_floor, cfg.power_iterations);
    let (vals, vecs) = power_iteration(eng, &cov, &params, "pca_eigen")?;
    let mut refs: Vec<&ShareTensor> = alloc::vec![&mean];
    refs.extend(vals.iter());
    refs.extend(vecs.iter());
    let opened = eng.reveal_group("pca_model", false, &refs)?;
    let mean_mat = opened[0].clone();
    let (eigenvalue_array, eigenvector_matrix) = assemble_spectrum(&opened[1..], dim);
    Ok(PcaModel { total_avg: mean_mat, eigenvalue_array, eigenvector_matrix })
}

/// Traditional SVD baseline over fully shared rows.
pub fn traditional_svd<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    my_rows: &Matrix,
    row_counts: &[usize],
    dim: usize,
    cfg: &PipelineConfig,
) -> Result<SvdModel, MpcError> {
    let x = share_all_rows(eng, my_rows, row_counts, dim)?;
    let gram = eng.matmul(&x.transpose(), &x)?;
    let k0 = ceil_log2(cfg.max_total_rows);
    let normalised = eng.trunc(&gram, k0)?;
    let params = spectral_params(cfg, cfg.gram_bound, cfg.gram_floor, cfg.power_iterations);
    let (vals, vecs) = power_iteration(eng, &normalised, &params, "svd_eigen")?;
    let (eigenvalues, right_singular_matrix) =
        reveal_spectrum(eng, "svd_model", true, &vals, &vecs)?;
    let scale = libm::exp2(k0 as f64 / 2.0);
    let singular_value = eigenvalues
        .iter()
        .map(|&v| libm::sqrt(v.max(0.0)) * scale)
        .collect();
    Ok(SvdModel { singular_value, right_singular_matrix })
}

/// Traditional factor analysis baseline over fully shared rows.
pub fn traditional_fa<C: PartyChannel, T: TripleSource>(
    eng: &mut MpcEngine<C, T>,
    my_rows: &Matrix,
    row_counts: &[usize],
    dim: usize,
    cfg: &PipelineConfig,
) -> Result<FaModel, MpcError> {
    let x = share_all_rows(eng, my_rows, row_counts, dim)?;
    let (cov, _mean) = shared_row_covariance(eng, &x, cfg)?;
    fa_from_covariance(eng, &cov, cfg)
}

/// Projects plaintext rows onto the first `k` principal components.
pub fn project_pca(model: &PcaModel, data: &Matrix, k: usize) -> Matrix {
    let k = k.min(model.eigenvector_matrix.cols);
    let mut out = Matrix::zeros(data.rows, k);
    for r in 0..data.rows {
        for c in 0..k {
            let mut acc = 0.0;
            for j in 0..data.cols {
                acc += (data.get(r, j) - model.total_avg.get(0, j))
                    * model.eigenvector_matrix.get(j, c);
            }
            out.set(r, c, acc);
        }
    }
    out
}

/// Projects plaintext rows onto the first `k` right singular directions.
pub fn project_svd(model: &SvdModel, data: &Matrix, k: usize) -> Matrix {
    let k = k.min(model.right_singular_matrix.cols);
    let mut out = Matrix::zeros(data.rows, k);
    for r in 0..data.rows {
        for c in 0..k {
            let mut acc = 0.0;
            for j in 0..data.cols {
                acc += data.get(r, j) * model.right_singular_matrix.get(j, c);
            }
            out.set(r, c, acc);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_matches_shipped_protocol() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.power_iterations, 50);
        assert_eq!(cfg.shift_iterations, 300);
        assert_eq!(cfg.max_abs, 10.0);
        assert!(cfg.spectral_floor > 0.0);
    }

    #[test]
    fn pca_projection_centers_data() {
        let model = PcaModel {
            total_avg: Matrix::from_rows(&[&[1.0, 2.0]]),
            eigenvalue_array: alloc::vec![2.0, 0.5],
            eigenvector_matrix: Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]),
        };
        let data = Matrix::from_rows(&[&[2.0, 5.0], &[1.0, 2.0]]);
        let proj = project_pca(&model, &data, 2);
        assert_eq!(proj.row(0), &[1.0, 3.0]);
        assert_eq!(proj.row(1), &[0.0, 0.0]);
        // k larger than the model rank is clamped.
        assert_eq!(project_pca(&model, &data, 9).cols, 2);
    }

    #[test]
    fn svd_projection_is_plain_product() {
        // Columns are the singular directions.
        let model = SvdModel {
            singular_value: alloc::vec![3.0, 1.0],
            right_singular_matrix: Matrix::from_rows(&[&[0.6, -0.8], &[0.8, 0.6]]),
        };
        let data = Matrix::from_rows(&[&[1.0, 1.0]]);
        let proj = project_svd(&model, &data, 1);
        assert!((proj.get(0, 0) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn models_round_trip_through_json() {
        let model = FaModel {
            principal_factors: alloc::vec![1.25, 0.75],
            factor_loading_matrix: Matrix::from_rows(&[&[0.9, 0.1], &[-0.2, 0.8]]),
        };
        let json = serde_json::to_string(&model).unwrap();
        let back: FaModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
    }
}
