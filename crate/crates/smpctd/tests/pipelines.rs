//! Secure pipelines checked against the plaintext reference on pooled data.

use smpctd::data::synthetic_rows;
use smpctd::runner::{run_local, Mode, Model, RunSpec, Task};
use smpctd_core::linalg::Matrix;
use smpctd_core::oracle;

fn concat(parts: &[Matrix]) -> Matrix {
    let cols = parts[0].cols;
    let mut data = Vec::new();
    let mut rows = 0;
    for p in parts {
        data.extend_from_slice(&p.data);
        rows += p.rows;
    }
    Matrix::from_vec(rows, cols, data)
}

fn party_data(seed: u64, m: usize, n: usize, d: usize) -> Vec<Matrix> {
    (0..m)
        .map(|p| synthetic_rows(seed.wrapping_add(p as u64), n, d, 10.0))
        .collect()
}

fn column(m: &Matrix, j: usize) -> Vec<f64> {
    (0..m.rows).map(|i| m.get(i, j)).collect()
}

fn assert_spectrum_close(
    values: &[f64],
    vectors: &Matrix,
    reference: &oracle::Reference,
    value_tol: f64,
    min_cosine: f64,
) {
    let report = oracle::compare(values, vectors, reference);
    assert!(
        report.max_value_error() <= value_tol,
        "value errors {:?}",
        report.value_errors
    );
    assert!(
        report.min_cosine() >= min_cosine,
        "cosines {:?}",
        report.cosines
    );
}

#[test]
fn decomposed_pca_matches_oracle() {
    let data = party_data(101, 2, 200, 6);
    let spec = RunSpec::new(Task::Pca, Mode::Decomposed);
    let runs = run_local(&spec, &data).unwrap();
    let reference = oracle::pca_reference(&concat(&data)).unwrap();
    for run in &runs {
        let model = match &run.model {
            Model::Pca(m) => m,
            _ => unreachable!(),
        };
        for j in 0..6 {
            let avg = model.total_avg.get(0, j);
            let want = reference.mean.as_ref().unwrap().get(0, j);
            assert!((avg - want).abs() < 1e-3, "mean[{j}] {avg} vs {want}");
        }
        assert_spectrum_close(
            &model.eigenvalue_array,
            &model.eigenvector_matrix,
            &reference,
            1e-3,
            0.999,
        );
        // Model invariants: descending values, unit columns.
        for w in model.eigenvalue_array.windows(2) {
            assert!(w[0] >= w[1] - 1e-6);
        }
        for j in 0..6 {
            let norm: f64 = column(&model.eigenvector_matrix, j)
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            assert!((norm - 1.0).abs() <= 1e-3, "column {j} norm {norm}");
        }
    }
    // The reversible reveals are exactly the averages and the eigen model.
    let labels: Vec<_> = runs[0].reveals.iter().map(|r| r.subtask_label.clone()).collect();
    assert_eq!(labels, vec!["total_avg", "eigen"]);
}

#[test]
fn decomposed_svd_matches_oracle() {
    let data = party_data(202, 2, 200, 6);
    let spec = RunSpec::new(Task::Svd, Mode::Decomposed);
    let runs = run_local(&spec, &data).unwrap();
    let reference = oracle::svd_reference(&concat(&data)).unwrap();
    for run in &runs {
        let model = match &run.model {
            Model::Svd(m) => m,
            _ => unreachable!(),
        };
        assert_spectrum_close(
            &model.singular_value,
            &model.right_singular_matrix,
            &reference,
            1e-3,
            0.999,
        );
        for w in model.singular_value.windows(2) {
            assert!(w[0] >= w[1] - 1e-6);
            assert!(w[1] >= 0.0);
        }
    }
    // The only reveal is the irreversible model.
    assert_eq!(runs[0].reveals.len(), 1);
    assert!(runs[0].reveals[0].irreversible);
}

#[test]
fn decomposed_fa_matches_oracle() {
    let data = party_data(303, 2, 200, 6);
    let spec = RunSpec::new(Task::Fa, Mode::Decomposed);
    let runs = run_local(&spec, &data).unwrap();
    let reference = oracle::fa_reference(&concat(&data)).unwrap();
    let ref_loadings = reference.loadings.as_ref().unwrap();
    for run in &runs {
        let model = match &run.model {
            Model::Fa(m) => m,
            _ => unreachable!(),
        };
        for (got, want) in model.principal_factors.iter().zip(&reference.values) {
            assert!(
                (got - want).abs() <= 1e-2 * want.abs().max(1e-6),
                "factor {got} vs {want}"
            );
        }
        let total: f64 = model.principal_factors.iter().sum();
        assert!((total - 6.0).abs() <= 1e-2, "factors sum to {total}");
        // Loadings match columnwise up to sign.
        for j in 0..6 {
            let got = column(&model.factor_loading_matrix, j);
            let want = column(ref_loadings, j);
            let dot: f64 = got.iter().zip(&want).map(|(a, b)| a * b).sum();
            let sign = if dot >= 0.0 { 1.0 } else { -1.0 };
            for i in 0..6 {
                assert!(
                    (got[i] - sign * want[i]).abs() <= 1e-2,
                    "loading[{i}][{j}] {} vs {}",
                    got[i],
                    sign * want[i]
                );
            }
        }
    }
    let labels: Vec<_> = runs[0].reveals.iter().map(|r| r.subtask_label.clone()).collect();
    assert_eq!(labels, vec!["total_avg", "fa_model"]);
}

#[test]
fn traditional_pca_matches_oracle() {
    let data = party_data(404, 2, 40, 6);
    let spec = RunSpec::new(Task::Pca, Mode::Traditional);
    let runs = run_local(&spec, &data).unwrap();
    let reference = oracle::pca_reference(&concat(&data)).unwrap();
    for run in &runs {
        let model = match &run.model {
            Model::Pca(m) => m,
            _ => unreachable!(),
        };
        assert_spectrum_close(
            &model.eigenvalue_array,
            &model.eigenvector_matrix,
            &reference,
            1e-3,
            0.999,
        );
    }
}

#[test]
fn traditional_svd_matches_oracle() {
    let data = party_data(505, 2, 40, 6);
    let spec = RunSpec::new(Task::Svd, Mode::Traditional);
    let runs = run_local(&spec, &data).unwrap();
    let reference = oracle::svd_reference(&concat(&data)).unwrap();
    for run in &runs {
        let model = match &run.model {
            Model::Svd(m) => m,
            _ => unreachable!(),
        };
        assert_spectrum_close(
            &model.singular_value,
            &model.right_singular_matrix,
            &reference,
            1e-3,
            0.999,
        );
    }
}

#[test]
fn traditional_fa_matches_oracle() {
    let data = party_data(606, 2, 40, 6);
    let spec = RunSpec::new(Task::Fa, Mode::Traditional);
    let runs = run_local(&spec, &data).unwrap();
    let reference = oracle::fa_reference(&concat(&data)).unwrap();
    for run in &runs {
        let model = match &run.model {
            Model::Fa(m) => m,
            _ => unreachable!(),
        };
        for (got, want) in model.principal_factors.iter().zip(&reference.values) {
            assert!((got - want).abs() <= 1e-2 * want.abs().max(1e-6));
        }
    }
}

#[test]
fn three_party_decomposed_pca() {
    let data = party_data(707, 3, 120, 4);
    let spec = RunSpec::new(Task::Pca, Mode::Decomposed);
    let runs = run_local(&spec, &data).unwrap();
    let reference = oracle::pca_reference(&concat(&data)).unwrap();
    for run in &runs {
        let model = match &run.model {
            Model::Pca(m) => m,
            _ => unreachable!(),
        };
        assert_spectrum_close(
            &model.eigenvalue_array,
            &model.eigenvector_matrix,
            &reference,
            1e-3,
            0.999,
        );
    }
}

#[test]
fn chunk_size_does_not_change_the_model() {
    let data = party_data(808, 2, 150, 5);
    let mut models = Vec::new();
    for chunk_rows in [1usize, 7, 100, 1000] {
        let mut spec = RunSpec::new(Task::Pca, Mode::Decomposed);
        spec.chunk_rows = chunk_rows;
        let runs = run_local(&spec, &data).unwrap();
        match &runs[0].model {
            Model::Pca(m) => models.push(m.clone()),
            _ => unreachable!(),
        }
    }
    for m in &models[1..] {
        assert_eq!(m.eigenvalue_array, models[0].eigenvalue_array);
        assert_eq!(m.eigenvector_matrix.data, models[0].eigenvector_matrix.data);
        assert_eq!(m.total_avg.data, models[0].total_avg.data);
    }
}

#[test]
fn decomposed_traffic_is_constant_in_rows() {
    let mut seen = Vec::new();
    for n in [100usize, 400] {
        let data = party_data(909, 2, n, 6);
        let spec = RunSpec::new(Task::Pca, Mode::Decomposed);
        let runs = run_local(&spec, &data).unwrap();
        seen.push((
            runs[0].metrics.bytes_sent,
            runs[0].metrics.rounds,
            runs[0].metrics.peak_ring_elements,
        ));
    }
    assert_eq!(seen[0], seen[1]);
}

#[test]
fn traditional_traffic_grows_with_rows() {
    let mut seen = Vec::new();
    for n in [40usize, 80] {
        let data = party_data(910, 2, n, 6);
        let spec = RunSpec::new(Task::Svd, Mode::Traditional);
        let runs = run_local(&spec, &data).unwrap();
        seen.push(runs[0].metrics.bytes_sent);
    }
    assert!(seen[1] > seen[0]);
}
