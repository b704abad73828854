//! Engine-level protocol tests over the in-process loopback mesh.

use std::sync::Arc;

use smpctd::transport::{loopback_mesh, LoopbackChannel};
use smpctd_core::engine::{EngineConfig, MpcEngine};
use smpctd_core::linalg::Matrix;
use smpctd_core::triple::SeededTripleSource;

type Engine = MpcEngine<LoopbackChannel, SeededTripleSource>;

/// Runs the same closure as every party and returns all results in party
/// order.
fn with_engines<R, F>(m: usize, seed: u64, f: F) -> Vec<R>
where
    R: Send + 'static,
    F: Fn(&mut Engine) -> R + Send + Sync + 'static,
{
    let f = Arc::new(f);
    let mesh = loopback_mesh(m);
    let mut handles = Vec::new();
    for channel in mesh {
        let f = f.clone();
        let party = smpctd_core::channel::PartyChannel::party_id(&channel);
        handles.push(std::thread::spawn(move || {
            let triples = SeededTripleSource::new(seed ^ 0xabcd, m, party);
            let config = EngineConfig { frac_bits: 20, session_seed: seed };
            let mut eng = MpcEngine::new(channel, triples, config).unwrap();
            f(&mut eng)
        }));
    }
    handles.into_iter().map(|h| h.join().unwrap()).collect()
}

fn grid(r: f64) -> f64 {
    (r * (1u64 << 20) as f64).round() / (1u64 << 20) as f64
}

fn lcg(state: &mut u64) -> f64 {
    *state = state
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    (*state >> 11) as f64 / (1u64 << 53) as f64
}

#[test]
fn share_round_trip_exact() {
    // Grid-aligned values survive share + open bit-exactly.
    for &m in &[2usize, 3] {
        let outs = with_engines(m, 7, move |eng| {
            let secret = Matrix::from_rows(&[&[1.5, -0.25, 3.140625], &[0.0, -8.0, 0.0000019073486328125]]);
            let shared = eng
                .input(1, 2, 3, if eng.party() == 1 { Some(&secret) } else { None })
                .unwrap();
            eng.open(&shared).unwrap()
        });
        for out in outs {
            assert_eq!(out.row(0), &[1.5, -0.25, 3.140625]);
            assert_eq!(out.row(1), &[0.0, -8.0, 2f64.powi(-19)]);
        }
    }
}

#[test]
fn thousand_beaver_muls_within_bound() {
    // 10^3 random products: max abs error at most 2^-18.
    let outs = with_engines(2, 21, |eng| {
        let mut state = 0x5151_u64 + eng.party() as u64 * 0; // same stream everywhere
        let mut worst = 0.0f64;
        for batch in 0..10 {
            let n = 100;
            let mut xs = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                xs.push(grid((lcg(&mut state) - 0.5) * 16.0));
                ys.push(grid((lcg(&mut state) - 0.5) * 16.0));
            }
            let xm = Matrix::from_vec(1, n, xs.clone());
            let ym = Matrix::from_vec(1, n, ys.clone());
            let sx = eng
                .input(0, 1, n, if eng.party() == 0 { Some(&xm) } else { None })
                .unwrap();
            let sy = eng
                .input(1, 1, n, if eng.party() == 1 { Some(&ym) } else { None })
                .unwrap();
            let prod = eng.mul(&sx, &sy).unwrap();
            let opened = eng.open(&prod).unwrap();
            for i in 0..n {
                worst = worst.max((opened.get(0, i) - xs[i] * ys[i]).abs());
            }
            let _ = batch;
        }
        worst
    });
    for worst in outs {
        assert!(worst <= 2f64.powi(-18), "worst error {worst}");
    }
}

#[test]
fn three_party_mul_matches_plain() {
    let outs = with_engines(3, 5, |eng| {
        let a = Matrix::from_rows(&[&[2.5, -1.25]]);
        let b = Matrix::from_rows(&[&[-3.0, 0.5]]);
        let sa = eng.input(0, 1, 2, if eng.party() == 0 { Some(&a) } else { None }).unwrap();
        let sb = eng.input(2, 1, 2, if eng.party() == 2 { Some(&b) } else { None }).unwrap();
        let prod = eng.mul(&sa, &sb).unwrap();
        eng.open(&prod).unwrap()
    });
    for out in outs {
        assert!((out.get(0, 0) + 7.5).abs() < 1e-5);
        assert!((out.get(0, 1) + 0.625).abs() < 1e-5);
    }
}

#[test]
fn matmul_pools_gram_blocks() {
    // Two parties hold the halves of the 4 x 4 matrix with entries 1..16;
    // the pooled Gram matrix has first row [276, 304, 332, 360].
    let outs = with_engines(2, 13, |eng| {
        let me = eng.party();
        let rows: Vec<f64> = if me == 0 {
            (1..=8).map(|k| k as f64).collect()
        } else {
            (9..=16).map(|k| k as f64).collect()
        };
        let block = Matrix::from_vec(2, 4, rows);
        let s0 = eng.input(0, 2, 4, if me == 0 { Some(&block) } else { None }).unwrap();
        let s1 = eng.input(1, 2, 4, if me == 1 { Some(&block) } else { None }).unwrap();
        let x = eng.concat_rows(&[&s0, &s1]).unwrap();
        let gram = eng.matmul(&x.transpose(), &x).unwrap();
        eng.open(&gram).unwrap()
    });
    for out in outs {
        for (j, want) in [276.0, 304.0, 332.0, 360.0].iter().enumerate() {
            assert!((out.get(0, j) - want).abs() < 2e-4, "gram[0][{j}] = {}", out.get(0, j));
        }
    }
}

#[test]
fn inv_sqrt_contract_fifteen_rounds() {
    // Relative error at most 1e-4 over [bound/100, bound] with 15 Newton
    // rounds, for several bounds.
    for &bound in &[1.0f64, 100.0, 2048.0] {
        let outs = with_engines(2, 3, move |eng| {
            let mut worst = 0.0f64;
            for i in 0..40 {
                let x = grid(bound / 100.0 + (bound - bound / 100.0) * i as f64 / 39.0);
                let xin = Matrix::from_rows(&[&[x]]);
                let sx = eng
                    .input(0, 1, 1, if eng.party() == 0 { Some(&xin) } else { None })
                    .unwrap();
                let inv = eng.inv_sqrt(&sx, bound, 15).unwrap();
                let opened = eng.open(&inv).unwrap().get(0, 0);
                let rel = (opened - 1.0 / x.sqrt()).abs() * x.sqrt();
                worst = worst.max(rel);
            }
            worst
        });
        for worst in outs {
            assert!(worst <= 1e-4, "bound {bound}: worst relative error {worst}");
        }
    }
}

#[test]
fn scale_public_and_trunc() {
    let outs = with_engines(3, 17, |eng| {
        let x = Matrix::from_rows(&[&[300.0, -41.5]]);
        let sx = eng.input(1, 1, 2, if eng.party() == 1 { Some(&x) } else { None }).unwrap();
        // Mean over 7 rows, magnitude below 2^6.
        let mean = eng.scale_public(&sx, 1.0 / 7.0, 6).unwrap();
        let quarter = eng.scale_pow2(&sx, -2).unwrap();
        let doubled = eng.scale_pow2(&sx, 1).unwrap();
        (
            eng.open(&mean).unwrap(),
            eng.open(&quarter).unwrap(),
            eng.open(&doubled).unwrap(),
        )
    });
    for (mean, quarter, doubled) in outs {
        assert!((mean.get(0, 0) - 300.0 / 7.0).abs() < 1e-4);
        assert!((mean.get(0, 1) + 41.5 / 7.0).abs() < 1e-4);
        assert!((quarter.get(0, 0) - 75.0).abs() < 1e-5);
        assert_eq!(doubled.get(0, 0), 600.0);
    }
}

#[test]
fn reveal_log_records_groups() {
    let outs = with_engines(2, 29, |eng| {
        let x = Matrix::from_rows(&[&[1.0, 2.0]]);
        let sx = eng.input(0, 1, 2, if eng.party() == 0 { Some(&x) } else { None }).unwrap();
        let sy = eng.add(&sx, &sx).unwrap();
        eng.reveal_group("total_avg", false, &[&sx]).unwrap();
        eng.reveal_group("fa_model", true, &[&sx, &sy]).unwrap();
        eng.reveal_log().to_vec()
    });
    for log in outs {
        assert_eq!(log.len(), 2);
        assert_eq!(log[0].subtask_label, "total_avg");
        assert!(!log[0].irreversible);
        assert_eq!(log[1].subtask_label, "fa_model");
        assert!(log[1].irreversible);
        assert_eq!(log[1].shapes, vec![(1, 2), (1, 2)]);
    }
}

#[test]
fn bytes_sent_equals_bytes_received() {
    // Conservation across the mesh: every sent byte is received.
    let outs = with_engines(3, 31, |eng| {
        let x = Matrix::from_rows(&[&[1.5], &[2.5]]);
        let sx = eng.input(0, 2, 1, if eng.party() == 0 { Some(&x) } else { None }).unwrap();
        let prod = eng.inner(&sx, &sx).unwrap();
        let _ = eng.open(&prod).unwrap();
        let c = eng.channel_mut().counters();
        (c.bytes_sent(), c.bytes_received(), c.rounds())
    });
    let total_sent: u64 = outs.iter().map(|o| o.0).sum();
    let total_received: u64 = outs.iter().map(|o| o.1).sum();
    assert!(total_sent > 0);
    assert_eq!(total_sent, total_received);
    // Every party counts the same number of rounds.
    assert!(outs.windows(2).all(|w| w[0].2 == w[1].2));
}

#[test]
fn peak_gauge_counts_live_shares() {
    let outs = with_engines(2, 37, |eng| {
        let x = Matrix::from_rows(&[&[1.0; 8]]);
        let sx = eng.input(0, 1, 8, if eng.party() == 0 { Some(&x) } else { None }).unwrap();
        let sy = eng.add(&sx, &sx).unwrap();
        drop(sy);
        (eng.gauge().current(), eng.gauge().peak())
    });
    for (current, peak) in outs {
        assert_eq!(current, 8);
        assert!(peak >= 16);
    }
}
