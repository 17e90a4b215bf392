use gridresponder::env::{EnvConfig, Scenario};
use gridresponder::error::Error;
use gridresponder::fusion::*;
use gridresponder::grid::{CaseId, PowerNetwork};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

#[test]
fn pca_matches_covariance_eigendecomposition() {
    // correlated columns so the leading eigenvalues are well separated
    let base = gaussian(100, 87, 3);
    let mix = gaussian(87, 87, 4);
    let x = &base * mix.map(|v: f64| v * 0.3) + &base;
    let d = 6;
    let p = pca(&x, d).unwrap();

    // oracle: z-score by hand, eigensolve the covariance
    let (n, m) = x.shape();
    let mut z = x.clone();
    for j in 0..m {
        let mean = x.column(j).mean();
        let sd = (x.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        for i in 0..n {
            z[(i, j)] = (x[(i, j)] - mean) / sd;
        }
    }
    let cov = z.transpose() * &z / n as f64;
    let eig = cov.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let trace: f64 = eig.eigenvalues.iter().sum();
    for (k, &i) in order.iter().take(d).enumerate() {
        let v = eig.eigenvectors.column(i);
        let proj = &z * v;
        let got = p.projection.column(k);
        let sign = if (got.dot(&proj)) < 0.0 { -1.0 } else { 1.0 };
        let err = (got - proj * sign).amax();
        assert!(err < 1e-8, "component {k}: max deviation {err:e}");
        assert!((p.explained_ratio[k] - eig.eigenvalues[i] / trace).abs() < 1e-10);
        // sign convention
        let row = p.components.row(k);
        let big = row.iter().copied().fold(0.0f64, |b, v| if v.abs() > b.abs() { v } else { b });
        assert!(big > 0.0);
    }
    for w in p.explained_ratio.windows(2) {
        assert!(w[0] >= w[1]);
    }
}

#[test]
fn isotropic_gaussian_splits_variance_evenly() {
    let x = gaussian(4000, 2, 11);
    let p = pca(&x, 2).unwrap();
    assert!((p.explained_ratio[0] - 0.5).abs() < 0.03, "{:?}", p.explained_ratio);
    assert!((p.explained_ratio.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn tsne_gradient_matches_central_differences() {
    for seed in 0..5u64 {
        let x = gaussian(10, 4, 100 + seed);
        let p = joint_probabilities(&x, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<[f64; 2]> = (0..10).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let (_, g) = kl_and_gradient(&p, &y);
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..10 {
            for k in 0..2 {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[i][k] += h;
                ym[i][k] -= h;
                let fd = (kl_and_gradient(&p, &yp).0 - kl_and_gradient(&p, &ym).0) / (2.0 * h);
                let rel = (fd - g[i][k]).abs() / fd.abs().max(g[i][k].abs()).max(1e-3);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "seed {seed}: relative error {worst:e}");
    }
}

#[test]
fn perplexity_failure_names_the_point() {
    // identical points cap the entropy at ln(N−1) < ln(10)
    let x = DMatrix::from_element(5, 3, 1.0);
    match joint_probabilities(&x, 10.0) {
        Err(Error::Perplexity { point }) => assert_eq!(point, 0),
        other => panic!("expected perplexity error, got {other:?}"),
    }
}

#[test]
fn default_perplexity_caps_at_quarter_n() {
    assert_eq!(effective_perplexity(1000, 30.0), 30.0);
    assert_eq!(effective_perplexity(40, 30.0), 10.0);
}

fn blobs(per: usize, gap: f64, radius: f64, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for c in 0..2 {
        for _ in 0..per {
            let mut p: Vec<f64> = (0..dim).map(|_| { let s: f64 = StandardNormal.sample(&mut rng); radius * s }).collect();
            p[0] += gap * c as f64;
            pts.push(p);
            labels.push(c);
        }
    }
    (pts, labels)
}

/// Exhaustive search over projection angles for a threshold splitting the labels.
fn linearly_separable(points: &[[f64; 2]], labels: &[usize]) -> bool {
    (0..3600).any(|a| {
        let th = a as f64 * std::f64::consts::PI / 1800.0;
        let proj: Vec<f64> = points.iter().map(|p| p[0] * th.cos() + p[1] * th.sin()).collect();
        let max0 = proj.iter().zip(labels).filter(|(_, l)| **l == 0).map(|(v, _)| *v).fold(f64::MIN, f64::max);
        let min1 = proj.iter().zip(labels).filter(|(_, l)| **l == 1).map(|(v, _)| *v).fold(f64::MAX, f64::min);
        max0 < min1
    })
}

#[test]
fn separated_blobs_embed_separably() {
    let (pts, labels) = blobs(10, 20.0, 1.0, 5, 7);
    let x = DMatrix::from_fn(20, 5, |i, j| pts[i][j]);
    let emb = tsne(&x, &TsneOptions::default(), 1).unwrap();
    assert_eq!(emb.points.len(), 20);
    assert!(emb.kl >= 0.0 && emb.kl.is_finite());
    assert!(linearly_separable(&emb.points, &labels));
}

#[test]
fn kl_nonincreasing_after_exaggeration() {
    let (pts, _) = blobs(30, 6.0, 1.0, 8, 9);
    let x = DMatrix::from_fn(60, 8, |i, j| pts[i][j]);
    let opts = TsneOptions::default();
    let emb = tsne(&x, &opts, 5).unwrap();
    assert_eq!(emb.kl_trace.len(), opts.iterations / opts.log_every);
    let late: Vec<f64> = emb.kl_trace.iter().filter(|(it, _)| *it > opts.exaggeration_iters).map(|(_, k)| *k).collect();
    for w in late.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "KL rose from {} to {}", w[0], w[1]);
    }
}

#[test]
fn tsne_is_deterministic_per_seed() {
    let (pts, _) = blobs(10, 5.0, 1.0, 3, 2);
    let x = DMatrix::from_fn(20, 3, |i, j| pts[i][j]);
    let opts = TsneOptions { iterations: 300, ..TsneOptions::default() };
    assert_eq!(tsne(&x, &opts, 4).unwrap(), tsne(&x, &opts, 4).unwrap());
}

#[test]
fn far_blobs_cluster_perfectly() {
    let (pts, labels) = blobs(25, 100.0, 1.0, 2, 13);
    let pts2: Vec<[f64; 2]> = pts.iter().map(|p| [p[0], p[1]]).collect();
    let quiet: Vec<bool> = labels.iter().map(|&l| l == 0).collect();
    let c = cluster_stability(&pts2, 2, &quiet, 3).unwrap();
    for (l, t) in c.labels.iter().zip(&labels) {
        assert_eq!(*l == StabilityLabel::Unstable, *t == 1);
    }
}

#[test]
fn detection_score_fixtures() {
    use StabilityLabel::{Stable as S, Unstable as U};
    let s = detection_scores(&[U, U, U, U, S, S], &[U, U, U, S, U, U]).unwrap();
    assert_eq!((s.tp, s.fp, s.fn_), (3, 1, 2));
    assert!((s.precision - 0.75).abs() < 1e-12);
    assert!((s.recall - 0.6).abs() < 1e-12);
    assert!((s.f1 - 2.0 * 0.45 / 1.35).abs() < 1e-12);
    let s = detection_scores(&[U; 5], &[U; 5]).unwrap();
    assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    let s = detection_scores(&[S; 5], &[U; 5]).unwrap();
    assert_eq!((s.recall, s.f1), (0.0, 0.0));
    assert!(matches!(detection_scores(&[U], &[U, S]), Err(Error::Dimension(_))));
}

proptest! {
    #[test]
    fn detection_scores_permutation_invariant(
        pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..40),
        seed in any::<u64>(),
    ) {
        let lab = |b: bool| if b { StabilityLabel::Unstable } else { StabilityLabel::Stable };
        let pred: Vec<_> = pairs.iter().map(|p| lab(p.0)).collect();
        let truth: Vec<_> = pairs.iter().map(|p| lab(p.1)).collect();
        let mut idx: Vec<usize> = (0..pairs.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        let pp: Vec<_> = idx.iter().map(|&i| pred[i]).collect();
        let tt: Vec<_> = idx.iter().map(|&i| truth[i]).collect();
        prop_assert_eq!(detection_scores(&pred, &truth).unwrap(), detection_scores(&pp, &tt).unwrap());
    }

    #[test]
    fn affinities_sum_to_one(seed in 0u64..1000, n in 8usize..30) {
        let x = gaussian(n, 3, seed);
        let p = joint_probabilities(&x, (n as f64 / 4.0).max(1.5)).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..n {
            prop_assert_eq!(p[i * n + i], 0.0);
            for j in 0..n {
                prop_assert_eq!(p[i * n + j], p[j * n + i]);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
        let (q, _) = output_probabilities(&y);
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tsne_gradient_random_fixtures(seed in 0u64..500) {
        let x = gaussian(8, 3, seed);
        let p = joint_probabilities(&x, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xff);
        let y: Vec<[f64; 2]> = (0..8).map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
        let (_, g) = kl_and_gradient(&p, &y);
        let h = 1e-5;
        for i in 0..8 {
            for k in 0..2 {
                let (mut yp, mut ym) = (y.clone(), y.clone());
                yp[i][k] += h;
                ym[i][k] -= h;
                let fd = (kl_and_gradient(&p, &yp).0 - kl_and_gradient(&p, &ym).0) / (2.0 * h);
                let rel = (fd - g[i][k]).abs() / fd.abs().max(g[i][k].abs()).max(1e-3);
                prop_assert!(rel < 1e-4, "point {} axis {}: fd {} analytic {}", i, k, fd, g[i][k]);
            }
        }
    }
}

fn ieee24() -> PowerNetwork {
    PowerNetwork::builtin(CaseId::Ieee24Augmented)
}

#[test]
fn dataset_csv_round_trip() {
    let frames = generate_dataset(&ieee24(), Scenario::Uc1, 30, 1, &EnvConfig::default()).unwrap();
    assert_eq!(frames.len(), 30);
    assert_eq!(frames.iter().filter(|f| f.label == Some(StabilityLabel::Unstable)).count(), 15);
    assert!(frames.iter().all(|f| f.feature_count() == 87));
    let mut buf = Vec::new();
    write_dataset_csv(&mut buf, &frames).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap().split(',').count(), 90);
    let back = read_dataset_csv(&buf[..]).unwrap();
    assert_eq!(back, frames);
}

#[test]
fn malformed_dataset_rows_are_rejected() {
    let frames = generate_dataset(&ieee24(), Scenario::Uc1, 2, 1, &EnvConfig::default()).unwrap();
    let mut buf = Vec::new();
    write_dataset_csv(&mut buf, &frames).unwrap();
    let bad = String::from_utf8(buf).unwrap().replacen(",stable,", ",sideways,", 1);
    assert!(read_dataset_csv(bad.as_bytes()).is_err());
}

#[test]
fn uc_datasets_separate_perfectly() {
    for scenario in [Scenario::Uc1, Scenario::Uc2] {
        let frames = generate_dataset(&ieee24(), scenario, 200, 17, &EnvConfig::default()).unwrap();
        let report = fuse(&frames, &FuseOptions::default(), 17).unwrap();
        let scores = report.scores.unwrap();
        let (fused, physical) = (report.silhouette_fused.unwrap(), report.silhouette_physical.unwrap());
        println!("{scenario}: F1 {:.4} silhouette fused {fused:.4} physical {physical:.4}", scores.f1);
        assert_eq!(scores.f1, 1.0, "{scenario}: {scores:?}");
        assert!(fused >= physical, "{scenario}: {fused} < {physical}");
    }
}
