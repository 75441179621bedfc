use super::*;

fn blobs(n_per: usize, k: usize, dims: usize, sep: f64, seed: u64) -> (FeatureMatrix, Vec<usize>) {
    let mut rng = SeededRng::new(seed);
    let mut v = Vec::new();
    let mut y = Vec::new();
    for i in 0..n_per * k {
        let c = i % k;
        for d in 0..dims {
            let centre = if d % k == c { sep } else { 0.0 };
            v.push(centre + rng.gaussian());
        }
        y.push(c);
    }
    (FeatureMatrix::with_prefix(n_per * k, dims, v, "f").unwrap(), y)
}

fn accuracy(probs: &[f64], y: &[usize], k: usize) -> f64 {
    let hits = probs
        .chunks_exact(k)
        .zip(y)
        .filter(|(p, &t)| {
            let best = (0..k).fold(0, |b, c| if p[c] > p[b] { c } else { b });
            best == t
        })
        .count();
    hits as f64 / y.len() as f64
}

#[test]
fn separable_one_split() {
    let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
    let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
    let x = FeatureMatrix::with_prefix(20, 1, xs, "x").unwrap();
    let cfg = GbdtConfig {
        n_rounds: 1,
        max_depth: 1,
        ..Default::default()
    };
    let m = gbdt_fit(&x, &y, 2, &cfg, &mut SeededRng::new(0)).unwrap();
    for t in &m.trees[0] {
        match &t.root {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 9.5);
            }
            leaf => panic!("expected split, got {leaf:?}"),
        }
    }
    assert_eq!(accuracy(&m.predict_proba(&x).unwrap(), &y, 2), 1.0);
}

#[test]
fn depth_zero_converges_to_priors() {
    let y: Vec<usize> = (0..100).map(|i| if i < 20 { 0 } else if i < 50 { 1 } else { 2 }).collect();
    let x = FeatureMatrix::with_prefix(100, 1, (0..100).map(f64::from).collect(), "x").unwrap();
    let cfg = GbdtConfig {
        n_rounds: 200,
        max_depth: 0,
        ..Default::default()
    };
    let m = gbdt_fit(&x, &y, 3, &cfg, &mut SeededRng::new(0)).unwrap();
    let p = m.predict_proba(&x).unwrap();
    for (c, prior) in [0.2, 0.3, 0.5].iter().enumerate() {
        assert!((p[c] - prior).abs() < 1e-3, "{} vs {prior}", p[c]);
    }
    assert!(m.leaf_counts().iter().all(|&l| l == 1));
    let leaves = m.leaf_indices(&x).unwrap();
    assert!(leaves.ids.iter().all(|&i| i == 0));
}

#[test]
fn training_loss_non_increasing() {
    let (x, y) = blobs(50, 6, 8, 1.5, 4);
    let cfg = GbdtConfig::default();
    let (_, trace) = gbdt_fit_traced(&x, &y, 6, &cfg, &mut SeededRng::new(1)).unwrap();
    assert_eq!(trace.loss.len(), 51);
    for w in trace.loss.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn zero_rounds_uniform() {
    let (x, y) = blobs(5, 4, 3, 1.0, 2);
    let cfg = GbdtConfig {
        n_rounds: 0,
        ..Default::default()
    };
    let m = gbdt_fit(&x, &y, 4, &cfg, &mut SeededRng::new(0)).unwrap();
    assert!(m.predict_proba(&x).unwrap().iter().all(|&p| (p - 0.25).abs() < 1e-15));
}

#[test]
fn proba_rows_sum_to_one_and_separable_fit() {
    let (x, y) = blobs(40, 6, 6, 4.0, 9);
    let m = gbdt_fit(&x, &y, 6, &GbdtConfig::default(), &mut SeededRng::new(0)).unwrap();
    let (xt, _) = blobs(10, 6, 6, 0.0, 77);
    for row in m.predict_proba(&xt).unwrap().chunks_exact(6) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert!(accuracy(&m.predict_proba(&x).unwrap(), &y, 6) >= 0.95);
}

#[test]
fn depth_one_routing_rule() {
    let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
    let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
    let x = FeatureMatrix::with_prefix(20, 1, xs, "x").unwrap();
    let cfg = GbdtConfig {
        n_rounds: 1,
        max_depth: 1,
        ..Default::default()
    };
    let m = gbdt_fit(&x, &y, 2, &cfg, &mut SeededRng::new(0)).unwrap();
    let probe = FeatureMatrix::with_prefix(4, 1, vec![-3.0, 9.49, 9.5, 100.0], "x").unwrap();
    let li = m.leaf_indices(&probe).unwrap();
    assert_eq!(li.ids, vec![0, 0, 0, 0, 1, 1, 1, 1]);
}

#[test]
fn identical_rows_identical_leaves() {
    let (x, y) = blobs(20, 3, 4, 2.0, 5);
    let m = gbdt_fit(&x, &y, 3, &GbdtConfig::default(), &mut SeededRng::new(0)).unwrap();
    let dup = x.select_rows(&[7, 7]);
    let li = m.leaf_indices(&dup).unwrap();
    assert_eq!(li.row(0), li.row(1));
    assert_eq!(li.n_trees, m.n_rounds() * 3);
}

/// Brute-force oracle: every (feature, threshold) candidate from the node's
/// unique values, sums taken directly over the rows.
fn brute_force_split(
    x: &FeatureMatrix,
    g: &[f64],
    h: &[f64],
    cfg: &GbdtConfig,
) -> Option<(usize, f64, f64)> {
    let n = x.rows();
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x.cols() {
        let mut vals = x.column(f);
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = w[0] + (w[1] - w[0]) * 0.5;
            let t = if t > w[0] && t < w[1] { t } else { w[1] };
            let left: Vec<usize> = (0..n).filter(|&i| x.get(i, f) < t).collect();
            if left.len() < cfg.min_samples_leaf || n - left.len() < cfg.min_samples_leaf {
                continue;
            }
            let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                if x.get(i, f) < t {
                    gl += g[i];
                    hl += h[i];
                } else {
                    gr += g[i];
                    hr += h[i];
                }
            }
            let gain = 0.5
                * (gl * gl / (hl + cfg.l2_reg) + gr * gr / (hr + cfg.l2_reg)
                    - (gl + gr).powi(2) / (hl + hr + cfg.l2_reg));
            if gain > 0.0 && best.is_none_or(|b| gain > b.2) {
                best = Some((f, t, gain));
            }
        }
    }
    best
}

#[test]
fn split_search_matches_brute_force() {
    for seed in 0..20 {
        let mut rng = SeededRng::new(seed);
        let n = 20 + rng.below(180);
        let (x, y) = blobs(n / 3, 3, 4, 1.0, seed + 100);
        // gradients/hessians of class 0 under random softmax outputs
        let p: Vec<f64> = y.iter().map(|_| rng.uniform(0.01, 0.99)).collect();
        let g: Vec<f64> = y.iter().zip(&p).map(|(&c, &p)| p - f64::from(u8::from(c == 0))).collect();
        let h: Vec<f64> = p.iter().map(|p| p * (1.0 - p)).collect();
        let cfg = GbdtConfig {
            min_samples_leaf: 1 + rng.below(5),
            ..Default::default()
        };
        let rows: Vec<usize> = (0..x.rows()).collect();
        let fast = find_best_split(&x, &g, &h, &rows, &cfg);
        let slow = brute_force_split(&x, &g, &h, &cfg);
        match (fast, slow) {
            (Some(a), Some((f, t, gain))) => {
                assert_eq!((a.feature, a.threshold), (f, t), "seed {seed}");
                assert!((a.gain - gain).abs() <= 1e-9 * gain.abs().max(1.0));
            }
            (None, None) => {}
            other => panic!("seed {seed}: {other:?}"),
        }
    }
}

#[test]
fn leaf_values_reconstruct_proba() {
    let (x, y) = blobs(30, 4, 5, 1.5, 12);
    let m = gbdt_fit(&x, &y, 4, &GbdtConfig::default(), &mut SeededRng::new(0)).unwrap();
    let li = m.leaf_indices(&x).unwrap();
    let values: Vec<Vec<f64>> = m.iter_trees().map(|(_, _, t)| t.leaf_values()).collect();
    let proba = m.predict_proba(&x).unwrap();
    for r in 0..x.rows() {
        let mut z = m.base_score.clone();
        for (t, &id) in li.row(r).iter().enumerate() {
            z[t % 4] += m.learning_rate * values[t][id];
        }
        let mut p = vec![0.0; 4];
        softmax_into(&z, &mut p);
        for c in 0..4 {
            assert!((p[c] - proba[r * 4 + c]).abs() < 1e-12);
        }
    }
}

#[test]
fn one_hot_block_laws() {
    let (x, y) = blobs(30, 3, 4, 2.0, 3);
    let cfg = GbdtConfig {
        n_rounds: 7,
        ..Default::default()
    };
    let m = gbdt_fit(&x, &y, 3, &cfg, &mut SeededRng::new(0)).unwrap();
    let oh = m.leaf_one_hot(&x).unwrap();
    assert_eq!(oh.cols(), m.leaf_counts().iter().sum::<usize>());
    for row in oh.iter_rows() {
        assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 7 * 3);
        assert_eq!(row.iter().sum::<f64>(), 21.0);
    }

    let single = GbdtConfig {
        n_rounds: 1,
        max_depth: 0,
        ..Default::default()
    };
    let m = gbdt_fit(&x, &y, 3, &single, &mut SeededRng::new(0)).unwrap();
    let oh = m.leaf_one_hot(&x).unwrap();
    assert_eq!(oh.cols(), 3);
    assert!(oh.values().iter().all(|&v| v == 1.0));
}

#[test]
fn deterministic_and_json_roundtrip() {
    let (x, y) = blobs(25, 3, 4, 1.0, 6);
    let a = gbdt_fit(&x, &y, 3, &GbdtConfig::default(), &mut SeededRng::new(0)).unwrap();
    let b = gbdt_fit(&x, &y, 3, &GbdtConfig::default(), &mut SeededRng::new(99)).unwrap();
    assert_eq!(a, b);
    let back = GbdtModel::from_json(&a.to_json()).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.predict_proba(&x).unwrap(), a.predict_proba(&x).unwrap());
}

#[test]
fn subsampling_uses_rng_deterministically() {
    let (x, y) = blobs(25, 3, 4, 1.0, 6);
    let cfg = GbdtConfig {
        n_rounds: 5,
        subsample: 0.7,
        colsample: 0.5,
        ..Default::default()
    };
    let a = gbdt_fit(&x, &y, 3, &cfg, &mut SeededRng::new(1)).unwrap();
    let b = gbdt_fit(&x, &y, 3, &cfg, &mut SeededRng::new(1)).unwrap();
    let c = gbdt_fit(&x, &y, 3, &cfg, &mut SeededRng::new(2)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn input_errors() {
    let (x, y) = blobs(5, 2, 2, 1.0, 1);
    let cfg = GbdtConfig::default();
    assert!(gbdt_fit(&x, &y, 1, &cfg, &mut SeededRng::new(0)).is_err());
    let mut bad = x.clone();
    bad.set(0, 0, f64::NAN);
    assert!(matches!(
        gbdt_fit(&bad, &y, 2, &cfg, &mut SeededRng::new(0)),
        Err(Error::NonFinite(_))
    ));
    let m = gbdt_fit(&x, &y, 2, &cfg, &mut SeededRng::new(0)).unwrap();
    let wide = FeatureMatrix::zeros(2, 3, "z");
    assert!(m.predict_proba(&wide).is_err());
    assert!(m.leaf_indices(&wide).is_err());
}
