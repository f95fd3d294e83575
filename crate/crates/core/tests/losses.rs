//! Loss functions checked against scalar brute-force evaluations written
//! directly from the definitions, independent of the tensor kernels.

use proptest::prelude::*;
use rbvsr_core::feature::FeatureExtractor;
use rbvsr_core::losses::*;
use rbvsr_core::Tensor;

fn tensor(c: usize, h: usize, w: usize, data: Vec<f64>) -> Tensor {
    Tensor::from_vec(&[c, h, w], data)
}

fn arb_tensor(c: usize, h: usize, w: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-1.0f64..2.0, c * h * w).prop_map(move |d| tensor(c, h, w, d))
}

fn arb_pair() -> impl Strategy<Value = (Tensor, Tensor)> {
    (1usize..4, 1usize..7, 1usize..7).prop_flat_map(|(c, h, w)| (arb_tensor(c, h, w), arb_tensor(c, h, w)))
}

fn mse_oracle(a: &Tensor, b: &Tensor) -> f64 {
    let (c, h, w) = a.chw();
    let mut s = 0.0;
    for k in 0..c {
        for y in 0..h {
            for x in 0..w {
                let d = a.at3(k, y, x) - b.at3(k, y, x);
                s += d * d;
            }
        }
    }
    s / (w * h * c) as f64
}

fn tv_oracle(t: &Tensor) -> f64 {
    let (c, h, w) = t.chw();
    let mut s = 0.0;
    for k in 0..c {
        for i in 0..h {
            for j in 0..w {
                let p = t.at3(k, i, j);
                let dv = if i + 1 < h { t.at3(k, i + 1, j) - p } else { 0.0 };
                let dh = if j + 1 < w { t.at3(k, i, j + 1) - p } else { 0.0 };
                s += (dv * dv + dh * dh).sqrt();
            }
        }
    }
    s / (w * h) as f64
}

/// Naive feature pass of the tiny extractor read straight from its named
/// parameters: 3×3 same convolutions, ReLU, 2×2 max pooling.
fn features_oracle(fx: &FeatureExtractor, input: &Tensor) -> Tensor {
    let FeatureExtractor::Conv(ex) = fx else { panic!("expected conv extractor") };
    let cfg = ex.config();
    let (sel_i, sel_j) = cfg.layer_selector;
    let named = ex.params().to_named();
    let mut x = input.clone();
    for si in 1..=sel_i {
        let depth = if si == sel_i { sel_j } else { cfg.stages[si - 1].len() };
        for ci in 1..=depth {
            let wt = &named[&format!("stage{si}.conv{ci}.weight")];
            let bs = &named[&format!("stage{si}.conv{ci}.bias")];
            let (cin, h, w) = x.chw();
            let cout = wt.shape()[0];
            let mut out = Tensor::zeros(&[cout, h, w]);
            for o in 0..cout {
                for y in 0..h {
                    for xx in 0..w {
                        let mut s = bs.data()[o];
                        for i in 0..cin {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let (iy, ix) = (y as isize + ky as isize - 1, xx as isize + kx as isize - 1);
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        let wv = wt.data()[((o * cin + i) * 3 + ky) * 3 + kx];
                                        s += wv * x.at3(i, iy as usize, ix as usize);
                                    }
                                }
                            }
                        }
                        out.set3(o, y, xx, s.max(0.0));
                    }
                }
            }
            x = out;
        }
        if si < sel_i {
            let (c, h, w) = x.chw();
            let mut p = Tensor::zeros(&[c, h / 2, w / 2]);
            for k in 0..c {
                for y in 0..h / 2 {
                    for xx in 0..w / 2 {
                        let m = [(0, 0), (0, 1), (1, 0), (1, 1)]
                            .iter()
                            .map(|(dy, dx)| x.at3(k, 2 * y + dy, 2 * xx + dx))
                            .fold(f64::NEG_INFINITY, f64::max);
                        p.set3(k, y, xx, m);
                    }
                }
            }
            x = p;
        }
    }
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mse_matches_oracle((a, b) in arb_pair()) {
        let got = mse_loss(&a, &b).unwrap();
        prop_assert!((got - mse_oracle(&a, &b)).abs() <= 1e-12);
    }

    #[test]
    fn l1_matches_oracle((a, b) in arb_pair()) {
        let want: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
        prop_assert!((l1_loss(&a, &b).unwrap() - want).abs() <= 1e-12);
    }

    #[test]
    fn tv_matches_oracle(t in (1usize..4, 1usize..7, 1usize..7).prop_flat_map(|(c, h, w)| arb_tensor(c, h, w))) {
        let got = tv_loss(&t);
        prop_assert!((got - tv_oracle(&t)).abs() <= 1e-12);
        prop_assert!(got >= 0.0);
    }

    #[test]
    fn tv_shift_invariant(t in arb_tensor(3, 5, 5), c in -3.0f64..3.0) {
        prop_assert!((tv_loss(&t) - tv_loss(&t.map(|v| v + c))).abs() <= 1e-12);
    }

    #[test]
    fn tv_transpose_symmetric(d in prop::collection::vec(-1.0f64..1.0, 36)) {
        let t = tensor(1, 6, 6, d);
        let mut tt = Tensor::zeros(&[1, 6, 6]);
        for y in 0..6 {
            for x in 0..6 {
                tt.set3(0, x, y, t.at3(0, y, x));
            }
        }
        prop_assert!((tv_loss(&t) - tv_loss(&tt)).abs() <= 1e-12);
    }

    #[test]
    fn perceptual_identity_extractor_is_mse((a, b) in arb_pair()) {
        prop_assert_eq!(perceptual_loss(&a, &b, &FeatureExtractor::Identity).unwrap(), mse_loss(&a, &b).unwrap());
    }

    #[test]
    fn adversarial_matches_oracle(p in 0.0f64..=1.0) {
        let want = -(p.clamp(1e-7, 1.0 - 1e-7)).ln();
        prop_assert!((adversarial_loss(p) - want).abs() <= 1e-9);
        prop_assert!(adversarial_loss(p) >= 0.0);
    }

    #[test]
    fn discriminator_matches_oracle(a in 1e-6f64..1.0, b in 1e-6f64..1.0) {
        let l = discriminator_loss(a, b);
        prop_assert!((l - (1.0 - a + b)).abs() <= 1e-15);
        prop_assert!(l > 0.0 && l < 2.0);
    }

    #[test]
    fn sequence_matches_oracle(v in prop::collection::vec(-10.0f64..10.0, 1..20)) {
        let mut s = 0.0;
        for x in &v {
            s += x;
        }
        prop_assert!((sequence_loss(&v).unwrap() - s / v.len() as f64).abs() <= 1e-9);
    }

    #[test]
    fn total_is_weighted_sum(
        mse in 0.0f64..10.0, perc in 0.0f64..10.0, adv in 0.0f64..20.0, tv in 0.0f64..1e4,
    ) {
        let w = LossWeights::default();
        let b = LossBreakdown::weighted(0.0, mse, perc, adv, tv, &w);
        let want = 1.0 * mse + 6e-3 * perc + 1e-3 * adv + 2e-8 * tv;
        prop_assert!((b.total - want).abs() <= 1e-9 * want.abs().max(1e-300));
    }
}

#[test]
fn perceptual_matches_naive_feature_pass() {
    use rand::{Rng, SeedableRng};
    let fx = FeatureExtractor::tiny();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let mut r = || tensor(3, 8, 8, (0..192).map(|_| rng.random::<f64>()).collect());
        let (a, b) = (r(), r());
        let (fa, fb) = (features_oracle(&fx, &a), features_oracle(&fx, &b));
        let want = mse_oracle(&fa, &fb);
        let got = perceptual_loss(&a, &b, &fx).unwrap();
        assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
    }
    let a = tensor(3, 8, 8, (0..192).map(|i| (i % 7) as f64 / 7.0).collect());
    assert_eq!(perceptual_loss(&a, &a, &fx).unwrap(), 0.0);
}

#[test]
fn tv_ramp_interior_is_step() {
    let s = 0.03;
    let t = tensor(1, 4, 6, (0..24).map(|i| (i % 6) as f64 * s).collect());
    // every pixel but the last column contributes exactly s
    let want = 4.0 * 5.0 * s / 24.0;
    assert!((tv_loss(&t) - want).abs() < 1e-12);
    assert!((tv_loss(&t) - tv_oracle(&t)).abs() < 1e-12);
}

#[test]
fn breakdown_components_match_pure_functions() {
    let fx = FeatureExtractor::tiny();
    let sr = tensor(3, 8, 8, (0..192).map(|i| ((i * 37) % 101) as f64 / 100.0).collect());
    let hr = tensor(3, 8, 8, (0..192).map(|i| ((i * 53) % 97) as f64 / 96.0).collect());
    let w = LossWeights::default();
    let b = generator_loss(&sr, &hr, 0.3, &fx, &w).unwrap();
    assert_eq!(b.mse, mse_loss(&sr, &hr).unwrap());
    assert_eq!(b.adversarial, adversarial_loss(0.3));
    assert_eq!(b.tv, tv_loss(&sr));
    assert!(b.mse >= 0.0 && b.perceptual >= 0.0 && b.adversarial >= 0.0 && b.tv >= 0.0);
}
