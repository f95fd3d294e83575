use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbvsr_core::discriminator::{Discriminator, DiscriminatorConfig};
use rbvsr_core::generator::{static_window, Generator, GeneratorConfig, HiddenState};
use rbvsr_core::graph::Graph;
use rbvsr_core::optim::{Adam, AdamConfig};
use rbvsr_core::{Error, Frame, Tensor};

fn noise(seed: u64, h: usize, w: usize) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..3 * h * w).map(|_| rng.random::<f64>()).collect();
    Frame::from_tensor(Tensor::from_vec(&[3, h, w], data)).unwrap()
}

fn config(n: usize) -> GeneratorConfig {
    GeneratorConfig {
        n_neighbors: n,
        ..GeneratorConfig::tiny()
    }
}

#[test]
fn tiny_param_count_closed_form() {
    // Hand count for F = B = 4, n = 2 (weights + biases + one PReLU slope):
    // features 113, sisr 3 * 1029 = 3087, misr 365 + 15 * 306 + 1029 = 5864,
    // projection 3 * 1029 + 306 = 3385, reconstruction 8*3*9 + 3 = 219.
    let tiny = GeneratorConfig::tiny();
    let conv = |ci: usize, co: usize, k: usize| ci * co * k * k + co;
    let res = 2 * (conv(4, 4, 3) + 1);
    let projection = 3 * (conv(4, 4, 8) + 1) + res;
    assert_eq!(projection, 3385);
    assert_eq!(tiny.param_count(), 12668);
    assert_eq!(Generator::new(tiny, 0).unwrap().params().count(), 12668);
    assert_eq!(113 + 3087 + 5864 + 3385 + 219, 12668);
    for n in [1, 2, 6] {
        let c = config(n);
        assert_eq!(Generator::new(c.clone(), 1).unwrap().params().count(), c.param_count());
    }
}

#[test]
fn output_is_four_times_input() {
    for (h, w) in [(8, 8), (32, 32), (112, 64)] {
        for n in [1, 2, 6] {
            let gen = Generator::new(config(n), 3).unwrap();
            let nb: Vec<Frame> = (0..n).map(|k| noise(10 + k as u64, h, w)).collect();
            let out = gen.forward(&static_window(&noise(1, h, w), &nb, None)).unwrap();
            assert_eq!(out.shape(), &[3, 4 * h, 4 * w], "({h},{w}) n={n}");
            assert!(out.all_finite());
        }
    }
}

#[test]
fn sisr_and_feature_geometry() {
    let cfg = GeneratorConfig {
        feat_channels: 16,
        ..GeneratorConfig::tiny()
    };
    let gen = Generator::new(cfg, 0).unwrap();
    let mut g = Graph::new();
    let p = gen.params().bind(&mut g, false);
    let x = g.constant(noise(2, 32, 32).into_tensor());
    let f = gen.extract_features(&mut g, &p, x);
    assert_eq!(g.value(f).shape(), &[16, 32, 32]);
    let s = gen.sisr_path(&mut g, &p, f);
    assert_eq!(g.value(s).shape(), &[4, 128, 128]);

    let tiny = Generator::new(GeneratorConfig::tiny(), 0).unwrap();
    let p = tiny.params().bind(&mut g, false);
    let one = g.constant(Tensor::full(&[4, 1, 1], 0.3));
    let s = tiny.sisr_path(&mut g, &p, one);
    assert_eq!(g.value(s).shape(), &[4, 4, 4]);
}

#[test]
fn zero_input_features_are_spatially_constant() {
    let gen = Generator::new(GeneratorConfig::tiny(), 0).unwrap();
    let mut g = Graph::new();
    let p = gen.params().bind(&mut g, false);
    let x = g.constant(Tensor::zeros(&[3, 6, 6]));
    let f = gen.extract_features(&mut g, &p, x);
    let t = g.value(f);
    for c in 0..4 {
        let v0 = t.at3(c, 0, 0);
        assert!(t.plane(c).iter().all(|&v| v == v0));
    }
}

#[test]
fn misr_shape_and_determinism() {
    let gen = Generator::new(GeneratorConfig::tiny(), 0).unwrap();
    let run = || {
        let mut g = Graph::new();
        let p = gen.params().bind(&mut g, false);
        let t = g.constant(noise(3, 32, 32).into_tensor());
        let tf = gen.extract_features(&mut g, &p, t);
        let nb = g.constant(noise(4, 32, 32).into_tensor());
        let fl = g.constant(Tensor::full(&[2, 32, 32], 0.5));
        let m = gen.misr_path(&mut g, &p, tf, nb, fl);
        g.value(m).clone()
    };
    let a = run();
    assert_eq!(a.shape(), &[4, 128, 128]);
    assert_eq!(a, run());
}

#[test]
fn zero_weight_residual_block_is_identity() {
    let mut gen = Generator::new(GeneratorConfig::tiny(), 0).unwrap();
    for name in ["misr.tile0.block0.conv1.weight", "misr.tile0.block0.conv2.weight"] {
        let id = gen
            .params()
            .find(name)
            .unwrap_or_else(|| panic!("missing {name}: {:?}", gen.params().iter().map(|p| p.0).collect::<Vec<_>>()));
        gen.params_mut().get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let mut g = Graph::new();
    let p = gen.params().bind(&mut g, false);
    let x = g.constant(Tensor::concat_channels(&[
        &noise(5, 7, 9).into_tensor().map(|v| v - 0.5),
        &Tensor::full(&[1, 7, 9], -0.2),
    ]));
    let y = gen.misr_block(&mut g, &p, 0, x);
    assert_eq!(g.value(y), g.value(x));
}

#[test]
fn projection_zero_residual_fixed_point() {
    let mut gen = Generator::new(GeneratorConfig::tiny(), 0).unwrap();
    for id in gen.residual_branch_params() {
        gen.params_mut().get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let mut g = Graph::new();
    let p = gen.params().bind(&mut g, false);
    let s = g.constant(Tensor::concat_channels(&[&noise(6, 16, 16).into_tensor(), &Tensor::full(&[1, 16, 16], 0.7)]));
    let mut state = HiddenState::default();
    let lr = gen.projection_step(&mut g, &p, &mut state, s, s);
    assert_eq!(state.hr_features.len(), 1);
    assert_eq!(g.value(state.hr_features[0]), g.value(s));
    assert_eq!(g.value(lr).shape(), &[4, 4, 4]);
}

#[test]
fn neighbor_order_changes_output() {
    let gen = Generator::new(GeneratorConfig::tiny(), 9).unwrap();
    let (a, b) = (noise(20, 8, 8), noise(21, 8, 8));
    let t = noise(22, 8, 8);
    let ab = gen.forward(&static_window(&t, &[a.clone(), b.clone()], None)).unwrap();
    let ba = gen.forward(&static_window(&t, &[b, a], None)).unwrap();
    assert!(ab.max_abs_diff(&ba) > 1e-6);
}

#[test]
fn forward_is_deterministic_and_checks_n() {
    let gen = Generator::new(GeneratorConfig::tiny(), 9).unwrap();
    let w = static_window(&noise(1, 8, 8), &[noise(2, 8, 8), noise(3, 8, 8)], None);
    assert_eq!(gen.forward(&w).unwrap(), gen.forward(&w).unwrap());
    let gen2 = Generator::new(GeneratorConfig::tiny(), 9).unwrap();
    assert_eq!(gen.forward(&w).unwrap(), gen2.forward(&w).unwrap());
    let short = static_window(&noise(1, 8, 8), &[noise(2, 8, 8)], None);
    assert!(matches!(gen.forward(&short), Err(Error::ConfigMismatch(_))));
}

#[test]
fn discriminator_contract() {
    let d = Discriminator::new(DiscriminatorConfig::tiny(), 1).unwrap();
    assert_eq!(d.params().count(), d.config().param_count());
    let full = DiscriminatorConfig::full();
    assert_eq!(Discriminator::new(full.clone(), 0).unwrap().params().count(), full.param_count());
    for seed in 0..20 {
        let x = noise(seed, 12, 16).into_tensor().map(|v| v * 40.0 - 20.0);
        let p = d.discriminate(&x).unwrap();
        assert!(p > 0.0 && p < 1.0);
        assert_eq!(p, d.discriminate(&x).unwrap());
    }
    let fixed = Discriminator::new(
        DiscriminatorConfig {
            input_size: Some((16, 16)),
            ..DiscriminatorConfig::tiny()
        },
        1,
    )
    .unwrap();
    assert!(fixed.discriminate(&Tensor::zeros(&[3, 16, 16])).is_ok());
    assert!(matches!(
        fixed.discriminate(&Tensor::zeros(&[3, 16, 12])),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn discriminator_overfits_two_images() {
    let real = noise(30, 16, 16).into_tensor();
    let fake = real.map(|v| 0.6 * v + 0.2);
    let mut d = Discriminator::new(DiscriminatorConfig::tiny(), 2).unwrap();
    let cfg = AdamConfig {
        lr: 1e-3,
        ..Default::default()
    };
    let mut opt = Adam::new(cfg, d.params(), false);
    for _ in 0..200 {
        let mut g = Graph::new();
        let p = d.params().bind(&mut g, true);
        let (r, f) = (g.constant(real.clone()), g.constant(fake.clone()));
        let pr = d.forward_graph(&mut g, &p, r).unwrap();
        let pf = d.forward_graph(&mut g, &p, f).unwrap();
        let l = g.weighted_sum(&[(pr, -1.0), (pf, 1.0)]);
        let grads = d.params().gradients(&p, &g.backward(l));
        opt.step(d.params_mut(), &grads).unwrap();
    }
    let (pr, pf) = (d.discriminate(&real).unwrap(), d.discriminate(&fake).unwrap());
    assert!(pr > 0.9 && pf < 0.1, "D(real) {pr}, D(fake) {pf}");
}
