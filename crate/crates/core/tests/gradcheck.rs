//! Analytic gradients against central finite differences, in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbvsr_core::discriminator::{Discriminator, DiscriminatorConfig};
use rbvsr_core::feature::FeatureExtractor;
use rbvsr_core::flow::FlowMap;
use rbvsr_core::generator::{Generator, GeneratorConfig};
use rbvsr_core::graph::{Graph, Var};
use rbvsr_core::params::ParamSet;
use rbvsr_core::pipeline::ClipWindow;
use rbvsr_core::{Frame, Tensor};

const H: f64 = 1e-5;
const TOL: f64 = 1e-3;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect())
}

/// Check d loss / d x at every entry of `x`.
fn check_input_grad(name: &str, x: &Tensor, f: impl Fn(&mut Graph, Var) -> Var) {
    let mut g = Graph::new();
    let xv = g.variable(x.clone());
    let l = f(&mut g, xv);
    let grads = g.backward(l);
    let analytic = grads.get_or_zeros(xv, x);
    let eval = |t: Tensor| {
        let mut g = Graph::new();
        let v = g.constant(t);
        let l = f(&mut g, v);
        g.value(l).item()
    };
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.data_mut()[i] += H;
        xm.data_mut()[i] -= H;
        let num = (eval(xp) - eval(xm)) / (2.0 * H);
        worst = worst.max(rel_err(analytic.data()[i], num));
    }
    assert!(worst < TOL, "{name}: max relative error {worst:e}");
}

/// Check parameter gradients on a sample of entries of every tensor.
fn check_param_grads(
    name: &str,
    params: &mut ParamSet,
    analytic: &[Tensor],
    per_tensor: usize,
    eval: impl Fn(&ParamSet) -> f64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = (0.0f64, String::new());
    let ids: Vec<_> = params.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        let len = params.get(id).len();
        let grad = &analytic[k];
        let argmax = (0..len)
            .max_by(|&a, &b| grad.data()[a].abs().total_cmp(&grad.data()[b].abs()))
            .unwrap();
        let mut picks: Vec<usize> = (0..per_tensor.min(len)).map(|_| rng.random_range(0..len)).collect();
        picks.push(argmax);
        for i in picks {
            let orig = params.get(id).data()[i];
            params.get_mut(id).data_mut()[i] = orig + H;
            let lp = eval(params);
            params.get_mut(id).data_mut()[i] = orig - H;
            let lm = eval(params);
            params.get_mut(id).data_mut()[i] = orig;
            let num = (lp - lm) / (2.0 * H);
            let e = rel_err(grad.data()[i], num);
            if e > worst.0 {
                worst = (e, format!("{}[{i}] analytic {} numeric {num}", params.name(id), grad.data()[i]));
            }
        }
    }
    assert!(worst.0 < TOL, "{name}: max relative error {:e} at {}", worst.0, worst.1);
}

#[test]
fn loss_terms_wrt_sr() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sr = random_tensor(&mut rng, &[3, 8, 8], 0.0, 1.0);
    let hr = random_tensor(&mut rng, &[3, 8, 8], 0.0, 1.0);
    let fx = FeatureExtractor::tiny();
    let target = |g: &mut Graph| g.constant(hr.clone());
    check_input_grad("mse", &sr, |g, x| {
        let t = target(g);
        g.mean_squared_diff(x, t)
    });
    check_input_grad("l1", &sr, |g, x| {
        let t = target(g);
        g.mean_abs_diff(x, t)
    });
    check_input_grad("tv", &sr, |g, x| g.total_variation(x));
    check_input_grad("perceptual", &sr, |g, x| {
        let t = target(g);
        let fs = fx.forward_graph(g, x);
        let fh = fx.forward_graph(g, t);
        g.mean_squared_diff(fs, fh)
    });
    check_input_grad("weighted total", &sr, |g, x| {
        let t = target(g);
        let m = g.mean_squared_diff(x, t);
        let v = g.total_variation(x);
        g.weighted_sum(&[(m, 1.0), (v, 0.3)])
    });
}

#[test]
fn adversarial_wrt_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let d = Discriminator::new(DiscriminatorConfig::tiny(), 5).unwrap();
    let x = random_tensor(&mut rng, &[3, 8, 8], 0.0, 1.0);
    check_input_grad("-log D(x)", &x, |g, xv| {
        let p = d.params().bind(g, false);
        let prob = d.forward_graph(g, &p, xv).unwrap();
        g.neg_log(prob)
    });
}

#[test]
fn discriminator_params() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut d = Discriminator::new(DiscriminatorConfig::tiny(), 6).unwrap();
    let real = random_tensor(&mut rng, &[3, 8, 8], 0.0, 1.0);
    let fake = random_tensor(&mut rng, &[3, 8, 8], 0.0, 1.0);
    let build = |d: &Discriminator, g: &mut Graph, trainable: bool| {
        let p = d.params().bind(g, trainable);
        let r = g.constant(real.clone());
        let f = g.constant(fake.clone());
        let pr = d.forward_graph(g, &p, r).unwrap();
        let pf = d.forward_graph(g, &p, f).unwrap();
        let l = g.weighted_sum(&[(pr, -1.0), (pf, 1.0)]);
        (p, l)
    };
    let mut g = Graph::new();
    let (p, l) = build(&d, &mut g, true);
    let analytic = d.params().gradients(&p, &g.backward(l));
    let cfg = d.config().clone();
    let mut ps = d.params_mut().clone();
    check_param_grads("discriminator", &mut ps, &analytic, 6, |ps| {
        let mut d2 = Discriminator::new(cfg.clone(), 6).unwrap();
        *d2.params_mut() = ps.clone();
        let mut g = Graph::new();
        let (_, l) = build(&d2, &mut g, false);
        g.value(l).item()
    });
}

fn textured(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Frame {
    let t = random_tensor(rng, &[3, h, w], 0.0, 1.0);
    Frame::from_tensor(t).unwrap()
}

#[test]
fn generator_params() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gen = Generator::new(GeneratorConfig::tiny(), 7).unwrap();
    let flows = (0..2)
        .map(|_| {
            let u = (0..64).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let v = (0..64).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            FlowMap::new(8, 8, u, v).unwrap()
        })
        .collect();
    let window = ClipWindow {
        target_lr: textured(&mut rng, 8, 8),
        neighbors_lr: vec![textured(&mut rng, 8, 8), textured(&mut rng, 8, 8)],
        flows,
        target_hr: None,
    };
    let hr = random_tensor(&mut rng, &[3, 32, 32], 0.0, 1.0);
    let build = |gen: &Generator, g: &mut Graph, trainable: bool| {
        let p = gen.params().bind(g, trainable);
        let sr = gen.forward_graph(g, &p, &window).unwrap();
        let t = g.constant(hr.clone());
        let l = g.mean_squared_diff(sr, t);
        (p, l)
    };
    let mut g = Graph::new();
    let (p, l) = build(&gen, &mut g, true);
    let analytic = gen.params().gradients(&p, &g.backward(l));
    assert!(analytic.iter().all(Tensor::all_finite));
    let mut ps = gen.params().clone();
    let mut probe = Generator::new(GeneratorConfig::tiny(), 7).unwrap();
    let probe_ref = std::cell::RefCell::new(&mut probe);
    check_param_grads("generator", &mut ps, &analytic, 3, |ps| {
        let mut gen = probe_ref.borrow_mut();
        *gen.params_mut() = ps.clone();
        let mut g = Graph::new();
        let (_, l) = build(&gen, &mut g, false);
        g.value(l).item()
    });
}
