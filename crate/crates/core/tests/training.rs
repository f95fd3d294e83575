use proptest::prelude::*;
use rbvsr_core::discriminator::DiscriminatorConfig;
use rbvsr_core::feature::FeatureExtractor;
use rbvsr_core::flow::FlowMap;
use rbvsr_core::generator::{static_window, GeneratorConfig};
use rbvsr_core::pipeline::{make_pair, split_dataset, window_clip, Clip, ClipWindow};
use rbvsr_core::toy::toy_clip;
use rbvsr_core::trainer::*;
use rbvsr_core::Error;

fn toy_window(seed: u64, size: usize) -> ClipWindow {
    let clip = toy_clip(seed, 0, 3, size, size).unwrap();
    let pairs: Vec<_> = clip.frames().iter().map(|f| make_pair(f, 4).unwrap()).collect();
    static_window(&pairs[2].0, &[pairs[1].0.clone(), pairs[0].0.clone()], Some(pairs[2].1.clone()))
}

fn state(mode: AblationMode, lr: f64) -> TrainState {
    let cfg = TrainConfig {
        learning_rate: lr,
        ablation_mode: mode,
        batch_size: 1,
        seed: 17,
        ..Default::default()
    };
    TrainState::new(GeneratorConfig::tiny(), DiscriminatorConfig::tiny(), FeatureExtractor::tiny(), cfg).unwrap()
}

#[test]
fn single_window_mse_drops_tenfold_in_200_steps() {
    let w = toy_window(1, 32);
    let mut st = state(AblationMode::MseOnly, 1e-4);
    let first = train_step(&mut st, std::slice::from_ref(&w)).unwrap().breakdown.mse;
    let mut last = first;
    for _ in 1..200 {
        last = train_step(&mut st, std::slice::from_ref(&w)).unwrap().breakdown.mse;
    }
    assert!(last < 0.1 * first, "initial {first}, final {last}");
}

#[test]
fn same_seed_same_trajectory() {
    let batch = [toy_window(2, 32), toy_window(3, 32)];
    let run = || {
        let mut st = state(AblationMode::Full, 1e-4);
        (0..5).map(|_| train_step(&mut st, &batch).unwrap()).collect::<Vec<_>>()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert!(a.iter().all(|r| r.breakdown.is_finite() && r.d_loss.is_some()));
}

#[test]
fn l1_only_never_touches_the_discriminator() {
    let w = toy_window(4, 32);
    let mut st = state(AblationMode::L1Only, 1e-4);
    let d0 = st.discriminator.params().fingerprint();
    let g0 = st.generator.params().fingerprint();
    for _ in 0..3 {
        let r = train_step(&mut st, std::slice::from_ref(&w)).unwrap();
        let b = r.breakdown;
        assert_eq!((b.mse, b.perceptual, b.adversarial, b.tv), (0.0, 0.0, 0.0, 0.0));
        assert!(b.l1 > 0.0);
        assert_eq!(r.d_loss, None);
    }
    assert_eq!(st.discriminator.params().fingerprint(), d0);
    assert_ne!(st.generator.params().fingerprint(), g0);
    assert_eq!(st.d_opt.steps, 0);
}

#[test]
fn each_mode_reports_only_its_terms() {
    let w = toy_window(5, 32);
    for mode in AblationMode::ALL {
        let mut st = state(mode, 1e-4);
        let r = train_step(&mut st, std::slice::from_ref(&w)).unwrap();
        let b = r.breakdown;
        let on = mode.active_terms();
        for (active, value) in [
            (on.l1, b.l1),
            (on.mse, b.mse),
            (on.perceptual, b.perceptual),
            (on.adversarial, b.adversarial),
            (on.tv, b.tv),
        ] {
            assert_eq!(active, value != 0.0, "{mode:?}");
        }
        assert_eq!(r.d_loss.is_some(), mode.uses_discriminator());
    }
}

#[test]
fn updates_touch_only_their_own_network() {
    let batch = [toy_window(6, 32)];
    let mut st = state(AblationMode::Full, 1e-3);
    let fwd = forward_batch(&st, &batch).unwrap();
    let (g0, d0) = (st.generator.params().fingerprint(), st.discriminator.params().fingerprint());
    let d_loss = discriminator_update(&mut st, &fwd).unwrap();
    assert!(d_loss > 0.0 && d_loss < 2.0);
    assert_eq!(st.generator.params().fingerprint(), g0);
    let d1 = st.discriminator.params().fingerprint();
    assert_ne!(d1, d0);
    generator_update(&mut st, fwd).unwrap();
    assert_eq!(st.discriminator.params().fingerprint(), d1);
    assert_ne!(st.generator.params().fingerprint(), g0);
}

#[test]
fn non_finite_parameters_abort_the_step() {
    let w = toy_window(7, 32);
    let mut st = state(AblationMode::MseOnly, 1e-4);
    let id = st.generator.params().find("reconstruction.bias").unwrap();
    st.generator.params_mut().get_mut(id).data_mut()[0] = f64::NAN;
    assert!(matches!(train_step(&mut st, &[w]), Err(Error::NonFiniteLoss(_))));
    assert!(matches!(train_step(&mut st, &[]), Err(Error::EmptySequence)));
}

#[test]
fn mismatched_window_is_a_config_error() {
    let clip = toy_clip(1, 0, 2, 32, 32).unwrap();
    let (lr, hr) = make_pair(&clip.frames()[1], 4).unwrap();
    let w = static_window(&lr, std::slice::from_ref(&lr), Some(hr));
    let mut st = state(AblationMode::MseOnly, 1e-4);
    assert!(matches!(train_step(&mut st, &[w]), Err(Error::ConfigMismatch(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_a_seeded_partition(n in 1usize..60, seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (rv, rs) = (a * (1.0 - 1e-3) / 2.0, b * (1.0 - 1e-3) / 2.0);
        let ids: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        let s = split_dataset(&ids, (1.0 - rv - rs, rv, rs), seed).unwrap();
        let mut all: Vec<String> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
        all.sort();
        let mut sorted = ids.clone();
        sorted.sort();
        prop_assert_eq!(all, sorted);
        prop_assert_eq!(s.val.len(), (n as f64 * rv + 1e-9).floor() as usize);
        prop_assert_eq!(s.test.len(), (n as f64 * rs + 1e-9).floor() as usize);
        prop_assert_eq!(split_dataset(&ids, (1.0 - rv - rs, rv, rs), seed).unwrap(), s);
    }

    #[test]
    fn windows_always_satisfy_invariants(len in 1usize..8, n in 1usize..8, t_frac in 0.0f64..1.0) {
        let hr = toy_clip(3, 0, len, 16, 16).unwrap();
        let pairs: Vec<_> = hr.frames().iter().map(|f| make_pair(f, 4).unwrap()).collect();
        let lr_clip = Clip::new("c", "mem", pairs.iter().map(|p| p.0.clone()).collect()).unwrap();
        let hr_clip = Clip::new("c", "mem", pairs.iter().map(|p| p.1.clone()).collect()).unwrap();
        let t = ((len as f64 * t_frac) as usize).min(len - 1);
        let w = window_clip(&lr_clip, t, n, vec![FlowMap::zeros(4, 4); n], Some(&hr_clip)).unwrap();
        prop_assert_eq!(w.n(), n);
        prop_assert!(w.validate(4).is_ok());
        for (k, nb) in w.neighbors_lr.iter().enumerate() {
            prop_assert_eq!(nb, &lr_clip.frames()[t.saturating_sub(k + 1)]);
        }
    }
}

#[test]
fn batch_indices_are_pure() {
    for step in 0..20 {
        assert_eq!(batch_indices(3, step, 4, 7), batch_indices(3, step, 4, 7));
    }
}
