use samttt::params::fingerprint;
use samttt::rsampc::{RsampcConfig, RsampcStack, MAX_DEPTH};
use samttt::tensor::{prng_fill, Init};
use samttt::{Mode, Tensor};

fn random(shape: [usize; 4], seed: u64) -> Tensor<f32> {
    prng_fill(&shape, seed, Init::Uniform(1.0))
}

fn stack(c: usize, depth: usize, eps: Option<f64>, seed: u64) -> RsampcStack<f32> {
    RsampcStack::init(RsampcConfig { depth, channel_scale: eps, ..RsampcConfig::new(c, seed) }).unwrap()
}

#[test]
fn same_config_gives_identical_stacks() {
    let (a, b) = (stack(8, 4, Some(0.1), 3), stack(8, 4, Some(0.1), 3));
    assert_eq!(fingerprint(&a.params()), fingerprint(&b.params()));
    assert_ne!(fingerprint(&a.params()), fingerprint(&stack(8, 4, Some(0.1), 4).params()));
}

#[test]
fn depth_sets_spatial_layer_count() {
    for d in 1..=MAX_DEPTH {
        let s = stack(4, d, None, 0);
        assert_eq!(s.depth(), d);
        let names: Vec<&str> = s.params().iter().map(|p| p.name).collect();
        assert_eq!(names.iter().filter(|n| n.starts_with("rsampc.si")).count(), d);
        assert!(names.iter().all(|n| n.starts_with("rsampc.")));
    }
    assert!(RsampcStack::<f32>::init(RsampcConfig { depth: 0, ..RsampcConfig::new(4, 0) }).is_err());
    assert!(RsampcStack::<f32>::init(RsampcConfig { depth: MAX_DEPTH + 1, ..RsampcConfig::new(4, 0) }).is_err());
}

#[test]
fn widths_double_then_restore_at_256_channels() {
    let s = stack(256, 4, None, 1);
    assert_eq!(s.widths(), vec![512, 512, 512, 512, 512, 256]);
    let x = random([1, 256, 4, 4], 2);
    assert_eq!(s.apply(&x, Mode::Train).unwrap().shape(), [1, 256, 4, 4]);
}

#[test]
fn frozen_across_one_hundred_applications() {
    let s = stack(8, 4, Some(0.1), 5);
    let before = fingerprint(&s.params());
    for i in 0..100 {
        s.apply(&random([2, 8, 6, 6], i), Mode::Train).unwrap();
    }
    assert_eq!(s.applications(), 100);
    assert_eq!(fingerprint(&s.params()), before);
}

#[test]
fn shape_preserved_for_every_depth_and_scale() {
    for d in 1..=MAX_DEPTH {
        for eps in [None, Some(0.1)] {
            let x = random([2, 4, 5, 7], d as u64);
            let y = stack(4, d, eps, 9).apply(&x, Mode::Train).unwrap();
            assert_eq!(y.shape(), x.shape());
            assert!(y.is_finite());
        }
    }
}

#[test]
fn train_mode_perturbs_and_is_repeatable() {
    let s = stack(8, 4, None, 11);
    for i in 0..10 {
        let x = random([1, 8, 8, 8], 100 + i);
        let (a, b) = (s.apply(&x, Mode::Train).unwrap(), s.apply(&x, Mode::Train).unwrap());
        assert_eq!(a.to_le_bytes(), b.to_le_bytes());
        assert!(a.max_abs_diff(&x).unwrap() > 0.0);
    }
}

#[test]
fn infer_mode_is_identity() {
    let s = stack(8, 3, Some(0.2), 13);
    for i in 0..20 {
        let x = random([2, 8, 4, 4], i);
        let y = s.apply(&x, Mode::Infer).unwrap();
        assert_eq!(y.to_le_bytes(), x.to_le_bytes());
    }
    assert_eq!(s.applications(), 0);
}

#[test]
fn channel_mismatch_is_an_error() {
    let s = stack(8, 1, None, 0);
    assert!(s.apply(&random([1, 4, 4, 4], 0), Mode::Train).is_err());
    assert!(s.apply(&random([1, 4, 4, 4], 0), Mode::Infer).is_err());
}

#[test]
fn scale_multiplies_each_channel() {
    // The scaled stack equals the unscaled one times a frozen per-channel factor in [0.9, 1.1].
    let (plain, scaled) = (stack(4, 2, None, 21), stack(4, 2, Some(0.1), 21));
    let x = random([1, 4, 6, 6], 1);
    let (a, b) = (plain.apply(&x, Mode::Train).unwrap(), scaled.apply(&x, Mode::Train).unwrap());
    let factors = scaled.params().into_iter().find(|p| p.name == "rsampc.scale").unwrap().tensor.clone();
    for c in 0..4 {
        let k = factors.data()[c];
        assert!((0.9..=1.1).contains(&k));
        for (u, v) in a.plane(0, c).iter().zip(b.plane(0, c)) {
            assert_eq!(u * k, *v);
        }
    }
}

#[test]
fn concurrent_application_matches_serial() {
    let s = stack(8, 2, None, 2);
    let inputs: Vec<_> = (0..8).map(|i| random([1, 8, 6, 6], i)).collect();
    let serial: Vec<_> = inputs.iter().map(|x| s.apply(x, Mode::Train).unwrap()).collect();
    let parallel: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = inputs.iter().map(|x| scope.spawn(|| s.apply(x, Mode::Train).unwrap())).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(serial, parallel);
    assert_eq!(s.applications(), 16);
}
