use gamo_core::baselines::{balancing_counts, smote_oversample, SmoteConfig};
use gamo_core::data::{read_csv, subsample_imbalanced, write_csv, Dataset, ImbalanceSpec};
use gamo_core::diffcore::{Activation, Checkpoint, Graph, Mlp, Tensor};
use gamo_core::evalor::{acsa, gm, js_divergence, ConfusionMatrix};
use gamo_core::gamo::{Architecture, ConvexGenerator, GamoModel, GeneratorKind, LossVariant};
use gamo_core::trainer::{assign_fake_labels, assign_uniform_labels};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Class sizes and seed for a small dataset with distinct original labels.
fn dataset(sizes: &[usize], seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = Vec::new();
    for (l, &n) in sizes.iter().enumerate() {
        labels.extend(std::iter::repeat_n(l as i64 * 3 + 1, n));
    }
    let data = (0..labels.len() * 3)
        .map(|_| rand::Rng::random_range(&mut rng, -5.0..5.0))
        .collect();
    Dataset::from_original(Tensor::matrix(labels.len(), 3, data).unwrap(), &labels).unwrap()
}

fn distribution(raw: Vec<f64>) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classes_are_ordered_by_size(sizes in prop::collection::vec(1usize..30, 2..6), seed in any::<u64>()) {
        let d = dataset(&sizes, seed);
        let counts = d.counts();
        prop_assert!(counts.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(counts.iter().sum::<usize>(), d.len());
        prop_assert!((d.priors().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut seen = vec![false; d.len()];
        for k in 0..d.num_classes() {
            for &r in d.class_index(k) {
                prop_assert!(!seen[r]);
                seen[r] = true;
                prop_assert_eq!(d.labels()[r], k);
            }
        }
    }

    #[test]
    fn softmax_rows_lie_on_the_simplex(rows in 1usize..6, cols in 1usize..8, scale in 0.1f64..50.0, seed in any::<u64>()) {
        let net = Mlp::init(&[3, cols], &[Activation::Softmax], seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::matrix(rows, 3, (0..rows * 3).map(|_| scale * rand::Rng::random_range(&mut rng, -1.0..1.0)).collect()).unwrap();
        let y = net.forward(&x).unwrap();
        for r in 0..rows {
            prop_assert!(y.row(r).iter().all(|&v| v >= 0.0));
            prop_assert!((y.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn generated_points_are_convex_combinations(
        sizes in prop::collection::vec(2usize..15, 2..5),
        z in prop::collection::vec(-20.0f64..20.0, 4),
        seed in any::<u64>(),
    ) {
        let d = dataset(&sizes, seed);
        let g = ConvexGenerator::init(4, 6, 8, &d, seed).unwrap();
        for class in 0..d.num_classes() - 1 {
            let (x, w) = g.generate_with_weights(&z, class).unwrap();
            prop_assert!(w.data().iter().all(|&v| v >= -1e-12));
            prop_assert!((w.data().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let rows = d.class_index(class);
            for col in 0..3 {
                let lo = rows.iter().map(|&r| d.features().get(r, col)).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|&r| d.features().get(r, col)).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(x.data()[col] >= lo - 1e-9 && x.data()[col] <= hi + 1e-9);
            }
        }
        prop_assert!(g.generate_with_weights(&z, d.num_classes() - 1).is_err());
    }

    #[test]
    fn gm_never_exceeds_acsa(counts in prop::collection::vec(prop::collection::vec(0u64..50, 4), 4)) {
        let mut counts = counts;
        for (i, row) in counts.iter_mut().enumerate() {
            row[i] += 1;
        }
        let cm = ConfusionMatrix::from_counts(counts).unwrap();
        let (a, g) = (acsa(&cm).unwrap(), gm(&cm).unwrap());
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(g >= 0.0 && g <= a + 1e-15);
    }

    #[test]
    fn js_is_symmetric_and_bounded(p in prop::collection::vec(0.01f64..1.0, 6), q in prop::collection::vec(0.01f64..1.0, 6)) {
        let (p, q) = (distribution(p), distribution(q));
        let a = js_divergence(&p, &q, None).unwrap();
        let b = js_divergence(&q, &p, None).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&a));
        prop_assert!(js_divergence(&p, &p, None).unwrap().abs() < 1e-12);
    }

    #[test]
    fn fake_labels_avoid_the_majority(priors in prop::collection::vec(0.05f64..1.0, 2..7), seed in any::<u64>()) {
        let mut priors = distribution(priors);
        priors.sort_by(f64::total_cmp);
        let c = priors.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Ok(labels) = assign_fake_labels(&priors, 200, &mut rng) {
            prop_assert!(labels.iter().all(|&y| y < c - 1 && priors[y] < priors[c - 1]));
        }
        let uniform = assign_uniform_labels(c, 200, &mut rng).unwrap();
        prop_assert!(uniform.iter().all(|&y| y < c - 1));
    }

    #[test]
    fn csv_round_trip_is_exact(sizes in prop::collection::vec(1usize..10, 2..4), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels = Vec::new();
        for (l, &n) in sizes.iter().enumerate() {
            labels.extend(std::iter::repeat_n(l as i64, n));
        }
        let x = Tensor::matrix(labels.len(), 2, (0..labels.len() * 2).map(|_| rand::Rng::random::<f64>(&mut rng) * 1e3 - 500.0).collect()).unwrap();
        let d = Dataset::from_original(x, &labels).unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.features(), d.features());
        prop_assert_eq!(back.original_labels(), d.original_labels());
    }

    #[test]
    fn smote_fills_every_class_to_the_majority(sizes in prop::collection::vec(7usize..40, 2..5), seed in any::<u64>()) {
        let d = dataset(&sizes, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let need = balancing_counts(&d);
        let out = smote_oversample(&d, &SmoteConfig::default(), &mut rng).unwrap();
        prop_assert_eq!(out.len(), d.len() + need.iter().sum::<usize>());
        let top = *d.counts().last().unwrap();
        prop_assert!(out.counts().iter().all(|&n| n == top));
        prop_assert_eq!(&out.features().data()[..d.len() * 3], d.features().data());
    }

    #[test]
    fn subsampling_is_reproducible(seed in any::<u64>()) {
        let full = dataset(&[40, 40, 40], seed);
        let spec = ImbalanceSpec { counts: vec![30, 10, 3], test_per_class: 5, seed };
        let (a, at) = subsample_imbalanced(&full, &spec).unwrap();
        let (b, bt) = subsample_imbalanced(&full, &spec).unwrap();
        prop_assert_eq!(a.features(), b.features());
        prop_assert_eq!(at.features(), bt.features());
        let mut c = a.counts();
        c.sort_unstable();
        prop_assert_eq!(c, vec![3, 10, 30]);
        prop_assert_eq!(at.counts(), vec![5, 5, 5]);
    }

    #[test]
    fn checkpoints_round_trip(seed in any::<u64>(), ls in any::<bool>()) {
        let d = dataset(&[5, 9, 20], seed);
        let arch = Architecture {
            latent_dim: 3,
            intermediate_dim: 4,
            hidden: 5,
            classifier_hidden: vec![6],
            discriminator_hidden: vec![4],
            feature: None,
        };
        let loss = if ls { LossVariant::LeastSquares } else { LossVariant::CrossEntropy };
        let model = GamoModel::init(&arch, GeneratorKind::Convex, true, loss, &d, seed).unwrap();
        let mut bytes = Vec::new();
        model.to_checkpoint().write_to(&mut bytes).unwrap();
        let back = GamoModel::from_checkpoint(&Checkpoint::read_from(bytes.as_slice()).unwrap()).unwrap();
        prop_assert_eq!(back.fingerprints(), model.fingerprints());
        prop_assert_eq!(back.predict(d.features()).unwrap(), model.predict(d.features()).unwrap());
    }
}

#[test]
fn frozen_parameters_receive_no_gradient() {
    let net = Mlp::init(&[2, 3, 1], &[Activation::Relu, Activation::Sigmoid], 4).unwrap();
    let mut g = Graph::new();
    let bound = net.bind(&mut g, false);
    let x = g.param(Tensor::from_rows(&[[0.3, -0.2]]).unwrap());
    let y = net.forward_graph(&mut g, &bound, x).unwrap();
    let grads = g.backward(y).unwrap();
    assert!(bound.vars().iter().all(|&v| grads.get(v).is_none()));
    assert!(grads.get(x).is_some());
}
