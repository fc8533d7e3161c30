use motionguard::adversarial::{build_model, ArchConfig, LabeledSet, LossKind, Model, OrderedLambda, Standardizer};
use motionguard::nn::{grad_check, Graph, Tensor};
use motionguard::{DeviceLabel, MotionLabel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_arch() -> ArchConfig {
    ArchConfig {
        name: "test-small".into(),
        input_dim: 24,
        kernel: 3,
        channels: vec![4, 4],
        strides: vec![2, 1],
        repr_dim: 8,
        predictor_hidden: vec![6],
        discriminator_hidden: vec![6],
    }
}

fn small_set(seed: u64, n: usize) -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = LabeledSet::default();
    for i in 0..n {
        let row = (0..24).map(|_| rng.random_range(-2.0..2.0)).collect();
        let device = if i % 2 == 0 {
            DeviceLabel::OnBody
        } else {
            DeviceLabel::OffBody
        };
        set.push(row, device, MotionLabel::CONTROLLED[i % 3]);
    }
    set
}

fn small_model(seed: u64) -> (Model, LabeledSet) {
    let set = small_set(seed, 6);
    let motions = set.motions();
    let model = build_model(&small_arch(), &motions, Standardizer::fit(&set.rows).unwrap(), seed).unwrap();
    (model, set)
}

fn logits() -> impl Strategy<Value = Tensor> {
    (1usize..6, 2usize..6).prop_flat_map(|(r, c)| {
        prop::collection::vec(-30.0..30.0f64, r * c).prop_map(move |d| Tensor::new(vec![r, c], d).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions(x in logits()) {
        let mut g = Graph::new();
        let v = g.input(x.clone());
        let p = g.softmax(v).unwrap();
        let p = g.value(p);
        let cols = x.shape()[1];
        for r in 0..x.shape()[0] {
            let row = &p.data()[r * cols..(r + 1) * cols];
            prop_assert!(row.iter().all(|&q| (0.0..=1.0).contains(&q)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_softmax_cross_entropy_gradient(
        data in prop::collection::vec(-1.5..1.5f64, 12),
        w in prop::collection::vec(-1.0..1.0f64, 12),
        b in prop::collection::vec(-0.5..0.5f64, 3),
    ) {
        let x = Tensor::new(vec![3, 4], data).unwrap();
        let w = Tensor::new(vec![4, 3], w).unwrap();
        let b = Tensor::new(vec![3], b).unwrap();
        let check = grad_check(&x, 1e-6, |g, x| {
            let w = g.input(w.clone());
            let b = g.input(b.clone());
            let h = g.dense(x, w, b)?;
            let h = g.relu(h);
            let p = g.softmax(h)?;
            g.cross_entropy(p, &[0, 2, 1])
        })
        .unwrap();
        prop_assert!(check.max_rel_error < 1e-4, "{:?}", check);
    }

    #[test]
    fn stop_gradient_blocks_flow(data in prop::collection::vec(-2.0..2.0f64, 6)) {
        let x = Tensor::new(vec![2, 3], data).unwrap();
        let mut g = Graph::new();
        let v = g.leaf(x);
        let s = g.stop_gradient(v);
        let c = g.concat(v, s).unwrap();
        let total = g.sum(c);
        let grads = g.backward(total).unwrap();
        // only the live half of the concat reaches the leaf
        prop_assert!(grads.wrt(v).unwrap().data().iter().all(|&d| d == 1.0));
    }
}

#[test]
fn model_gradients_match_finite_differences() {
    for seed in [1, 2] {
        let (model, set) = small_model(seed);
        let idx: Vec<usize> = (0..set.len()).collect();
        let batch = model.batch(&set, &idx).unwrap();
        for kind in [
            LossKind::Predictor,
            LossKind::Discriminator,
            LossKind::Value(OrderedLambda::new(0.5)),
        ] {
            let c = model.grad_check(&batch, kind, 4, 1e-6).unwrap();
            assert!(c.max_rel_error < 1e-4, "seed {seed} {kind:?}: {c:?}");
        }
    }
}

#[test]
fn discriminator_loss_does_not_reach_predictor() {
    let (model, set) = small_model(7);
    let idx: Vec<usize> = (0..set.len()).collect();
    let batch = model.batch(&set, &idx).unwrap();
    let (_, grads) = model.loss_d(&batch).unwrap();
    for id in model.predictor_ids() {
        assert!(grads[model.params.ids().position(|p| p == id).unwrap()]
            .data()
            .iter()
            .all(|&g| g == 0.0));
    }
    let (_, gp) = model.loss_p(&batch).unwrap();
    for id in model.discriminator_ids() {
        assert!(gp[model.params.ids().position(|p| p == id).unwrap()]
            .data()
            .iter()
            .all(|&g| g == 0.0));
    }
}
