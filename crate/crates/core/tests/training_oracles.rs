use nalgebra::{DMatrix, DVector};

use sbc::rng;
use sbc::train::{
    make_dataset, sgd_n, split_iid, train_centralized, Dataset, DatasetKind, Model, ModelKind,
    ModelSpec, OptimizerConfig, OptimizerState, Targets,
};

fn linreg(input_dim: usize, output_dim: usize, size: usize, seed: u64) -> Dataset {
    make_dataset(
        &DatasetKind::Linreg {
            input_dim,
            output_dim,
            noise: 0.0,
        },
        size,
        seed,
    )
    .unwrap()
}

fn values(data: &Dataset) -> &[f32] {
    match data.targets() {
        Targets::Values { values, .. } => values,
        Targets::Classes { .. } => panic!("expected regression targets"),
    }
}

fn labels(data: &Dataset) -> &[u32] {
    match data.targets() {
        Targets::Classes { labels, .. } => labels,
        Targets::Values { .. } => panic!("expected class labels"),
    }
}

#[test]
fn sgd_reaches_the_least_squares_solution() {
    let (d, size) = (5, 400);
    let data = linreg(d, 1, size, 21);
    // normal equations on [x, 1]
    let x = DMatrix::from_fn(size, d + 1, |r, c| {
        if c == d {
            1.0
        } else {
            data.row(r)[c] as f64
        }
    });
    let y = DVector::from_iterator(size, values(&data).iter().map(|&v| v as f64));
    let xt = x.transpose();
    let theta = (&xt * &x).lu().solve(&(&xt * &y)).expect("full rank");

    let spec = ModelSpec::new(ModelKind::LinearRegression, d, 1, 0).unwrap();
    let mut model = Model::new(spec, 4);
    let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.1), model.params());
    train_centralized(&mut model, &mut opt, &data, 1000, 16, 4, 0).unwrap();

    let w = model.params().get("weight").unwrap().values();
    let b = model.params().get("bias").unwrap().values()[0];
    for i in 0..d {
        assert!(
            (w[i] as f64 - theta[i]).abs() < 1e-3,
            "w[{i}] = {} vs {}",
            w[i],
            theta[i]
        );
    }
    assert!(
        (b as f64 - theta[d]).abs() < 1e-3,
        "bias {b} vs {}",
        theta[d]
    );
}

#[test]
fn separated_blobs_are_learned_quickly() {
    let data = make_dataset(
        &DatasetKind::Blobs {
            dim: 10,
            separation: 10.0,
        },
        1000,
        2,
    )
    .unwrap();
    let spec = ModelSpec::new(ModelKind::LogisticRegression, 10, 2, 0).unwrap();
    let mut model = Model::new(spec, 2);
    let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.1), model.params());
    train_centralized(&mut model, &mut opt, &data, 200, 32, 2, 0).unwrap();
    let acc = model.evaluate(&data).unwrap().accuracy.unwrap();
    assert!(acc >= 0.99, "train accuracy {acc}");
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

fn log_softmax_nll(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    lse - logits[label]
}

#[test]
fn losses_match_a_straight_line_recomputation() {
    // linear regression: 0.5 * squared error, summed over outputs, averaged over rows
    let data = linreg(4, 2, 50, 6);
    let model = Model::new(
        ModelSpec::new(ModelKind::LinearRegression, 4, 2, 0).unwrap(),
        8,
    );
    let w = model.params().get("weight").unwrap().values();
    let b = model.params().get("bias").unwrap().values();
    let y = values(&data);
    let mut expected = 0.0;
    for r in 0..data.len() {
        for o in 0..2 {
            let pred = dot(&w[o * 4..(o + 1) * 4], data.row(r)) + b[o] as f64;
            expected += 0.5 * (pred - y[r * 2 + o] as f64).powi(2);
        }
    }
    expected /= data.len() as f64;
    let got = model.evaluate(&data).unwrap().loss;
    assert!(
        (got - expected).abs() <= 1e-6 * expected.max(1.0),
        "{got} vs {expected}"
    );

    // one-hidden-layer ReLU network with softmax cross-entropy
    let data = make_dataset(
        &DatasetKind::XorIsh {
            noise_dims: 3,
            label_noise: 0.0,
        },
        60,
        6,
    )
    .unwrap();
    let (d, h) = (5, 7);
    let model = Model::new(ModelSpec::new(ModelKind::Mlp, d, 2, h).unwrap(), 8);
    let p = model.params();
    let (w1, b1) = (
        p.get("hidden.weight").unwrap().values(),
        p.get("hidden.bias").unwrap().values(),
    );
    let (w2, b2) = (
        p.get("output.weight").unwrap().values(),
        p.get("output.bias").unwrap().values(),
    );
    let mut expected = 0.0;
    let mut correct = 0;
    for (r, &label) in labels(&data).iter().enumerate() {
        let hidden: Vec<f32> = (0..h)
            .map(|j| (dot(&w1[j * d..(j + 1) * d], data.row(r)) + b1[j] as f64).max(0.0) as f32)
            .collect();
        let logits: Vec<f64> = (0..2)
            .map(|o| dot(&w2[o * h..(o + 1) * h], &hidden) + b2[o] as f64)
            .collect();
        expected += log_softmax_nll(&logits, label as usize);
        let pred = usize::from(logits[1] > logits[0]);
        correct += usize::from(pred == label as usize);
    }
    expected /= data.len() as f64;
    let eval = model.evaluate(&data).unwrap();
    assert!(
        (eval.loss - expected).abs() <= 1e-6 * expected.max(1.0),
        "{} vs {expected}",
        eval.loss
    );
    assert_eq!(eval.accuracy.unwrap(), correct as f64 / data.len() as f64);
}

#[test]
fn iid_shards_keep_class_balance_and_partition_rows() {
    let data = make_dataset(
        &DatasetKind::XorIsh {
            noise_dims: 1,
            label_noise: 0.0,
        },
        4000,
        3,
    )
    .unwrap();
    let overall = data.class_counts()[1] as f64 / data.len() as f64;
    let shards = split_iid(&data, 8, 3).unwrap();
    assert_eq!(shards.iter().map(Dataset::len).sum::<usize>(), data.len());
    for s in &shards {
        let share = s.class_counts()[1] as f64 / s.len() as f64;
        assert!(
            (share - overall).abs() <= 0.05,
            "shard share {share} vs {overall}"
        );
    }

    let small = make_dataset(
        &DatasetKind::Blobs {
            dim: 3,
            separation: 1.0,
        },
        100,
        1,
    )
    .unwrap();
    let shards = split_iid(&small, 4, 1).unwrap();
    assert!(shards.iter().all(|s| s.len() == 25));
    let mut rows: Vec<Vec<u32>> = shards
        .iter()
        .flat_map(|s| {
            (0..s.len())
                .map(|r| s.row(r).iter().map(|v| v.to_bits()).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        })
        .collect();
    let mut original: Vec<Vec<u32>> = (0..small.len())
        .map(|r| small.row(r).iter().map(|v| v.to_bits()).collect())
        .collect();
    rows.sort();
    original.sort();
    assert_eq!(rows, original, "shards must be a partition of the rows");
}

#[test]
fn median_loss_decreases_across_seeds() {
    let data = make_dataset(
        &DatasetKind::XorIsh {
            noise_dims: 2,
            label_noise: 0.0,
        },
        2000,
        5,
    )
    .unwrap();
    let spec = ModelSpec::new(ModelKind::Mlp, 4, 2, 16).unwrap();
    let mut before = Vec::new();
    let mut after = Vec::new();
    for seed in 0..10 {
        let mut model = Model::new(spec, seed);
        before.push(model.evaluate(&data).unwrap().loss);
        let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.1), model.params());
        sgd_n(
            &mut model,
            &mut opt,
            &data,
            500,
            16,
            &mut rng::stream(seed, 0, 0),
        )
        .unwrap();
        after.push(model.evaluate(&data).unwrap().loss);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (v[4] + v[5]) / 2.0
    };
    let (b, a) = (median(&mut before), median(&mut after));
    assert!(a < b, "median loss {b} -> {a}");
}

#[test]
fn training_is_reproducible_and_seed_sensitive() {
    let data = make_dataset(
        &DatasetKind::Blobs {
            dim: 6,
            separation: 2.0,
        },
        300,
        0,
    )
    .unwrap();
    let spec = ModelSpec::new(ModelKind::Mlp, 6, 2, 8).unwrap();
    let train = |seed| {
        let mut m = Model::new(spec, 1);
        let mut o = OptimizerState::new(OptimizerConfig::momentum(0.05, 0.9), m.params());
        let losses = train_centralized(&mut m, &mut o, &data, 50, 8, seed, 0).unwrap();
        (m.into_params(), losses)
    };
    let (a, la) = train(10);
    let (b, lb) = train(10);
    let (c, _) = train(11);
    assert!(a.bitwise_eq(&b));
    assert_eq!(la, lb);
    assert!(!a.bitwise_eq(&c));
}
