use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::tests::naive_rmgc;
use super::*;
use crate::features::{CalendarEncoding, CALENDAR_CLASSES};
use crate::numerics::{Activation, Mode, Tensor};

fn tiny_config(h: usize, k: usize) -> ModelConfig {
    ModelConfig {
        hidden_temporal: h,
        hidden_spatial: h,
        encoder_blocks: k,
        decoder_blocks: k,
        activation: Activation::Relu,
        dropout: 0.0,
        cell: CellType::Gru,
        embedding: EmbeddingConfig {
            embed_width: 2,
            branch_width: 2,
            module_widths: [3, 3],
            output_dim: 2,
        },
    }
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

fn random_stack(n: usize, rng: &mut ChaCha8Rng) -> Vec<Arc<Tensor>> {
    (0..7)
        .map(|_| {
            let mut a = Tensor::identity(n);
            for i in 0..n {
                for j in i + 1..n {
                    let v = rng.random_range(0.0..1.0);
                    a.set(i, j, v);
                    a.set(j, i, v);
                }
            }
            Arc::new(crate::graphs::normalize(&a))
        })
        .collect()
}

fn encoding(seed: u64) -> CalendarEncoding {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes = [0; 6];
    for (c, n) in classes.iter_mut().zip(CALENDAR_CLASSES) {
        *c = rng.random_range(0..n);
    }
    CalendarEncoding::new(classes).unwrap()
}

fn zero_all(model: &mut ForecastModel, prefix: &str) {
    let names: Vec<String> = model.names().iter().filter(|n| n.starts_with(prefix)).cloned().collect();
    for n in names {
        let (r, c) = model.param(&n).unwrap().shape();
        model.set_param(&n, Tensor::zeros(r, c)).unwrap();
    }
}

#[test]
fn zero_embedding_gives_zero_vector() {
    let dims = ModelDims { n_od: 3, features: 4, embedding: true };
    let mut m = ForecastModel::init(&ModelConfig::default(), dims, 1).unwrap();
    zero_all(&mut m, "emb");
    zero_all(&mut m, "module");
    assert!(embed_time(&m, &encoding(1)).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn identical_calendars_identical_embedding() {
    let dims = ModelDims { n_od: 3, features: 4, embedding: true };
    let m = ForecastModel::init(&ModelConfig::default(), dims, 1).unwrap();
    assert_eq!(embed_time(&m, &encoding(4)).unwrap(), embed_time(&m, &encoding(4)).unwrap());
    assert_eq!(embed_time(&m, &encoding(4)).unwrap().len(), 10);
}

fn mat_vec(v: &[f64], w: &Tensor, b: &Tensor, relu: bool) -> Vec<f64> {
    (0..w.cols())
        .map(|o| {
            let s: f64 = v.iter().enumerate().map(|(k, x)| x * w.get(k, o)).sum::<f64>() + b.get(0, o);
            if relu {
                s.max(0.0)
            } else {
                s
            }
        })
        .collect()
}

#[test]
fn single_branch_chain_by_hand() {
    let dims = ModelDims { n_od: 3, features: 4, embedding: true };
    let mut m = ForecastModel::init(&tiny_config(2, 1), dims, 3).unwrap();
    for i in 1..6 {
        zero_all(&mut m, &format!("emb{i}."));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for name in ["emb0.b", "module0.b", "module1.b", "module2.b"] {
        let (r, c) = m.param(name).unwrap().shape();
        m.set_param(name, random(r, c, &mut rng)).unwrap();
    }
    let enc = encoding(7);
    let got = embed_time(&m, &enc).unwrap();

    let p = |n: &str| m.param(n).unwrap().clone();
    let e = p("emb0.table").row(enc.classes[0]).to_vec();
    let d = mat_vec(&e, &p("emb0.w"), &p("emb0.b"), true);
    let mut concat = d.clone();
    concat.extend(std::iter::repeat_n(0.0, 10));
    let h1 = mat_vec(&concat, &p("module0.w"), &p("module0.b"), true);
    let h2 = mat_vec(&h1, &p("module1.w"), &p("module1.b"), true);
    let out = mat_vec(&h2, &p("module2.w"), &p("module2.b"), false);
    for (a, b) in got.iter().zip(&out) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn shape_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in [5, 50, 130] {
        let stack = random_stack(n, &mut rng);
        for l in [4, 9] {
            for embedding in [false, true] {
                let mut cfg = tiny_config(4, 1);
                cfg.embedding.output_dim = 10;
                let dims = ModelDims { n_od: n, features: l, embedding };
                let m = ForecastModel::init(&cfg, dims, 1).unwrap();
                let x = random(n, l, &mut rng);
                let e = embed_time(&m, &encoding(1)).unwrap();
                let p = if embedding { 10 } else { 0 };
                assert_eq!(tile_and_concat(&x, &e).shape(), (n, l + p));
                let y = m.forward(&x, &encoding(1), &stack, Mode::Infer, &mut rng).unwrap();
                assert_eq!(y.len(), n);
            }
        }
    }
}

#[test]
fn zero_parameters_give_zero_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dims = ModelDims { n_od: 5, features: 9, embedding: true };
    let mut m = ForecastModel::init(&tiny_config(3, 2), dims, 1).unwrap();
    zero_all(&mut m, "");
    let stack = random_stack(5, &mut rng);
    let batch = Batch::new(&[&random(5, 9, &mut rng)], vec![encoding(2)]).unwrap();
    assert!(m.forward_raw(&batch, &stack).unwrap().iter().all(|&v| v == 0.0));
}

fn hand_gru(m: &ForecastModel, x: &Tensor, h: usize) -> Vec<f64> {
    let n = x.rows();
    let p = |s: &str| m.param(s).unwrap().clone();
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let gate = |g: &str, xs: &[f64], hs: &[f64], o: usize| {
        let (w, u, b) = (p(&format!("temporal.{g}.w")), p(&format!("temporal.{g}.u")), p(&format!("temporal.{g}.b")));
        let mut s = b.get(0, o);
        for (k, xv) in xs.iter().enumerate() {
            s += xv * w.get(k, o);
        }
        for (k, hv) in hs.iter().enumerate() {
            s += hv * u.get(k, o);
        }
        s
    };
    let mut state = vec![0.0; h];
    for step in 0..4 {
        let xs: Vec<f64> = (0..n).map(|i| x.get(i, step)).collect();
        let z: Vec<f64> = (0..h).map(|o| sig(gate("z", &xs, &state, o))).collect();
        let r: Vec<f64> = (0..h).map(|o| sig(gate("r", &xs, &state, o))).collect();
        let rh: Vec<f64> = r.iter().zip(&state).map(|(a, b)| a * b).collect();
        let cand: Vec<f64> = (0..h).map(|o| gate("n", &xs, &rh, o).tanh()).collect();
        state = (0..h).map(|o| (1.0 - z[o]) * cand[o] + z[o] * state[o]).collect();
    }
    state
}

fn block(m: &ForecastModel, prefix: &str) -> RmgcBlock {
    RmgcBlock {
        w: m.param(&format!("{prefix}.w")).unwrap().clone(),
        b: m.param(&format!("{prefix}.b")).unwrap().clone(),
        proj: m.param(&format!("{prefix}.proj")).cloned(),
    }
}

#[test]
fn tiny_model_equals_composed_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, h) = (5, 3);
    let dims = ModelDims { n_od: n, features: 6, embedding: true };
    let mut m = ForecastModel::init(&tiny_config(h, 1), dims, 9).unwrap();
    let names: Vec<String> = m.names().iter().filter(|s| s.ends_with(".b")).cloned().collect();
    for name in names {
        let (r, c) = m.param(&name).unwrap().shape();
        m.set_param(&name, random(r, c, &mut rng)).unwrap();
    }
    let stack = random_stack(n, &mut rng);
    let x = random(n, 6, &mut rng);
    let enc = encoding(3);

    let e = embed_time(&m, &enc).unwrap();
    let spatial = naive_rmgc(&block(&m, "enc0"), &tile_and_concat(&x, &e), &stack, true);
    let temporal = hand_gru(&m, &x, h);
    let joined = tile_and_concat(&spatial, &temporal);
    let decoded = naive_rmgc(&block(&m, "dec0"), &joined, &stack, true);
    let head_w = m.param("head.w").unwrap();
    let head_b = m.param("head.b").unwrap().get(0, 0);
    let want: Vec<f64> = (0..n)
        .map(|i| (0..h).map(|k| decoded.get(i, k) * head_w.get(k, 0)).sum::<f64>() + head_b)
        .collect();

    let got = m
        .forward_raw(&Batch::new(&[&x], vec![enc]).unwrap(), &stack)
        .unwrap();
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    let clamped = m.forward(&x, &enc, &stack, Mode::Infer, &mut rng).unwrap();
    for (c, r) in clamped.iter().zip(&got) {
        assert_eq!(*c, r.max(0.0));
    }
}

/// Max relative error of analytic vs central-difference gradients over every parameter entry.
pub(crate) fn full_model_gradient_error(cell: CellType, activation: Activation) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 5;
    let mut cfg = tiny_config(3, 1);
    cfg.cell = cell;
    cfg.activation = activation;
    let dims = ModelDims { n_od: n, features: 9, embedding: true };
    let mut m = ForecastModel::init(&cfg, dims, 4).unwrap();
    let names: Vec<String> = m.names().iter().filter(|s| s.ends_with(".b")).cloned().collect();
    for name in names {
        let (r, c) = m.param(&name).unwrap().shape();
        m.set_param(&name, random(r, c, &mut rng).scale(0.3)).unwrap();
    }
    let stack = random_stack(n, &mut rng);
    let xs = [random(n, 9, &mut rng), random(n, 9, &mut rng)];
    let batch = Batch::new(&[&xs[0], &xs[1]], vec![encoding(1), encoding(2)]).unwrap();
    let targets = random(2 * n, 1, &mut rng);
    let (_, grads) = m.loss_and_grads(&batch, &targets, &stack, Mode::Infer, &mut rng).unwrap();
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for p in 0..m.params().len() {
        for k in 0..m.params()[p].len() {
            let orig = m.params()[p].data()[k];
            m.params_mut()[p].data_mut()[k] = orig + step;
            let (up, _) = m.loss_and_grads(&batch, &targets, &stack, Mode::Infer, &mut rng).unwrap();
            m.params_mut()[p].data_mut()[k] = orig - step;
            let (down, _) = m.loss_and_grads(&batch, &targets, &stack, Mode::Infer, &mut rng).unwrap();
            m.params_mut()[p].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            let analytic = grads[p].data()[k];
            let err = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn full_model_gradients_match_finite_differences() {
    for cell in [CellType::Gru, CellType::Lstm] {
        let err = full_model_gradient_error(cell, Activation::Tanh);
        assert!(err < 1e-4, "{cell:?}: {err}");
    }
}

#[test]
fn embedding_path_isolated() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 5;
    let cfg = tiny_config(3, 2);
    let t_dims = ModelDims { n_od: n, features: 4, embedding: true };
    let mut t = ForecastModel::init(&cfg, t_dims, 2).unwrap();
    zero_all(&mut t, "module2");
    let x_dims = ModelDims { n_od: n, features: 4, embedding: false };
    let mut xm = ForecastModel::init(&cfg, x_dims, 2).unwrap();
    // copy shared parameters, dropping embedding rows from the first encoder block
    let p = cfg.embedding.output_dim;
    for name in xm.names().to_vec() {
        let src = t.param(&name).unwrap();
        let value = if name == "enc0.w" {
            let f_in = 4 + p;
            let mut rows = Vec::new();
            for u in 0..7 {
                for r in 0..4 {
                    rows.push(src.row(u * f_in + r).to_vec());
                }
            }
            Tensor::from_rows(&rows).unwrap()
        } else if name == "enc0.proj" {
            Tensor::from_rows(&(0..4).map(|r| src.row(r).to_vec()).collect::<Vec<_>>()).unwrap()
        } else {
            src.clone()
        };
        xm.set_param(&name, value).unwrap();
    }
    let stack = random_stack(n, &mut rng);
    let x = random(n, 4, &mut rng);
    let enc = encoding(5);
    let a = t.forward_raw(&Batch::new(&[&x], vec![enc]).unwrap(), &stack).unwrap();
    let b = xm.forward_raw(&Batch::new(&[&x], vec![enc]).unwrap(), &stack).unwrap();
    assert_eq!(a, b);
}

#[test]
fn init_is_seeded() {
    let dims = ModelDims { n_od: 5, features: 4, embedding: true };
    let cfg = ModelConfig::default();
    let a = ForecastModel::init(&cfg, dims, 1).unwrap();
    let b = ForecastModel::init(&cfg, dims, 1).unwrap();
    let c = ForecastModel::init(&cfg, dims, 2).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.params(), c.params());
    for (name, t) in a.names().iter().zip(a.params()) {
        if name.ends_with(".b") {
            assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
        } else {
            let bound = glorot_bound(t.rows(), t.cols());
            assert!(t.data().iter().all(|v| v.abs() <= bound), "{name}");
        }
    }
}

#[test]
fn dropout_only_in_train_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 5;
    let mut cfg = tiny_config(3, 1);
    cfg.dropout = 0.5;
    let dims = ModelDims { n_od: n, features: 4, embedding: false };
    let m = ForecastModel::init(&cfg, dims, 1).unwrap();
    let stack = random_stack(n, &mut rng);
    let x = random(n, 4, &mut rng);
    let enc = encoding(1);
    let i1 = m.forward(&x, &enc, &stack, Mode::Infer, &mut rng).unwrap();
    let i2 = m.forward(&x, &enc, &stack, Mode::Infer, &mut rng).unwrap();
    assert_eq!(i1, i2);
    let t1 = m.forward(&x, &enc, &stack, Mode::Train, &mut rng).unwrap();
    let t2 = m.forward(&x, &enc, &stack, Mode::Train, &mut rng).unwrap();
    assert_ne!(t1, t2);
}

#[test]
fn dropout_expectation_on_linear_toy() {
    // identity graphs, identity activation, one block each side: output is
    // linear in every mask, so its mean over masks equals the inference output
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 3;
    let mut cfg = tiny_config(2, 1);
    cfg.activation = Activation::Identity;
    cfg.decoder_blocks = 1;
    cfg.dropout = 0.3;
    let dims = ModelDims { n_od: n, features: 4, embedding: false };
    let mut m = ForecastModel::init(&cfg, dims, 1).unwrap();
    // freeze the decoder conv so only the encoder mask is random
    zero_all(&mut m, "dec0.w");
    let stack = vec![Arc::new(Tensor::identity(n)); 7];
    let x = random(n, 4, &mut rng);
    let enc = encoding(1);
    let reference = m
        .forward_raw(&Batch::new(&[&x], vec![enc]).unwrap(), &stack)
        .unwrap();
    let draws = 20_000;
    let mut mean = vec![0.0; n];
    let mut sq = vec![0.0; n];
    for _ in 0..draws {
        let y = m.forward(&x, &enc, &stack, Mode::Train, &mut rng).unwrap();
        for i in 0..n {
            mean[i] += y[i];
            sq[i] += y[i] * y[i];
        }
    }
    for i in 0..n {
        let mu = mean[i] / draws as f64;
        let var = sq[i] / draws as f64 - mu * mu;
        let se = (var / draws as f64).sqrt();
        assert!((mu - reference[i]).abs() <= 4.0 * se + 1e-12, "{mu} vs {}", reference[i]);
    }
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 5;
    let dims = ModelDims { n_od: n, features: 9, embedding: true };
    let m = ForecastModel::init(&tiny_config(3, 2), dims, 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&m, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, m);
    let stack = random_stack(n, &mut rng);
    let batch = Batch::new(&[&random(n, 9, &mut rng)], vec![encoding(1)]).unwrap();
    assert_eq!(
        m.forward_raw(&batch, &stack).unwrap(),
        back.forward_raw(&batch, &stack).unwrap()
    );
}

#[test]
fn shape_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dims = ModelDims { n_od: 5, features: 4, embedding: false };
    let m = ForecastModel::init(&tiny_config(3, 1), dims, 1).unwrap();
    let stack = random_stack(5, &mut rng);
    let wrong = random(5, 9, &mut rng);
    assert!(matches!(
        m.forward(&wrong, &encoding(1), &stack, Mode::Infer, &mut rng),
        Err(ModelError::Shape(_))
    ));
    let mut bad = ModelConfig::default();
    bad.dropout = 1.0;
    bad.hidden_spatial = 0;
    assert_eq!(bad.problems().len(), 2);
}
