//! Layers with hand-written backward passes, recurrent cells, the five
//! network architectures and the minibatch training loop.

mod layers;
mod model;
mod recurrent;
mod train;

pub use layers::{Conv1d, Conv1dCache, Dense, DenseCache, Dropout, DropoutCache};
pub use model::{
    build_model, encode_batch, output_probability, ForwardPass, Layer, LayerCache, LayerKind, LayerSpec, Model,
    ModelKind,
};
pub use recurrent::{
    bidirectional_scan, gru_cell_step, lstm_cell_step, rnn_cell_step, Bidirectional, BidirectionalCache, CellKind,
    Recurrent, RecurrentCache, GRU_CONVENTION,
};
pub use train::{encode_corpus, evaluate_loss, train, train_encoded, TrainConfig, TrainHistory};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{split, synth_corpus};
    use crate::encoder::{encode, Vocabulary};
    use crate::numerics::{bce_loss, finite_diff_grad, relative_error, Activation, Matrix, FD_STEP};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
    }

    /// Checks every parameter tensor and the input of `layer` against
    /// central differences of `L = sum(dy * forward(x))`.
    fn check_layer(layer: &Layer, x: &Matrix, rng: &mut ChaCha8Rng) -> f64 {
        let (y, cache) = layer.forward(x, None).unwrap();
        let dy = random_matrix(y.rows(), y.cols(), 1.0, rng);
        let (dx, grads) = layer.backward(&cache, &dy);
        let objective = |l: &Layer, x: &Matrix| -> f64 {
            let (y, _) = l.forward(x, None).unwrap();
            y.as_slice().iter().zip(dy.as_slice()).map(|(a, b)| a * b).sum()
        };
        let num_dx = finite_diff_grad(
            |v| objective(layer, &Matrix::from_vec(x.rows(), x.cols(), v.to_vec()).unwrap()),
            x.as_slice(),
            FD_STEP,
        )
        .unwrap();
        let mut worst = relative_error(dx.as_slice(), &num_dx);
        for (pi, g) in grads.iter().enumerate() {
            let base = layer.params()[pi].1.clone();
            let num = finite_diff_grad(
                |v| {
                    let mut probe = layer.clone();
                    *probe.params_mut()[pi] = Matrix::from_vec(base.rows(), base.cols(), v.to_vec()).unwrap();
                    objective(&probe, x)
                },
                base.as_slice(),
                FD_STEP,
            )
            .unwrap();
            worst = worst.max(relative_error(g.as_slice(), &num));
        }
        worst
    }

    fn randomize(layer: &mut Layer, rng: &mut ChaCha8Rng) {
        for p in layer.params_mut() {
            let (r, c) = p.shape();
            *p = random_matrix(r, c, 0.5, rng);
        }
    }

    #[test]
    fn dense_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for act in [Activation::Sigmoid, Activation::Tanh, Activation::Softplus, Activation::Linear] {
            let mut l = Layer::Dense(Dense::zeros(4, 3, act));
            randomize(&mut l, &mut rng);
            let x = random_matrix(3, 4, 1.0, &mut rng);
            assert!(check_layer(&l, &x, &mut rng) < 1e-6, "{act}");
        }
    }

    #[test]
    fn conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut l = Layer::Conv1d(Conv1d::zeros(7, 3, 4, 3, Activation::Tanh).unwrap());
        randomize(&mut l, &mut rng);
        let x = random_matrix(2, 21, 1.0, &mut rng);
        assert!(check_layer(&l, &x, &mut rng) < 1e-6);
    }

    #[test]
    fn recurrent_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for cell in [CellKind::Simple, CellKind::Gru, CellKind::Lstm] {
            for reverse in [false, true] {
                let mut l = Layer::Recurrent(Recurrent::zeros(cell, 20, 3, 4, reverse));
                randomize(&mut l, &mut rng);
                let x = random_matrix(2, 60, 1.0, &mut rng);
                let err = check_layer(&l, &x, &mut rng);
                assert!(err < 1e-5, "{cell} reverse={reverse}: {err}");
            }
        }
    }

    #[test]
    fn bidirectional_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut l = Layer::Bidirectional(Bidirectional::zeros(CellKind::Lstm, 6, 3, 2));
        randomize(&mut l, &mut rng);
        let x = random_matrix(2, 18, 1.0, &mut rng);
        assert!(check_layer(&l, &x, &mut rng) < 1e-5);
    }

    #[test]
    fn whole_model_gradient_matches_bce() {
        let v = Vocabulary::standard();
        let names: Vec<_> = ["ANA", "JOAO", "BIA"].iter().map(|n| encode(n, &v).unwrap()).collect();
        let labels = [0.0, 1.0, 0.0];
        let x = encode_batch(&names);
        let model = build_model(ModelKind::Gru, 4).unwrap();
        let pass = model.forward(&x, None).unwrap();
        let grads = model.backward(&pass, &labels);
        let head = model.layers.len() - 1;
        let base = model.layers[head].params()[0].1.clone();
        let num = finite_diff_grad(
            |w| {
                let mut m = model.clone();
                *m.layers[head].params_mut()[0] = Matrix::from_vec(base.rows(), base.cols(), w.to_vec()).unwrap();
                bce_loss(&m.forward(&x, None).unwrap().probs, &labels).unwrap().0
            },
            base.as_slice(),
            FD_STEP,
        )
        .unwrap();
        let analytic = &grads[grads.len() - 2];
        assert!(relative_error(analytic.as_slice(), &num) < 1e-6);
    }

    #[test]
    fn patience_zero_one_epoch() {
        let corpus = synth_corpus(200, 3);
        let parts = split(&corpus, 3).unwrap();
        let mut m = build_model(ModelKind::Rnn, 3).unwrap();
        let cfg = TrainConfig {
            max_epochs: 1,
            patience: 0,
            seed: 3,
            ..TrainConfig::default()
        };
        let h = train(&mut m, &parts, &cfg).unwrap();
        assert_eq!(h.epochs(), 1);
        assert_eq!(h.best_epoch, 0);
    }

    #[test]
    fn training_is_deterministic_and_keeps_best_epoch() {
        let corpus = synth_corpus(300, 5);
        let parts = split(&corpus, 5).unwrap();
        let cfg = TrainConfig {
            max_epochs: 6,
            patience: 2,
            batch_size: 32,
            lr: 0.01,
            seed: 5,
        };
        let run = || {
            let mut m = build_model(ModelKind::Mlp, 5).unwrap();
            let h = train(&mut m, &parts, &cfg).unwrap();
            (m, h)
        };
        let (m1, h1) = run();
        let (m2, h2) = run();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
        let min = h1.val_loss.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(h1.val_loss[h1.best_epoch], min);
        let (xv, yv) = encode_corpus(&parts.validation).unwrap();
        assert_eq!(evaluate_loss(&m1, &xv, &yv).unwrap().0, min);
        assert!(h1.to_csv().starts_with("epoch,train_loss,val_loss,train_acc,val_acc\n1,"));
    }

    #[test]
    fn overfits_small_set() {
        let corpus = synth_corpus(32, 8);
        let (x, y) = encode_corpus(&corpus).unwrap();
        for kind in ModelKind::ALL {
            let mut m = build_model(kind, 8).unwrap();
            let cfg = TrainConfig {
                max_epochs: 50,
                patience: 50,
                batch_size: 8,
                lr: 0.005,
                seed: 8,
            };
            let h = train_encoded(&mut m, (&x, &y), (&x, &y), &cfg).unwrap();
            assert_eq!(h.epochs(), 50, "{kind}");
            assert!(h.train_loss[49] < h.train_loss[0], "{kind}: {:?}", h.train_loss);
        }
    }

    #[test]
    fn l2_shrinks_recurrent_weights() {
        let corpus = synth_corpus(120, 2);
        let (x, y) = encode_corpus(&corpus).unwrap();
        let norm_with = |l2: f64| {
            let mut specs = ModelKind::BiLstm.architecture();
            specs[0].l2 = l2;
            let mut m = Model::from_specs(ModelKind::BiLstm, specs, 2).unwrap();
            let cfg = TrainConfig {
                max_epochs: 5,
                patience: 5,
                batch_size: 32,
                lr: 0.01,
                seed: 2,
            };
            train_encoded(&mut m, (&x, &y), (&x, &y), &cfg).unwrap();
            m.layers[0].params().iter().filter(|(n, _)| n.ends_with('u')).map(|(_, w)| w.sum_squares()).sum::<f64>()
        };
        assert!(norm_with(0.002) < norm_with(0.0));
    }

    #[test]
    fn empty_partitions_rejected() {
        let mut m = build_model(ModelKind::Rnn, 0).unwrap();
        let v = [encode("ANA", &Vocabulary::standard()).unwrap()];
        let r = train_encoded(&mut m, (&[], &[]), (&v, &[0.0]), &TrainConfig::default());
        assert!(matches!(r, Err(crate::Error::EmptyPartition("train"))));
        let r = train_encoded(&mut m, (&v, &[0.0]), (&[], &[]), &TrainConfig::default());
        assert!(matches!(r, Err(crate::Error::EmptyPartition("validation"))));
    }
}
