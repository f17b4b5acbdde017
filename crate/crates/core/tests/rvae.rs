use flowvae::rvae::*;
use flowvae_nn::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng, len: usize, f: usize) -> Instance {
    (0..len)
        .map(|_| (0..f).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect()
}

fn zero_params<M: SequenceVae>(m: &mut M) {
    let ids: Vec<_> = m.params().ids().collect();
    for id in ids {
        m.params_mut().get_mut(id).data_mut().fill(0.0);
    }
}

fn tiny() -> RvaeModel {
    RvaeModel::new(RvaeConfig::new(6, 8, 4), 11).unwrap()
}

/// Loss with a fixed noise draw, so it is a deterministic function of the parameters.
fn fixed_loss<M: SequenceVae>(
    m: &M,
    batch: &SeqBatch,
    eps: &Tensor,
    beta: f64,
) -> (f64, Vec<Tensor>) {
    let mut g = Graph::new();
    let p = m.params().bind(&mut g);
    let out = m.forward(&mut g, &p, batch, Latent::Fixed(eps)).unwrap();
    let terms = vae_loss(&mut g, &out, batch, beta).unwrap();
    let mut grads = g.backward(terms.total).unwrap();
    (
        g.value(terms.total).item(),
        m.params().collect_grads(&p, &mut grads),
    )
}

fn central_difference_check<M: SequenceVae>(m: &mut M, batch: &SeqBatch, eps: &Tensor) {
    const H: f64 = 1e-5;
    let (_, analytic) = fixed_loss(m, batch, eps, 0.7);
    let ids: Vec<_> = m.params().ids().collect();
    let mut worst = 0.0f64;
    for id in ids {
        for k in 0..m.params().get(id).len() {
            let orig = m.params().get(id).data()[k];
            m.params_mut().get_mut(id).data_mut()[k] = orig + H;
            let up = fixed_loss(m, batch, eps, 0.7).0;
            m.params_mut().get_mut(id).data_mut()[k] = orig - H;
            let down = fixed_loss(m, batch, eps, 0.7).0;
            m.params_mut().get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * H);
            let a = analytic[id.index()].data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            assert!(
                rel < 1e-3,
                "{}[{k}]: analytic {a:e}, numeric {numeric:e}, rel {rel:e}",
                m.params().name(id)
            );
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-3);
}

#[test]
fn full_rvae_loss_matches_central_differences() {
    let mut m = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let seqs = [
        random_instance(&mut rng, 3, 6),
        random_instance(&mut rng, 2, 6),
    ];
    let batch = SeqBatch::new(&seqs).unwrap();
    let eps =
        Tensor::from_rows(2, 4, (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    central_difference_check(&mut m, &batch, &eps);
}

#[test]
fn mlp_vae_loss_matches_central_differences() {
    let cfg = MlpVaeConfig {
        features: 6,
        hidden: vec![5, 7],
        latent: 3,
    };
    let mut m = MlpVaeModel::new(cfg, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let seqs = [
        random_instance(&mut rng, 3, 6),
        random_instance(&mut rng, 1, 6),
    ];
    let batch = SeqBatch::new(&seqs).unwrap();
    let eps =
        Tensor::from_rows(6, 3, (0..18).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    central_difference_check(&mut m, &batch, &eps);
}

#[test]
fn zero_weights_encode_to_zero() {
    let mut m = tiny();
    zero_params(&mut m);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch = SeqBatch::new(&[random_instance(&mut rng, 3, 6)]).unwrap();
    let mut g = Graph::new();
    let p = m.params().bind(&mut g);
    let (mu, lv) = m.encode(&mut g, &p, &batch).unwrap();
    assert!(g.value(mu).data().iter().all(|&v| v == 0.0));
    assert!(g.value(lv).data().iter().all(|&v| v == 0.0));
    let ys = m.decode(&mut g, &p, mu, 4).unwrap();
    assert_eq!(ys.len(), 4);
    for y in ys {
        assert!(g.value(y).data().iter().all(|&v| v == 0.5));
    }
}

#[test]
fn default_latent_width() {
    let m = RvaeModel::new(RvaeConfig::new(40, 512, 100), 0).unwrap();
    let batch = SeqBatch::new(&[vec![vec![0.1; 40]; 2]]).unwrap();
    let mut g = Graph::new();
    let p = m.params().bind(&mut g);
    let (mu, lv) = m.encode(&mut g, &p, &batch).unwrap();
    assert_eq!(g.value(mu).shape(), [1, 100]);
    assert_eq!(g.value(lv).shape(), [1, 100]);
}

#[test]
fn encoder_is_order_sensitive() {
    let m = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_instance(&mut rng, 3, 6);
    let mut b = a.clone();
    b.swap(0, 2);
    let state = |inst: &Instance| {
        let batch = SeqBatch::new(std::slice::from_ref(inst)).unwrap();
        let mut g = Graph::new();
        let p = m.params().bind(&mut g);
        let s = m.encode_state(&mut g, &p, &batch).unwrap();
        g.value(s).clone()
    };
    assert_ne!(state(&a), state(&b));
}

#[test]
fn reparameterize_limits_and_monte_carlo_mean() {
    let mut g = Graph::new();
    let mu = g.constant(Tensor::from_rows(1, 2, vec![0.3, -1.2]).unwrap());
    let tiny_var = g.constant(Tensor::filled(1, 2, -200.0));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let z = reparameterize(&mut g, mu, tiny_var, Latent::Sample(&mut rng)).unwrap();
    for (a, b) in g.value(z).data().iter().zip([0.3, -1.2]) {
        assert!((a - b).abs() < 1e-30);
    }
    let z = reparameterize(&mut g, mu, tiny_var, Latent::Mean).unwrap();
    assert_eq!(z, mu);

    let zero = g.constant(Tensor::zeros(1, 3));
    let eps = Tensor::from_rows(1, 3, vec![1.0, -0.5, 2.0]).unwrap();
    let z = reparameterize(&mut g, zero, zero, Latent::Fixed(&eps)).unwrap();
    assert_eq!(g.value(z), &eps);

    // Sample mean of 10^4 draws lies within 3 sigma / sqrt(10^4) of mu.
    let n = 10_000;
    let mu_t = Tensor::filled(n, 1, 0.7);
    let lv_t = Tensor::filled(n, 1, (0.5f64).ln() * 2.0);
    let mu = g.constant(mu_t);
    let lv = g.constant(lv_t);
    let z = reparameterize(&mut g, mu, lv, Latent::Sample(&mut rng)).unwrap();
    let mean = g.value(z).sum() / n as f64;
    assert!((mean - 0.7).abs() < 3.0 * 0.5 / 100.0, "mean {mean}");
}

#[test]
fn decoder_outputs_in_unit_interval() {
    let m = tiny();
    let mut g = Graph::new();
    let p = m.params().bind(&mut g);
    let z = g
        .constant(Tensor::from_rows(2, 4, vec![5.0, -3.0, 1.0, 0.0, 9.0, 9.0, -9.0, 2.0]).unwrap());
    let ys = m.decode(&mut g, &p, z, 1).unwrap();
    assert_eq!(ys.len(), 1);
    assert_eq!(g.value(ys[0]).shape(), [2, 6]);
    let ys = m.decode(&mut g, &p, z, 5).unwrap();
    assert!(ys
        .iter()
        .all(|&y| g.value(y).data().iter().all(|&v| v > 0.0 && v < 1.0)));
    assert!(m.decode(&mut g, &p, z, 0).is_err());
}

#[test]
fn kl_and_bce_reference_values() {
    let mut g = Graph::new();
    let zero = g.constant(Tensor::zeros(3, 4));
    let kl = gaussian_kl(&mut g, zero, zero).unwrap();
    assert!(g.value(kl).data().iter().all(|&v| v == 0.0));

    let half = Tensor::filled(2, 5, 0.5);
    let recon = g.constant(half.clone());
    let rows = bce_rows(&mut g, recon, &half).unwrap();
    for &v in g.value(rows).data() {
        assert!((v - 5.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    // Saturated reconstructions stay finite through the clamp.
    let hard = g.constant(Tensor::from_rows(1, 2, vec![0.0, 1.0]).unwrap());
    let target = Tensor::from_rows(1, 2, vec![1.0, 0.0]).unwrap();
    let rows = bce_rows(&mut g, hard, &target).unwrap();
    let v = g.value(rows).item();
    assert!(v.is_finite());
    assert!((v - 2.0 * -(EPS.ln())).abs() < 1e-6);
}

#[test]
fn kl_is_non_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut g = Graph::new();
    for _ in 0..50 {
        let mu = g.constant(
            Tensor::from_rows(1, 3, (0..3).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap(),
        );
        let lv = g.constant(
            Tensor::from_rows(1, 3, (0..3).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap(),
        );
        let kl = gaussian_kl(&mut g, mu, lv).unwrap();
        assert!(g.value(kl).item() >= 0.0);
    }
}

#[test]
fn masked_positions_contribute_nothing() {
    let m = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let short = random_instance(&mut rng, 2, 6);
    let long = random_instance(&mut rng, 5, 6);
    let alone = timestep_scores(&m, std::slice::from_ref(&short), 8, 1).unwrap();
    let padded = timestep_scores(&m, &[long.clone(), short.clone()], 8, 1).unwrap();
    assert_eq!(padded[1].len(), 2);
    assert_eq!(alone[0], padded[1]);

    let batch = SeqBatch::new(&[long, short]).unwrap();
    let row_sums: Vec<f64> = (0..2)
        .map(|b| {
            (0..batch.steps * batch.batch)
                .map(|k| batch.select.get(b, k))
                .sum()
        })
        .collect();
    assert!((row_sums[0] - 1.0).abs() < 1e-12 && (row_sums[1] - 1.0).abs() < 1e-12);
    for t in 2..5 {
        assert_eq!(batch.select.get(1, batch.row(t, 1)), 0.0);
    }
}

#[test]
fn scores_are_deterministic_and_above_entropy_bound() {
    let m = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data: Vec<Instance> = (0..9)
        .map(|i| random_instance(&mut rng, 1 + i % 4, 6))
        .collect();
    let a = timestep_scores(&m, &data, 4, 1).unwrap();
    let b = timestep_scores(&m, &data, 4, 3).unwrap();
    assert_eq!(a, b);
    for (inst, s) in data.iter().zip(&a) {
        for (row, &score) in inst.iter().zip(s) {
            let entropy: f64 = row
                .iter()
                .map(|&y: &f64| -(y * y.ln() + (1.0 - y) * (1.0 - y).ln()))
                .sum();
            assert!(score >= entropy - 1e-9);
        }
    }
}

#[test]
fn exact_reconstruction_scores_the_entropy() {
    let mut g = Graph::new();
    let y = Tensor::from_rows(1, 3, vec![0.2, 0.5, 0.9]).unwrap();
    let recon = g.constant(y.clone());
    let rows = bce_rows(&mut g, recon, &y).unwrap();
    let h: f64 = y
        .data()
        .iter()
        .map(|&p| -(p * p.ln() + (1.0 - p) * (1.0 - p).ln()))
        .sum();
    assert!((g.value(rows).item() - h).abs() < 1e-12);
}

fn constant_pattern() -> Instance {
    vec![vec![0.9, 0.1, 0.8, 0.2, 0.7, 0.3]; 3]
}

fn quick_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        lr: 0.01,
        beta_anneal_steps: 20,
        seed: 1,
        ..TrainConfig::default()
    }
}

#[test]
fn training_reduces_loss_and_perturbations_score_higher() {
    let mut m = tiny();
    let train = vec![constant_pattern(); 16];
    let outcome = train_semisupervised(&mut m, &train, &[], &quick_cfg(40)).unwrap();
    let recs: Vec<_> = outcome.log.phase(Phase::Train).collect();
    assert_eq!(recs.len(), 40);
    assert!(recs.last().unwrap().recon < recs[0].recon);

    let mut perturbed = constant_pattern();
    perturbed[1] = vec![0.1, 0.9, 0.2, 0.8, 0.3, 0.7];
    let s = timestep_scores(&m, &[constant_pattern(), perturbed], 8, 1).unwrap();
    assert!(s[1][1] > s[0][1], "{:?}", s);
}

#[test]
fn beta_schedule_is_linear() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.beta(0), 0.0);
    assert_eq!(cfg.beta(250), 0.5);
    assert_eq!(cfg.beta(500), 1.0);
    assert_eq!(cfg.beta(10_000), 1.0);
}

#[test]
fn same_seed_same_checkpoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let train: Vec<Instance> = (0..10).map(|_| random_instance(&mut rng, 3, 6)).collect();
    let run = || {
        let mut m = AnyModel::new(ModelSpec::Rvae(RvaeConfig::new(6, 8, 4)), 3).unwrap();
        let out = train_semisupervised(&mut m, &train, &train[..3], &quick_cfg(3)).unwrap();
        let mut buf = Vec::new();
        save_checkpoint(
            &mut buf,
            &m,
            Some(&out.adam),
            serde_json::json!({"note": "x"}),
        )
        .unwrap();
        buf
    };
    assert_eq!(run(), run());
}

#[test]
fn validation_keeps_best_epoch() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let train: Vec<Instance> = (0..10).map(|_| random_instance(&mut rng, 3, 6)).collect();
    let mut m = tiny();
    let out = train_semisupervised(&mut m, &train, &train[..4], &quick_cfg(5)).unwrap();
    let best = out.best_epoch.unwrap();
    let rec = &out.log.records[best - 1];
    let min = out
        .log
        .records
        .iter()
        .filter_map(|r| r.val_loss)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(rec.val_loss, Some(min));
    let now = evaluate_loss(&m, &train[..4], 8, 1.0).unwrap();
    assert!((now - min).abs() < 1e-12);
}

#[test]
fn checkpoint_round_trip() {
    let m = AnyModel::new(
        ModelSpec::MlpVae(MlpVaeConfig {
            features: 4,
            hidden: vec![3],
            latent: 2,
        }),
        7,
    )
    .unwrap();
    let mut buf = Vec::new();
    save_checkpoint(&mut buf, &m, None, serde_json::Value::Null).unwrap();
    let loaded = load_checkpoint(&mut buf.as_slice()).unwrap();
    assert_eq!(loaded.model.params(), m.params());
    assert_eq!(loaded.model.spec(), m.spec());
    assert!(loaded.adam.is_none());
}

#[test]
fn empty_inputs_rejected() {
    let mut m = tiny();
    assert!(train_semisupervised(&mut m, &[], &[], &quick_cfg(1)).is_err());
    let one = vec![constant_pattern()];
    assert!(train_transfer_with_label(&mut m, &one, &[], &one, &quick_cfg(1)).is_err());
    assert!(SeqBatch::new(&[Vec::<Vec<f64>>::new()]).is_err());
    let bad = TrainConfig {
        r_s: 1.0,
        ..quick_cfg(1)
    };
    assert!(train_semisupervised(&mut m, &one, &[], &bad).is_err());
}

#[test]
fn equal_errors_give_half_margin() {
    let mut g = Graph::new();
    let s = g.constant(Tensor::from_rows(3, 1, vec![0.4, 0.4, 0.4]).unwrap());
    let t = g.constant(Tensor::from_rows(2, 1, vec![0.4, 0.4]).unwrap());
    let margin = pairwise_margin(&mut g, s, t).unwrap();
    assert_eq!(g.value(margin).item(), 0.5);
    let penalty = g.scale(margin, -1.0).unwrap();
    assert_eq!(g.value(penalty).item(), -0.5);
}

#[test]
fn pairwise_margin_matches_double_loop() {
    let neg = [0.1, 0.5, 0.3];
    let pos = [0.9, 0.2];
    let mut g = Graph::new();
    let s = g.constant(Tensor::from_rows(3, 1, neg.to_vec()).unwrap());
    let t = g.constant(Tensor::from_rows(2, 1, pos.to_vec()).unwrap());
    let got = pairwise_margin(&mut g, s, t).unwrap();
    let mut want = 0.0;
    for n in neg {
        for p in pos {
            want += 1.0 / (1.0 + (-(p - n)).exp());
        }
    }
    assert!((g.value(got).item() - want / 6.0).abs() < 1e-12);
}

#[test]
fn zero_lambda_source_loss_is_plain_vae_loss() {
    let m = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let normal = SeqBatch::new(&[
        random_instance(&mut rng, 3, 6),
        random_instance(&mut rng, 2, 6),
    ])
    .unwrap();
    let anomalous = SeqBatch::new(&[random_instance(&mut rng, 3, 6)]).unwrap();
    let eps_n = Tensor::filled(2, 4, 0.3);
    let eps_a = Tensor::filled(1, 4, -0.2);
    let mut g = Graph::new();
    let p = m.params().bind(&mut g);
    let n_out = m
        .forward(&mut g, &p, &normal, Latent::Fixed(&eps_n))
        .unwrap();
    let a_out = m
        .forward(&mut g, &p, &anomalous, Latent::Fixed(&eps_a))
        .unwrap();
    let (src, _) = source_loss(&mut g, &n_out, &normal, &a_out, &anomalous, 0.4, 0.0).unwrap();
    let plain = vae_loss(&mut g, &n_out, &normal, 0.4).unwrap();
    assert_eq!(g.value(src.total).item(), g.value(plain.total).item());
}

#[test]
fn bottom_fraction_selection() {
    let scores = [0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6, 0.0];
    let picked = select_bottom_fraction(&scores, 0.5);
    assert_eq!(picked.len(), 5);
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = sorted[4];
    assert!(picked.iter().all(|&i| scores[i] <= q));
    assert_eq!(picked, [9, 1, 5, 3, 7]);
    assert!(select_bottom_fraction(&[], 0.1).is_empty());
    assert_eq!(select_bottom_fraction(&[1.0, 1.0, 1.0, 1.0], 0.5), [0, 1]);
}

#[test]
fn transfer_steps_alternate_and_warmup_carries_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let src_n: Vec<Instance> = (0..12).map(|_| random_instance(&mut rng, 3, 6)).collect();
    let src_a: Vec<Instance> = (0..5).map(|_| random_instance(&mut rng, 3, 6)).collect();
    let tgt: Vec<Instance> = (0..10).map(|_| random_instance(&mut rng, 2, 6)).collect();
    let cfg = TrainConfig {
        batch_size: 4,
        warmup_epochs: 2,
        r_s: 0.5,
        ..quick_cfg(4)
    };

    let mut m = tiny();
    let out = train_transfer_with_label(&mut m, &src_n, &src_a, &tgt, &cfg).unwrap();
    assert_eq!(
        out.log.total_updates(Phase::Source),
        out.log.total_updates(Phase::Target)
    );
    assert_eq!(out.log.total_updates(Phase::Source), 4 * 3);
    assert_eq!(out.adam.steps_taken(), 24);

    let mut m = tiny();
    let out = train_transfer_without_label(&mut m, &src_n, &src_a, &tgt, &cfg).unwrap();
    let target: Vec<_> = out.log.phase(Phase::Target).collect();
    // Three batches per epoch cycle the 10 target instances: 4 + 4 + 2.
    for r in &target[..2] {
        assert_eq!(r.instances, 10);
    }
    // Each later batch adds round(0.5 * previous fresh batch) carried instances.
    for r in &target[2..] {
        assert_eq!(r.instances, 10 + 2 + 2);
    }
}

#[test]
fn transfer_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let src_n: Vec<Instance> = (0..6).map(|_| random_instance(&mut rng, 2, 6)).collect();
    let src_a: Vec<Instance> = (0..3).map(|_| random_instance(&mut rng, 2, 6)).collect();
    let tgt: Vec<Instance> = (0..4).map(|_| random_instance(&mut rng, 2, 6)).collect();
    let run = || {
        let mut m = tiny();
        let cfg = TrainConfig {
            warmup_epochs: 1,
            ..quick_cfg(3)
        };
        train_transfer_without_label(&mut m, &src_n, &src_a, &tgt, &cfg).unwrap();
        m.params().clone()
    };
    assert_eq!(run(), run());
}
