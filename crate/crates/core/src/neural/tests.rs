use ndarray::array;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn micro_vocab(n: usize) -> Vocabulary {
    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    tokens.extend((2..n).map(|i| format!("w{i}")));
    Vocabulary::from_tokens(tokens)
}

fn micro_config() -> EncoderConfig {
    EncoderConfig { embedding_dim: 8, num_layers: 1, num_heads: 2, feedforward_dim: 16, max_seq_len: 16, dropout: 0.0 }
}

fn micro_model(seed: u64, lambda: f64) -> ClassifierModel {
    let domains = vec!["arxiv".to_string(), "reddit".to_string(), "outfox".to_string()];
    let mut m = ClassifierModel::new(micro_vocab(20), micro_config(), domains, seed).unwrap();
    m.grl_lambda = lambda;
    m
}

fn micro_batch() -> (Vec<Vec<u32>>, Vec<Target>) {
    let batch = vec![vec![2, 5, 7, 3, 9], vec![4, 4, 11, 19], vec![13, 2, 6, 8, 10, 12]];
    let targets = vec![
        Target { label: Some(Label::MachineGenerated), domain: Some(0) },
        Target { label: Some(Label::HumanWritten), domain: Some(2) },
        Target { label: Some(Label::MachinePolished), domain: Some(1) },
    ];
    (batch, targets)
}

/// Label and domain mean cross-entropies recomputed from forward logits.
fn head_losses(m: &ClassifierModel, batch: &[Vec<u32>], targets: &[Target]) -> (f64, f64) {
    let out = m.forward(batch).unwrap();
    let labels: Vec<Label> = targets.iter().map(|t| t.label.unwrap()).collect();
    let domains: Vec<usize> = targets.iter().map(|t| t.domain.unwrap()).collect();
    let empty = ndarray::Array2::<f64>::zeros((0, m.num_domains()));
    let label = loss(out.label_logits.view(), empty.view(), &labels, &[]).unwrap();
    let empty_l = ndarray::Array2::<f64>::zeros((0, 4));
    let domain = loss(empty_l.view(), out.domain_logits.view(), &[], &domains).unwrap();
    (label, domain)
}

#[test]
fn encode_folds_case_and_truncates() {
    let v = Vocabulary::build(["the cat"], 10);
    let cfg = EncoderConfig { max_seq_len: 512, ..Default::default() };
    let e = encode("The THE the", &v, &cfg);
    assert_eq!(e.ids.len(), 3);
    assert!(e.ids.iter().all(|&i| i == e.ids[0] && i != UNK));
    let long = vec!["cat"; 600].join(" ");
    let e = encode(&long, &v, &cfg);
    assert_eq!(e.ids.len(), 512);
    assert!(e.truncated);
    let e = encode("zebra yak", &v, &cfg);
    assert_eq!(e.ids, vec![UNK, UNK]);
    let padded = pad_batch(&[vec![2, 3], vec![4]]);
    assert_eq!(padded, vec![vec![2, 3], vec![4, PAD]]);
}

#[test]
fn config_validation() {
    assert!(EncoderConfig { num_heads: 3, ..Default::default() }.validate().is_err());
    assert!(EncoderConfig { max_seq_len: 0, ..Default::default() }.validate().is_err());
    assert!(EncoderConfig::default().validate().is_ok());
}

#[test]
fn forward_shapes_and_identical_rows() {
    let m = micro_model(1, 0.0);
    let out = m.forward(&[vec![2, 3, 4]]).unwrap();
    assert_eq!(out.label_logits.dim(), (1, 4));
    assert_eq!(out.domain_logits.dim(), (1, 3));
    assert_eq!(out.pooled.dim(), (1, 8));
    let out = m.forward(&[vec![5, 6], vec![5, 6]]).unwrap();
    assert_eq!(out.label_logits.row(0), out.label_logits.row(1));
    assert_eq!(out.pooled.row(0), out.pooled.row(1));
    assert!(m.forward(&[]).is_err());
    assert!(m.forward(&[vec![25]]).is_err());
}

#[test]
fn logits_finite_over_many_seeds() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for seed in 0..100 {
        let m = micro_model(seed, 1.0);
        let len = rng.random_range(1..16);
        let seq: Vec<u32> = (0..len).map(|_| rng.random_range(0..20)).collect();
        let out = m.forward(&[seq]).unwrap();
        assert!(out.label_logits.iter().chain(out.domain_logits.iter()).all(|v| v.is_finite()));
        for row in out.label_logits.rows() {
            let p = ops::softmax(&row);
            assert!((p.sum() - 1.0).abs() < 1e-6);
        }
        for row in out.domain_logits.rows() {
            assert!((ops::softmax(&row).sum() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn grl_forward_is_identity() {
    let (batch, _) = micro_batch();
    let a = micro_model(3, 0.0).forward(&batch).unwrap();
    let b = micro_model(3, 0.9).forward(&batch).unwrap();
    assert_eq!(a, b);
    let g = GradientReversal { lambda: 2.5 };
    let x = [1.0, -2.0, 0.25];
    assert_eq!(g.forward(&x), &x);
}

#[test]
fn grl_backward_negates_and_scales() {
    let g = [0.5, -1.25, 3.0, 0.0];
    assert_eq!(grl_backward(&g, 1.0), vec![-0.5, 1.25, -3.0, -0.0]);
    assert!(grl_backward(&g, 0.0).iter().all(|v| *v == 0.0));
    assert_eq!(grl_backward(&g, 0.3), g.iter().map(|v| -0.3 * v).collect::<Vec<_>>());
}

#[test]
fn padding_does_not_change_pooled_features() {
    let m = micro_model(4, 0.0);
    let a = m.forward(&[vec![3, 4, 5]]).unwrap();
    let b = m.forward(&[vec![3, 4, 5, PAD, PAD, PAD]]).unwrap();
    assert_eq!(a.pooled, b.pooled);
    let padded = pad_batch(&[vec![3, 4, 5], vec![6, 7, 8, 9, 10]]);
    let c = m.forward(&padded).unwrap();
    assert_eq!(c.pooled.row(0), a.pooled.row(0));
}

#[test]
fn init_is_seed_deterministic() {
    assert_eq!(micro_model(9, 0.0).params(), micro_model(9, 0.0).params());
    assert_ne!(micro_model(9, 0.0).params(), micro_model(10, 0.0).params());
}

#[test]
fn loss_examples() {
    let perfect = array![[50.0, 0.0, 0.0, 0.0]];
    let none = ndarray::Array2::<f64>::zeros((0, 2));
    let l = loss(perfect.view(), none.view(), &[Label::HumanWritten], &[]).unwrap();
    assert!(l < 1e-6);
    let uniform = array![[0.0, 0.0, 0.0, 0.0]];
    let l = loss(uniform.view(), none.view(), &[Label::MachinePolished], &[]).unwrap();
    assert!((l - 4f64.ln()).abs() < 1e-12);
    let bad = array![[0.0, 1.0]];
    assert!(loss(uniform.view(), bad.view(), &[Label::HumanWritten], &[2]).is_err());
}

#[test]
fn joint_loss_matches_scalar_recomputation() {
    let label_logits = array![[1.0, 2.0, 0.5, -1.0], [0.0, 0.0, 3.0, 1.0], [-2.0, 0.5, 0.5, 0.0]];
    let domain_logits = array![[0.3, -0.3], [1.5, 0.0], [0.0, 2.0]];
    let labels = [Label::MachineGenerated, Label::MachineHumanized, Label::HumanWritten];
    let doms = [0usize, 1, 1];
    // hand-rolled cross-entropy: -log(exp(z_t) / sum exp(z))
    let ce = |row: &[f64], t: usize| -> f64 {
        let denom: f64 = row.iter().map(|z| z.exp()).sum();
        -(row[t].exp() / denom).ln()
    };
    let mut expected = 0.0;
    for i in 0..3 {
        expected += ce(label_logits.row(i).as_slice().unwrap(), labels[i].code()) / 3.0;
        expected += ce(domain_logits.row(i).as_slice().unwrap(), doms[i]) / 3.0;
    }
    let got = loss(label_logits.view(), domain_logits.view(), &labels, &doms).unwrap();
    assert!((got - expected).abs() < 1e-12);
}

#[test]
fn backward_loss_value_matches_forward_recomputation() {
    let m = micro_model(5, 0.5);
    let (batch, targets) = micro_batch();
    let (lb, grads) = m.backward(&batch, &targets, None).unwrap();
    let (l, d) = head_losses(&m, &batch, &targets);
    assert!((lb.label - l).abs() < 1e-12);
    assert!((lb.domain - d).abs() < 1e-12);
    assert!((lb.total - (l + d)).abs() < 1e-12);
    assert!(grads.is_finite());
    assert_eq!(grads.data.len(), m.num_params());
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let lambda = 0.7;
    let m = micro_model(11, lambda);
    let (batch, targets) = micro_batch();
    let (_, grads) = m.backward(&batch, &targets, None).unwrap();
    let h = 1e-3;
    let encoder = m.encoder_range();
    let domain_head = m.domain_head_range();
    let mut worst = 0.0f64;
    for i in 0..m.num_params() {
        let mut plus = m.clone();
        plus.params_mut()[i] += h;
        let mut minus = m.clone();
        minus.params_mut()[i] -= h;
        let (lp, dp) = head_losses(&plus, &batch, &targets);
        let (lm, dm) = head_losses(&minus, &batch, &targets);
        let d_label = (lp - lm) / (2.0 * h);
        let d_domain = (dp - dm) / (2.0 * h);
        let numeric = if encoder.contains(&i) {
            d_label - lambda * d_domain
        } else if domain_head.contains(&i) {
            d_domain
        } else {
            d_label
        };
        let analytic = grads.data[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
        assert!(rel < 1e-4, "param {i}: analytic {analytic} numeric {numeric} rel {rel}");
    }
    assert!(worst < 1e-4);
}

#[test]
fn masked_labels_leave_pure_reversed_domain_gradient() {
    let lambda = 0.8;
    let m = micro_model(12, lambda);
    let (batch, targets) = micro_batch();
    let domain_only: Vec<Target> = targets.iter().map(|t| Target { label: None, domain: t.domain }).collect();
    let (_, g) = m.backward(&batch, &domain_only, None).unwrap();
    // Backprop is linear in the upstream gradient, so the encoder gradient
    // at lambda must be lambda times the one at lambda = 1, and nonzero.
    let mut unit = m.clone();
    unit.grl_lambda = 1.0;
    let (_, g_unit) = unit.backward(&batch, &domain_only, None).unwrap();
    assert!(g_unit.data[m.encoder_range()].iter().any(|v| *v != 0.0));
    for i in m.encoder_range() {
        let expected = lambda * g_unit.data[i];
        assert!((g.data[i] - expected).abs() <= 1e-12 * expected.abs().max(1.0), "param {i}");
    }
    assert!(g.data[m.label_head_range()].iter().all(|v| *v == 0.0));
}

#[test]
fn zero_lambda_cuts_domain_branch_from_encoder() {
    let m = micro_model(13, 0.0);
    let (batch, targets) = micro_batch();
    let label_only: Vec<Target> = targets.iter().map(|t| Target { label: t.label, domain: None }).collect();
    let (_, with_domain) = m.backward(&batch, &targets, None).unwrap();
    let (_, without) = m.backward(&batch, &label_only, None).unwrap();
    assert_eq!(&with_domain.data[m.encoder_range()], &without.data[m.encoder_range()]);
    assert_eq!(&with_domain.data[m.label_head_range()], &without.data[m.label_head_range()]);
}

#[test]
fn batch_gradient_is_mean_of_per_example_gradients() {
    let m = micro_model(14, 0.6);
    let (batch, targets) = micro_batch();
    let (_, g) = m.backward(&batch, &targets, None).unwrap();
    let mut mean = vec![0.0; m.num_params()];
    for (seq, t) in batch.iter().zip(&targets) {
        let (_, gi) = m.backward(std::slice::from_ref(seq), std::slice::from_ref(t), None).unwrap();
        for (acc, v) in mean.iter_mut().zip(gi.data) {
            *acc += v / batch.len() as f64;
        }
    }
    for (a, b) in g.data.iter().zip(&mean) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn out_of_range_domain_target_rejected() {
    let m = micro_model(1, 0.0);
    let t = [Target { label: Some(Label::HumanWritten), domain: Some(3) }];
    assert!(matches!(m.backward(&[vec![2]], &t, None), Err(NeuralError::TargetOutOfRange(_))));
}

#[test]
fn dropout_is_seeded() {
    let mut cfg = micro_config();
    cfg.dropout = 0.3;
    let m = ClassifierModel::new(micro_vocab(20), cfg, vec!["a".into(), "b".into()], 2).unwrap();
    let (batch, mut targets) = micro_batch();
    targets.iter_mut().for_each(|t| t.domain = t.domain.map(|d| d % 2));
    let run = |seed| m.backward(&batch, &targets, Some(&mut ChaCha8Rng::seed_from_u64(seed))).unwrap().1;
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
}

#[test]
fn save_load_round_trip_is_exact() {
    let m = micro_model(21, 0.4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    save_model(&m, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back.params(), m.params());
    assert_eq!(back.vocab(), m.vocab());
    assert_eq!(back.domains(), m.domains());
    assert_eq!(back.config(), m.config());
    let (batch, _) = micro_batch();
    assert_eq!(back.forward(&batch).unwrap(), m.forward(&batch).unwrap());
}

#[test]
fn truncated_and_versioned_files_rejected() {
    let m = micro_model(22, 0.0);
    let bytes = io::to_bytes(&m);
    assert!(matches!(io::from_bytes(&bytes[..bytes.len() / 2]), Err(NeuralError::Corrupt(_))));
    assert!(matches!(io::from_bytes(&bytes[..3]), Err(NeuralError::Corrupt(_))));
    let mut flipped = bytes.clone();
    flipped[4] = FORMAT_VERSION + 1;
    assert!(matches!(io::from_bytes(&flipped), Err(NeuralError::Version { .. })));
    let mut corrupt = bytes.clone();
    let mid = corrupt.len() / 2;
    corrupt[mid] ^= 0x40;
    assert!(matches!(io::from_bytes(&corrupt), Err(NeuralError::Corrupt(_))));
    assert!(io::from_bytes(&bytes).is_ok());
}
