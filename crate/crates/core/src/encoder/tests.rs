use super::*;
use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_conv() -> EncoderParams {
    let config = EncoderConfig {
        kind: EncoderKind::Conv,
        vocab_size: 4,
        embed_dim: 2,
        num_filters: 1,
        windows: vec![3],
        output_dim: 1,
    };
    let mut p = EncoderParams::zeros(config).unwrap();
    p.embedding_mut(1).copy_from_slice(&[1.0, 0.0]);
    p.embedding_mut(2).copy_from_slice(&[0.0, 1.0]);
    p.embedding_mut(3).copy_from_slice(&[1.0, 1.0]);
    p.conv_filter_mut(0, 0)
        .copy_from_slice(&[0.1, 0.2, 0.3, -0.1, 0.5, 0.0]);
    p.conv_bias_mut(0)[0] = 0.05;
    p.dense_weight_mut()[0] = 2.0;
    p.dense_bias_mut()[0] = -0.3;
    p
}

#[test]
fn hand_computed_conv_output() {
    // windows of [1, 2, 3, 0]:
    //   t=0: 0.05 + 0.1 - 0.1 + 0.5 = 0.55
    //   t=1: 0.05 + 0.2 + 0.3 - 0.1 = 0.45
    // max at t=0, output = 2·tanh(0.55) - 0.3
    let p = tiny_conv();
    let out = p.forward(&[1, 2, 3, 0]).unwrap();
    assert_eq!(out.argmax(), &[0]);
    assert_abs_diff_eq!(out.features()[0], 0.5005202111902353, epsilon = 1e-15);
    assert_abs_diff_eq!(out.value[0], 0.7010404223804705, epsilon = 1e-15);
}

#[test]
fn all_padding_gives_bias_transform() {
    let mut p = EncoderParams::init(EncoderConfig::conv(10, 3), 5).unwrap();
    let out = p.forward(&[PAD_ID; 8]).unwrap();
    // Zero embeddings: every window pre-activation is the filter bias.
    let f = p.config().num_filters;
    let biases: Vec<f64> = (0..3).flat_map(|b| p.conv_bias_mut(b).to_vec()).collect();
    for (q, feat) in out.features().iter().enumerate() {
        assert_eq!(*feat, biases[q].tanh(), "feature {q} (filter {})", q % f);
    }
    let expected = p.dense(out.features());
    assert_eq!(out.value, expected);
}

#[test]
fn short_sequence_rejected() {
    let p = EncoderParams::init(EncoderConfig::conv(10, 2), 1).unwrap();
    assert!(p.forward(&[1, 2, 3, 4]).is_err());
    assert!(p.forward(&[1, 2, 3, 4, 5]).is_ok());
    assert!(p.forward(&[1, 2, 3, 4, 99]).is_err());
}

#[test]
fn tokens_off_the_argmax_windows_do_not_matter() {
    let p = tiny_conv();
    let a = p.forward(&[1, 2, 3, 0, 0, 0]).unwrap();
    // argmax window covers positions 0..3; the tail changes but every
    // later window stays below the maximum (0.45, 0.35, 0.25)
    let b = p.forward(&[1, 2, 3, 0, 2, 0]).unwrap();
    assert_eq!(a.argmax(), b.argmax());
    assert_eq!(a.value, b.value);
}

#[test]
fn forward_is_bit_deterministic() {
    let p = EncoderParams::init(EncoderConfig::conv(30, 4), 9).unwrap();
    let seq: Vec<usize> = (0..12).map(|i| (i * 7) % 30).collect();
    let a = p.forward(&seq).unwrap();
    let b = p.forward(&seq).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_upstream_gives_zero_gradient() {
    let p = EncoderParams::init(EncoderConfig::conv(20, 3), 2).unwrap();
    let out = p.forward(&[1, 5, 7, 9, 2, 3]).unwrap();
    let g = p.backward(&out, &[0.0; 3]).unwrap();
    assert!(g.values().iter().all(|&x| x == 0.0));
}

#[test]
fn upstream_shape_checked() {
    let p = EncoderParams::init(EncoderConfig::conv(20, 3), 2).unwrap();
    let out = p.forward(&[1, 5, 7, 9, 2, 3]).unwrap();
    assert!(matches!(p.backward(&out, &[1.0; 2]), Err(Error::Shape { .. })));
}

#[test]
fn untouched_embedding_rows_get_no_gradient() {
    let p = tiny_conv();
    // token 2 only appears at position 5, outside the argmax window 0..3
    let out = p.forward(&[1, 3, 3, 0, 0, 2]).unwrap();
    assert_eq!(out.argmax(), &[0]);
    let g = p.backward(&out, &[1.0]).unwrap();
    assert_eq!(g.embedding(2), &[0.0, 0.0]);
    // never-seen token
    let q = EncoderParams::init(EncoderConfig::conv(12, 2), 3).unwrap();
    let out = q.forward(&[1, 2, 3, 4, 5, 6]).unwrap();
    let g = q.backward(&out, &[0.3, -0.7]).unwrap();
    assert!(g.embedding(11).iter().all(|&x| x == 0.0));
}

#[test]
fn average_of_one_token_is_dense_of_its_embedding() {
    let p = EncoderParams::init(EncoderConfig::average(6, 2), 4).unwrap();
    let out = p.forward(&[3]).unwrap();
    assert_eq!(out.features(), p.embedding(3));
    assert_eq!(out.value, p.dense(p.embedding(3)));
    // padding is ignored by the mean
    let padded = p.forward(&[3, PAD_ID, PAD_ID]).unwrap();
    assert_eq!(padded.value, out.value);
}

fn small_config(kind: EncoderKind, output_dim: usize) -> EncoderConfig {
    EncoderConfig {
        kind,
        vocab_size: 9,
        embed_dim: 3,
        num_filters: 2,
        windows: vec![2, 3],
        output_dim,
    }
}

/// Central-difference check of `upstream · forward(tokens)`; coordinates
/// whose perturbation moves a pooling argmax are skipped as kinks.
fn gradient_check(params: &EncoderParams, tokens: &[usize], upstream: &[f64]) -> f64 {
    let h = 1e-5;
    let out = params.forward(tokens).unwrap();
    let grad = params.backward(&out, upstream).unwrap();
    let objective = |p: &EncoderParams| -> (f64, Vec<usize>) {
        let o = p.forward(tokens).unwrap();
        let v = o.value.iter().zip(upstream).map(|(a, b)| a * b).sum();
        (v, o.argmax().to_vec())
    };
    let mut worst: f64 = 0.0;
    for k in 0..params.len() {
        let mut plus = params.clone();
        plus.values_mut()[k] += h;
        let mut minus = params.clone();
        minus.values_mut()[k] -= h;
        let (fp, ap) = objective(&plus);
        let (fm, am) = objective(&minus);
        if ap != out.argmax() || am != out.argmax() {
            continue;
        }
        let numeric = (fp - fm) / (2.0 * h);
        let analytic = grad.values()[k];
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn finite_difference_agreement_both_variants() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for kind in [EncoderKind::Conv, EncoderKind::Average] {
        for trial in 0..20 {
            let config = small_config(kind, 1 + trial % 3);
            let mut p = EncoderParams::init(config.clone(), trial as u64).unwrap();
            for v in p.values_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            let tokens: Vec<usize> = (0..7).map(|_| rng.random_range(0..9)).collect();
            let upstream: Vec<f64> =
                (0..config.output_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let worst = gradient_check(&p, &tokens, &upstream);
            assert!(worst <= 1e-4, "{kind:?} trial {trial}: relative error {worst}");
        }
    }
}

#[test]
fn corpus_backward_matches_sum_of_items() {
    let p = EncoderParams::init(small_config(EncoderKind::Conv, 2), 8).unwrap();
    let seqs: Vec<Vec<usize>> = (0..70).map(|j| (0..6).map(|t| (j + 3 * t) % 9).collect()).collect();
    let corpus = Corpus::from_sequences(seqs, 9).unwrap();
    let outs = p.forward_corpus(&corpus).unwrap();
    let ups: Vec<Vec<f64>> = (0..70).map(|j| vec![j as f64 * 0.01, -0.5]).collect();
    let total = p.backward_corpus(&outs, &ups).unwrap();
    let mut manual = p.zeros_like();
    for (o, u) in outs.iter().zip(&ups) {
        manual.add_scaled(&p.backward(o, u).unwrap(), 1.0);
    }
    for (a, b) in total.values().iter().zip(manual.values()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
}

#[test]
fn init_is_seeded_and_bounded() {
    let c = EncoderConfig::conv(15, 2);
    let a = EncoderParams::init(c.clone(), 1).unwrap();
    let b = EncoderParams::init(c.clone(), 1).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, EncoderParams::init(c, 2).unwrap());
    assert!(a.values().iter().all(|v| v.abs() <= 0.05));
    assert!(a.embedding(PAD_ID).iter().all(|&v| v == 0.0));
}
