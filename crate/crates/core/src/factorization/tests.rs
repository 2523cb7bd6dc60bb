use super::*;
use crate::data::{generate_synthetic, sample_observations, PropensityGroundTruth, Rating, RatingDataset};
use crate::experiment::TextDrivenSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config() -> TrainConfig {
    TrainConfig {
        d: 4,
        lambda_u: 1.0,
        lambda_v: 1.0,
        max_sweeps: 40,
        encoder: train::TextModelShape {
            embed_dim: 4,
            num_filters: 3,
            windows: vec![2, 3],
        },
        sam_head: train::TextModelShape {
            embed_dim: 3,
            num_filters: 2,
            windows: vec![2, 3],
        },
        sam: crate::sam::SamFitConfig {
            max_iters: 20,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn text_instance(seed: u64) -> crate::experiment::TextDriven {
    TextDrivenSpec {
        num_users: 60,
        num_items: 12,
        seq_len: 8,
        words_per_document: 6,
        seed,
        ..Default::default()
    }
    .generate()
    .unwrap()
}

#[test]
fn exact_factorisation_is_recovered() {
    let p = PropensityGroundTruth::uniform(6, 1.0).unwrap();
    let synth = generate_synthetic(20, 6, 2, &p, 0.0, 4).unwrap();
    let config = TrainConfig {
        d: 6,
        lambda_u: 1e-9,
        lambda_v: 1e-9,
        validation_fraction: 0.0,
        max_sweeps: 200,
        init_scale: 1.0,
        ..small_config()
    };
    let state = train(&synth.dataset, None, &config, Variant::Mf).unwrap();
    let r = state.rmse(&synth.dataset).unwrap();
    assert!(r < 1e-4, "train rmse {r}");
}

#[test]
fn training_is_deterministic_and_descends() {
    let t = text_instance(1);
    for variant in Variant::ALL {
        let a = train(&t.synthetic.dataset, Some(&t.corpus), &small_config(), variant).unwrap();
        let b = train(&t.synthetic.dataset, Some(&t.corpus), &small_config(), variant).unwrap();
        assert_eq!(a.model, b.model, "{variant}");
        assert_eq!(a.trace, b.trace);
        assert!(a.descent_holds(DESCENT_SLACK), "{variant}");
        assert_eq!(a.sam.is_some(), variant.uses_sam());
        assert_eq!(a.encoder.is_some(), variant.encoder_kind().is_some());
        assert!(a.weights().iter().all(|&w| w >= 1.0));
        assert!(a.sweeps <= 40 && a.best_sweep <= a.sweeps);
    }
}

#[test]
fn early_stopping_respects_patience() {
    let t = text_instance(2);
    let config = TrainConfig {
        patience: 2,
        max_sweeps: 200,
        ..small_config()
    };
    let s = train(&t.synthetic.dataset, None, &config, Variant::Mf).unwrap();
    let rmses: Vec<f64> = s.trace.iter().map(|r| r.validation_rmse.unwrap()).collect();
    // the untrained model at sweep 0 is never selected
    let best = rmses[1..].iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(s.best_sweep >= 1);
    assert_eq!(rmses[s.best_sweep], best);
    assert!(s.sweeps == 200 || s.sweeps - s.best_sweep == 2);
}

#[test]
fn text_variants_need_a_corpus() {
    let t = text_instance(0);
    for v in [Variant::MfPlus, Variant::Convmf, Variant::FtmfPlus] {
        let err = train(&t.synthetic.dataset, None, &small_config(), v).unwrap_err();
        assert!(matches!(err, crate::Error::Missing(_)), "{err}");
    }
    let s = train(&t.synthetic.dataset, None, &small_config(), Variant::Mf).unwrap();
    assert!(s.complete_loss(&t.synthetic.dataset, &t.corpus).is_err());
}

#[test]
fn variant_names_round_trip() {
    for v in Variant::ALL {
        assert_eq!(v.name().parse::<Variant>().unwrap(), v);
    }
    assert_eq!("ConvMF+".parse::<Variant>().unwrap(), Variant::ConvmfPlus);
    assert!("rcnnmf".parse::<Variant>().is_err());
}

#[test]
fn trace_csv_has_one_row_per_sweep() {
    let t = text_instance(3);
    let s = train(&t.synthetic.dataset, None, &small_config(), Variant::Mf).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    s.write_trace_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), s.trace.len() + 1);
    assert!(text.starts_with("sweep,train_loss,validation_rmse\n0,"));
}

#[test]
fn inverse_propensity_risk_is_unbiased() {
    let (m, n) = (50, 80);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.9)).collect();
    let propensity = PropensityGroundTruth::new(probs).unwrap();
    let synth = generate_synthetic(m, n, 3, &propensity, 0.5, 11).unwrap();
    // an imperfect predictor: truth plus noise on the factors
    let u = synth.truth.user_factors.map(|x| x + 0.3 * rng.random_range(-1.0..1.0));
    let v = synth.truth.item_factors.map(|x| x + 0.3 * rng.random_range(-1.0..1.0));
    let model = FactorModel::from_factors(&u, &v, 0.0, 0.0).unwrap();
    let full = synth.full_matrix_risk(|i, j| model.predict(i, j).unwrap());
    let weights = propensity.inverse_weights();
    let draws = 200;
    let mut total = 0.0;
    for _ in 0..draws {
        let obs: Vec<Rating> = sample_observations(&synth.truth.full, &propensity, &mut rng);
        let data = RatingDataset::new(m, n, obs).unwrap();
        total += weighted_risk(&model, &data, &weights).unwrap();
    }
    let mean = total / draws as f64;
    assert!((mean - full).abs() / full < 0.05, "mean {mean} full {full}");
}
