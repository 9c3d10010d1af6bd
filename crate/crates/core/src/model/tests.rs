use super::*;
use crate::rng::{rng_for, Domain};
use crate::synthetic::{random_model, separated_model, SeparatedSpec};

fn rates() -> DataRates {
    DataRates {
        beds: 2.0,
        diagnoses: 2.0,
        labs: (2.0, 1.5),
        neuro: (1.5, 1.0),
        meds: (2.0, 1.0),
    }
}

fn small_hp() -> Hyperparams {
    Hyperparams {
        n_top: 3,
        n_diagnoses: 2,
        n_beds: 2,
        n_labs: 2,
        n_neuro: 2,
        n_meds: 2,
        hmm_labs: 2,
        hmm_neuro: 2,
        hmm_meds: 3,
    }
}

fn small_vocab() -> VocabSizes {
    VocabSizes {
        beds: 3,
        diagnoses: 4,
        labs: 3,
        neuro: 2,
        meds: 3,
    }
}

fn model(seed: u64) -> EpisodeModel {
    random_model(&small_hp(), &small_vocab(), &rates(), (0, 120), &mut rng_for(seed, Domain::Sample, 99)).unwrap()
}

fn episodes(m: &EpisodeModel, n: usize, seed: u64) -> Vec<Episode> {
    (0..n)
        .map(|i| m.sample_episode(&mut rng_for(seed, Domain::Sample, i as u64)).0)
        .collect()
}

#[test]
fn episode_likelihood_is_mixture_over_top_states() {
    let m = model(1);
    for e in episodes(&m, 20, 2) {
        let direct: Vec<f64> = (0..m.n_top())
            .map(|z| m.top_weights().log_probs()[z] + m.episode_log_lik_given_top(&e, z).unwrap())
            .collect();
        let ll = m.episode_log_lik(&e).unwrap();
        assert!((ll - log_sum_exp(&direct)).abs() < 1e-10);
        assert!(ll.is_finite() && ll <= 0.0);
    }
}

#[test]
fn given_top_factorizes_over_parts() {
    let m = model(3);
    let e = episodes(&m, 1, 4).remove(0);
    let z = 1;
    let s = m.scalars(z);
    let mut expected = s.age.log_pmf(e.age.unwrap()).unwrap()
        + s.sex.log_pmf(e.sex.unwrap())
        + s.death.log_pmf(e.death.unwrap());
    let mix = |stream: Stream, per_state: Vec<f64>| {
        let terms: Vec<f64> = per_state
            .iter()
            .enumerate()
            .map(|(k, l)| m.mixing(stream).prob(z, k).ln() + l)
            .collect();
        log_sum_exp(&terms)
    };
    let d = m.diagnoses();
    let k_d = d.n_states();
    expected += mix(
        Stream::AdmissionDx,
        (0..k_d)
            .map(|k| crate::submodels::collection_log_lik(&e.admission_dx, d.state(k)).unwrap())
            .collect(),
    );
    expected += mix(
        Stream::DischargeDx,
        (0..k_d)
            .map(|k| crate::submodels::collection_log_lik(&e.discharge_dx, d.state(k)).unwrap())
            .collect(),
    );
    expected += mix(
        Stream::Beds,
        (0..m.beds().n_states())
            .map(|k| crate::submodels::mseq_log_lik(&e.beds, m.beds().state(k)).unwrap())
            .collect(),
    );
    for stream in Stream::HMM {
        let h = m.hmm(stream).unwrap();
        let seq = e.nested(stream).unwrap();
        expected += mix(stream, (0..h.n_states()).map(|k| h.posterior(seq, k).unwrap().0).collect());
    }
    assert!((m.episode_log_lik_given_top(&e, z).unwrap() - expected).abs() < 1e-10);
}

#[test]
fn missing_scalars_are_marginalized() {
    let m = model(5);
    let mut e = episodes(&m, 1, 6).remove(0);
    let masked = m
        .episode_log_lik_masked(&e, ScalarMask { age: false, ..ScalarMask::ALL })
        .unwrap();
    e.age = None;
    assert!((m.episode_log_lik(&e).unwrap() - masked).abs() < 1e-12);
}

#[test]
fn out_of_support_age_is_an_error() {
    let m = model(7);
    let e = Episode {
        age: Some(500),
        ..Episode::default()
    };
    assert!(matches!(m.episode_log_lik(&e), Err(Error::OutOfSupport { .. })));
}

#[test]
fn unknown_token_names_stream() {
    let m = model(7);
    let e = Episode {
        meds: vec![vec![0, 17]],
        ..Episode::default()
    };
    assert!(matches!(
        m.episode_log_lik(&e),
        Err(Error::UnknownStreamToken { stream: Stream::Meds, id: 17, .. })
    ));
}

#[test]
fn permuting_top_states_preserves_likelihood() {
    let m = model(8);
    let p = m.permute_top(&[2, 0, 1]).unwrap();
    assert_eq!(p.top_weights().prob(0), m.top_weights().prob(2));
    for e in episodes(&m, 10, 9) {
        assert!((m.episode_log_lik(&e).unwrap() - p.episode_log_lik(&e).unwrap()).abs() < 1e-12);
    }
    assert!(m.permute_top(&[0, 0, 1]).is_err());
}

#[test]
fn sorted_by_weight_is_descending() {
    let s = model(10).sorted_by_weight();
    let w = s.top_weights().probs();
    assert!(w.windows(2).all(|p| p[0] >= p[1]));
}

#[test]
fn e_step_posteriors_are_normalized() {
    let m = model(11);
    for e in episodes(&m, 10, 12) {
        let r = m.e_step(&e).unwrap();
        assert!((r.gamma.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for stream in Stream::ALL {
            let k = m.hyperparams().sub_states(stream);
            let joint: f64 = r.joint[stream].iter().sum();
            assert!((joint - 1.0).abs() < 1e-12);
            for z in 0..m.n_top() {
                let row: f64 = (0..k).map(|j| r.joint_at(stream, z, j, k)).sum();
                assert!((row - r.gamma[z]).abs() < 1e-12);
            }
        }
        assert!((r.log_lik - m.episode_log_lik(&e).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn state_prevalence_sums_to_one() {
    let m = model(13);
    for stream in Stream::ALL {
        assert!((m.state_prevalence(stream).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn unit_model_reaches_closed_form_mle() {
    let m = model(14);
    let data = episodes(&m, 200, 15);
    let hp = Hyperparams::unit();
    let (fit, report) = EpisodeModel::fit(&data, &hp, &small_vocab(), &FitConfig::default()).unwrap();
    assert!(report.converged);
    assert!(report.iterations <= 5, "{} iterations", report.iterations);
    let n = data.len() as f64;
    let deaths = data.iter().filter(|e| e.death == Some(true)).count() as f64;
    assert!((fit.scalars(0).death.p() - deaths / n).abs() < 1e-12);
    let mean_age = data.iter().map(|e| e.age.unwrap() as f64).sum::<f64>() / n;
    // The truncated-family MLE matches the sample mean in expectation.
    let (lo, _) = fit.scalars(0).age.support();
    let fitted_mean: f64 = fit.scalars(0).age.pmf_table().iter().enumerate().map(|(i, p)| (lo + i as i64) as f64 * p).sum();
    assert!((fitted_mean - mean_age).abs() < 1e-8);
    let mean_beds = data.iter().map(|e| e.beds.len() as f64).sum::<f64>() / n;
    assert!((fit.beds().state(0).length.rate() - mean_beds).abs() < 1e-9);
    let timepoints: usize = data.iter().map(|e| e.labs.len()).sum();
    let items: usize = data.iter().flat_map(|e| &e.labs).map(Vec::len).sum();
    let count = fit.hmm(Stream::Labs).unwrap().emission().state(0).count.rate();
    assert!((count - items as f64 / timepoints as f64).abs() < 1e-9);
}

#[test]
fn fit_trace_is_non_decreasing() {
    let truth = model(16);
    let data = episodes(&truth, 300, 17);
    let cfg = FitConfig {
        seed: 3,
        max_iters: 40,
        ..FitConfig::default()
    };
    let (_, report) = EpisodeModel::fit(&data, &small_hp(), &small_vocab(), &cfg).unwrap();
    for w in report.log_lik_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-8, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn fit_is_deterministic_and_sorted() {
    let truth = model(18);
    let data = episodes(&truth, 150, 19);
    let cfg = FitConfig {
        seed: 5,
        max_iters: 10,
        restarts: 2,
        ..FitConfig::default()
    };
    let (a, ra) = EpisodeModel::fit(&data, &small_hp(), &small_vocab(), &cfg).unwrap();
    let (b, rb) = EpisodeModel::fit(&data, &small_hp(), &small_vocab(), &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert_eq!(ra.restart_log_liks.len(), 2);
    assert!(a.top_weights().probs().windows(2).all(|p| p[0] >= p[1]));
    assert!((ra.final_log_lik() - a.total_log_lik(&data).unwrap()).abs() < 1e-6 * ra.final_log_lik().abs());
}

#[test]
fn empty_dataset_rejected() {
    assert!(matches!(
        EpisodeModel::fit(&[], &small_hp(), &small_vocab(), &FitConfig::default()),
        Err(Error::EmptyDataset)
    ));
}

#[test]
fn serde_round_trip_is_bit_exact() {
    let m = model(20);
    let text = serde_json::to_string(&m).unwrap();
    let back: EpisodeModel = serde_json::from_str(&text).unwrap();
    assert_eq!(back, m);
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
}

#[test]
fn malformed_model_document_rejected() {
    let m = model(21);
    let mut v: serde_json::Value = serde_json::to_value(&m).unwrap();
    v["hyper"]["n_beds"] = serde_json::json!(7);
    assert!(serde_json::from_value::<EpisodeModel>(v).is_err());
}

#[test]
fn near_zero_rates_give_empty_streams() {
    let spec = SeparatedSpec {
        top_weights: vec![1.0],
        n_sub: 1,
        n_hmm: 1,
        block: 2,
        mixing_peak: 1.0,
        rates: DataRates {
            beds: 1e-6,
            diagnoses: 1e-6,
            labs: (1e-6, 1e-6),
            neuro: (1e-6, 1e-6),
            meds: (1e-6, 1e-6),
        },
    };
    let m = separated_model(&spec).unwrap();
    for e in episodes(&m, 200, 22) {
        for s in Stream::ALL {
            assert_eq!(e.stream_len(s), 0);
        }
    }
}

#[test]
fn sampled_traces_match_episode_shapes() {
    let m = model(23);
    for i in 0..30 {
        let (e, t) = m.sample_episode(&mut rng_for(24, Domain::Sample, i));
        assert!(t.top < m.n_top());
        assert_eq!(t.labs_path.len(), e.labs.len());
        assert_eq!(t.neuro_path.len(), e.neuro.len());
        assert_eq!(t.meds_path.len(), e.meds.len());
        for s in Stream::ALL {
            assert!(t.sub_states[s] < m.hyperparams().sub_states(s));
        }
    }
}
