use proptest::prelude::*;

use layermix::distributions::CategoricalDist;
use layermix::io::{parse_corpus, write_corpus, LoadOptions, VocabularySet};
use layermix::math::log_sum_exp;
use layermix::rng::{rng_for, Domain};
use layermix::selection::SearchGrid;
use layermix::submodels::{collection_log_lik, CollectionState};
use layermix::synthetic::random_model;
use layermix::{DataRates, Episode, EpisodeModel, Hyperparams, VocabSizes};

fn small_model(seed: u64) -> EpisodeModel {
    let hp = Hyperparams {
        n_top: 3,
        n_diagnoses: 2,
        n_beds: 2,
        n_labs: 2,
        n_neuro: 2,
        n_meds: 2,
        hmm_labs: 2,
        hmm_neuro: 2,
        hmm_meds: 3,
    };
    let rates = DataRates {
        beds: 2.0,
        diagnoses: 2.0,
        labs: (2.0, 2.0),
        neuro: (2.0, 1.0),
        meds: (2.0, 1.0),
    };
    random_model(&hp, &vocab(), &rates, (0, 120), &mut rng_for(seed, Domain::Init, 0)).unwrap()
}

fn vocab() -> VocabSizes {
    VocabSizes {
        beds: 3,
        diagnoses: 4,
        labs: 3,
        neuro: 2,
        meds: 5,
    }
}

fn episode() -> impl Strategy<Value = Episode> {
    let flat = |v: usize| prop::collection::vec(0..v, 0..5);
    let nested = |v: usize| prop::collection::vec(prop::collection::vec(0..v, 0..3), 0..4);
    let v = vocab();
    (
        prop::option::of(0i64..=120),
        prop::option::of(any::<bool>()),
        prop::option::of(any::<bool>()),
        flat(v.beds),
        flat(v.diagnoses),
        flat(v.diagnoses),
        nested(v.labs),
        nested(v.neuro),
        nested(v.meds),
    )
        .prop_map(|(age, sex, death, beds, admission_dx, discharge_dx, labs, neuro, meds)| Episode {
            age,
            sex,
            death,
            beds,
            admission_dx,
            discharge_dx,
            labs,
            neuro,
            meds,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_sum_exp_matches_direct_sum(xs in prop::collection::vec(-30.0f64..30.0, 1..20)) {
        let direct = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        prop_assert!((log_sum_exp(&xs) - direct).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_is_shift_equivariant(xs in prop::collection::vec(-5.0f64..5.0, 1..10), c in -800.0f64..800.0) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        prop_assert!((log_sum_exp(&shifted) - log_sum_exp(&xs) - c).abs() < 1e-9);
    }

    #[test]
    fn normalized_weights_sum_to_one(w in prop::collection::vec(0.0f64..10.0, 1..30)) {
        prop_assume!(w.iter().any(|&x| x > 0.0));
        let d = CategoricalDist::from_weights(&w).unwrap();
        prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collection_order_does_not_matter(mut items in prop::collection::vec(0usize..4, 0..8), rate in 0.1f64..5.0) {
        let state = CollectionState {
            length: layermix::distributions::PoissonDist::new(rate).unwrap(),
            items: CategoricalDist::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
        };
        let a = collection_log_lik(&items, &state).unwrap();
        items.reverse();
        let mid = items.len() / 2;
        items.rotate_left(mid);
        prop_assert!((collection_log_lik(&items, &state).unwrap() - a).abs() < 1e-12);
    }

    #[test]
    fn likelihood_ignores_top_state_labels(e in episode(), seed in 0u64..50) {
        let m = small_model(seed);
        let p = m.permute_top(&[2, 0, 1]).unwrap();
        let (a, b) = (m.episode_log_lik(&e).unwrap(), p.episode_log_lik(&e).unwrap());
        prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn responsibilities_are_a_distribution(e in episode(), seed in 0u64..50) {
        let r = small_model(seed).e_step(&e).unwrap();
        prop_assert!((r.gamma.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(r.gamma.iter().all(|g| (0.0..=1.0).contains(g)));
    }

    #[test]
    fn corpus_text_round_trips(eps in prop::collection::vec(episode(), 1..8)) {
        let vocab = VocabularySet::synthetic(&vocab());
        let mut out = Vec::new();
        write_corpus(&mut out, &eps, &vocab).unwrap();
        let text = String::from_utf8(out).unwrap();
        let parsed = parse_corpus(&text, &vocab, &LoadOptions::default()).unwrap();
        prop_assert_eq!(parsed.episodes, eps);
    }

    #[test]
    fn stepped_grid_parses(start in 1usize..20, step in 1usize..10, count in 1usize..8) {
        let stop = start + step * (count - 1);
        let g = SearchGrid::parse(&format!("{start}:{stop}:{step}")).unwrap();
        let want: Vec<usize> = (0..count).map(|i| start + i * step).collect();
        prop_assert_eq!(g.values(), &want[..]);
    }
}
