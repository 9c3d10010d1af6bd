use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};

use layermix::analysis::sequence_tree;
use layermix::io::sample_corpus;
use layermix::rng::{rng_for, Domain};
use layermix::submodels::hmm_forward;
use layermix::synthetic::random_model;
use layermix::{DataRates, Episode, EpisodeModel, FitConfig, Hyperparams, ScalarMask, Stream, VocabSizes};

fn model() -> (EpisodeModel, Vec<Episode>) {
    let hp = Hyperparams {
        n_top: 10,
        n_diagnoses: 20,
        n_beds: 10,
        n_labs: 10,
        n_neuro: 10,
        n_meds: 10,
        hmm_labs: 20,
        hmm_neuro: 15,
        hmm_meds: 10,
    };
    let vocab = VocabSizes {
        beds: 30,
        diagnoses: 200,
        labs: 60,
        neuro: 20,
        meds: 100,
    };
    let rates = DataRates {
        beds: 4.0,
        diagnoses: 5.0,
        labs: (6.0, 4.0),
        neuro: (4.0, 2.0),
        meds: (5.0, 3.0),
    };
    let m = random_model(&hp, &vocab, &rates, (0, 120), &mut rng_for(1, Domain::Init, 0)).unwrap();
    let (data, _) = sample_corpus(&m, 1024, 2);
    (m, data)
}

fn inference(c: &mut Criterion) {
    let (m, data) = model();

    c.bench_function("episode_log_lik", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % data.len();
            black_box(m.episode_log_lik(&data[i]).unwrap())
        })
    });

    c.bench_function("e_step", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % data.len();
            black_box(m.e_step(&data[i]).unwrap())
        })
    });

    let labs = m.hmm(Stream::Labs).unwrap();
    let seq = data.iter().map(|e| &e.labs).max_by_key(|s| s.len()).unwrap();
    c.bench_function("hmm_forward_longest_labs", |b| {
        b.iter(|| black_box(hmm_forward(seq, labs.state(0), labs.emission()).unwrap()))
    });

    let mut group = c.benchmark_group("em");
    group.sample_size(10);
    group.throughput(Throughput::Elements(data.len() as u64));
    group.bench_function("expectation_1024", |b| {
        b.iter(|| black_box(m.expectation(&data, ScalarMask::ALL).unwrap()))
    });
    let stats = m.expectation(&data, ScalarMask::ALL).unwrap();
    group.bench_function("m_step", |b| b.iter(|| black_box(m.m_step(&stats).unwrap())));
    group.bench_function("fit_5_iters", |b| {
        let cfg = FitConfig {
            max_iters: 5,
            ..FitConfig::default()
        };
        b.iter_batched(
            || data[..256].to_vec(),
            |d| black_box(EpisodeModel::fit(&d, m.hyperparams(), &m.vocab_sizes(), &cfg).unwrap()),
            BatchSize::LargeInput,
        )
    });
    group.bench_function("sample_1024", |b| b.iter(|| black_box(sample_corpus(&m, 1024, 3))));
    group.finish();

    let bed = m.beds().state(0);
    c.bench_function("bed_tree_0.001", |b| {
        b.iter(|| black_box(sequence_tree(bed, 0.001, Some(8)).unwrap()))
    });
}

criterion_group!(benches, inference);
criterion_main!(benches);
