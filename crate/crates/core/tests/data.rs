mod common;

use std::collections::BTreeSet;

use common::*;
use emgds::data::{
    ingest_csv, split, split_keys, synth_corpus, write_csv_file, ActivityClass, GroupLabel, RecordingKey,
    SplitProtocol, SynthConfig,
};
use emgds::features::rms;
use proptest::prelude::*;

#[test]
fn synth_csv_round_trip() {
    let cfg = SynthConfig { subjects: 1, reps_per_activity: 2, duration_s: 0.2, ..SynthConfig::default() };
    let corpus = synth_corpus(&cfg).unwrap();
    assert_eq!(corpus.len(), 12);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    write_csv_file(&corpus, &path).unwrap();
    let back = ingest_csv(&path, cfg.rate_hz).unwrap();
    assert_eq!(back.keys(), corpus.keys());
    for (a, b) in corpus.recordings().iter().zip(back.recordings()) {
        assert_eq!(a.len(), 100);
        for ch in 0..2 {
            for (x, y) in a.channel(ch).iter().zip(b.channel(ch)) {
                assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }
}

#[test]
fn synth_cli_example_counts() {
    let cfg = SynthConfig { subjects: 2, reps_per_activity: 4, duration_s: 1.0, seed: 7, ..SynthConfig::default() };
    let corpus = synth_corpus(&cfg).unwrap();
    assert_eq!(corpus.len(), 48);
    assert!(corpus.recordings().iter().all(|r| r.len() == 500));
}

#[test]
fn synth_determinism() {
    let a = synth_corpus(&small_config(2, 2, 5)).unwrap();
    let b = synth_corpus(&small_config(2, 2, 5)).unwrap();
    let c = synth_corpus(&small_config(2, 2, 6)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.recordings()[0].channel(0), c.recordings()[0].channel(0));
}

#[test]
fn power_to_precision_rms_ratio() {
    let corpus = synth_corpus(&SynthConfig { reps_per_activity: 10, ..SynthConfig::default() }).unwrap();
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for r in corpus.recordings() {
        let g = r.activity().group().value() as usize;
        for ch in 0..2 {
            sums[g] += rms(r.channel(ch)).unwrap();
            counts[g] += 1;
        }
    }
    let ratio = (sums[GroupLabel::Power.value() as usize] / counts[1] as f64) / (sums[0] / counts[0] as f64);
    assert!((2.5..=3.5).contains(&ratio), "ratio {ratio}");
}

fn keys_for(subjects: usize, reps: u32) -> Vec<RecordingKey> {
    let mut keys = Vec::new();
    for s in 0..subjects {
        for a in ActivityClass::ALL {
            for rep in 1..=reps {
                keys.push(RecordingKey { subject: format!("s{s}"), activity: a, repetition: rep });
            }
        }
    }
    keys
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn split_disjoint_and_covering(
        subjects in 1usize..4,
        reps in 2u32..12,
        fraction in 0.05f64..0.95,
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let keys = keys_for(subjects, reps);
        let all: BTreeSet<usize> = (0..keys.len()).collect();

        let h = split_keys(&keys, SplitProtocol::Holdout { train_fraction: fraction, seed }).unwrap().holdout(0).unwrap();
        let train: BTreeSet<usize> = h.train.iter().copied().collect();
        let test: BTreeSet<usize> = h.test.iter().copied().collect();
        prop_assert!(train.is_disjoint(&test));
        prop_assert_eq!(train.union(&test).copied().collect::<BTreeSet<_>>(), all.clone());
        // every (subject, activity) cell keeps at least one recording on each side
        for s in 0..subjects {
            for a in ActivityClass::ALL {
                let cell = |set: &BTreeSet<usize>| set.iter().filter(|&&i| keys[i].subject == format!("s{s}") && keys[i].activity == a).count();
                prop_assert!(cell(&train) >= 1 && cell(&test) >= 1);
            }
        }

        let folds = split_keys(&keys, SplitProtocol::KFold { k, seed }).unwrap();
        let emgds::data::Partition::Folds(folds) = folds else { panic!("expected folds") };
        let mut seen = BTreeSet::new();
        for f in &folds {
            for i in f {
                prop_assert!(seen.insert(*i));
            }
        }
        prop_assert_eq!(seen, all);
    }
}

#[test]
fn corpus_split_matches_key_split() {
    let corpus = synth_corpus(&small_config(1, 3, 1)).unwrap();
    let p = SplitProtocol::Holdout { train_fraction: 0.7, seed: 3 };
    assert_eq!(split(&corpus, p).unwrap(), split_keys(&corpus.keys(), p).unwrap());
}
