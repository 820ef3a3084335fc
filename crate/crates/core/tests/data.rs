use std::collections::HashSet;

use dualmask::data::synth::{self, NoiseKind};
use dualmask::data::{
    generate_examples, make_mixture, parse_manifest, prepare_triple, read_shard, snr_db, split_dataset, write_shard,
};
use dualmask::dsp::wav::write_wav;
use dualmask::dsp::{resample, stft, FrameGrid};
use dualmask::model::ModelConfig;

#[test]
fn manifest_to_examples_to_shards() {
    let dir = tempfile::tempdir().unwrap();
    // 16 kHz sources exercise the resampling path
    let clean16 = resample(&synth::speech_like(1, 8000, 8000), 16000);
    let noise16 = resample(&synth::noise(NoiseKind::Filtered, 1, 12000, 8000), 16000);
    write_wav(dir.path().join("clean.wav"), &clean16).unwrap();
    write_wav(dir.path().join("noise.wav"), &noise16).unwrap();
    let specs = parse_manifest("clean.wav\tnoise.wav\t3\t7\nclean.wav\tnoise.wav\t-3\t8\n", dir.path()).unwrap();

    let config = ModelConfig::default();
    let mut all = Vec::new();
    for (u, spec) in specs.iter().enumerate() {
        let m = make_mixture::<f64>(spec).unwrap();
        assert_eq!(m.mix.sample_rate(), 8000);
        assert!((snr_db(m.clean.samples(), m.noise.samples()) - spec.target_snr_db).abs() < 0.01);
        let triple = prepare_triple(&m).unwrap();

        // independent target oracle straight from the mask formula
        let grid = FrameGrid::standard();
        let (s, n, x) = (
            stft(&triple.clean, &grid).unwrap(),
            stft(&triple.noise, &grid).unwrap(),
            stft(&triple.mix, &grid).unwrap(),
        );
        let examples: Vec<_> = generate_examples(&triple, &config, u).unwrap().collect();
        assert!(!examples.is_empty());
        for ex in &examples {
            for b in 0..config.n_bins {
                let (se, ne, xe) = (
                    s.get(ex.frame, b).norm_sqr(),
                    n.get(ex.frame, b).norm_sqr(),
                    x.get(ex.frame, b).norm_sqr(),
                );
                let want_c = (se / (se + xe)).sqrt();
                let want_n = (ne / (ne + xe)).sqrt();
                assert!((ex.clean_target[b] - want_c).abs() < 1e-12);
                assert!((ex.noise_target[b] - want_n).abs() < 1e-12);
            }
        }
        all.extend(examples);
    }

    let shard = dir.path().join("shard.bin");
    let info = write_shard(&shard, &all).unwrap();
    assert_eq!(info.n_examples, all.len());
    let (back_info, back) = read_shard::<f64>(&shard).unwrap();
    assert_eq!(back_info, info);
    assert_eq!(back.len(), all.len());
    for (a, b) in all.iter().zip(&back) {
        assert_eq!((a.utterance, a.frame), (b.utterance, b.frame));
        let err = a.features.iter().zip(&b.features).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-5 * a.features.iter().map(|v| v.abs()).fold(1.0, f64::max));
    }
}

#[test]
fn split_never_shares_an_utterance() {
    let config = ModelConfig {
        context_frames: 2,
        ..Default::default()
    };
    let mixes = synth::synthetic_mixtures(10, &[0.0], &NoiseKind::ALL, 0.2, 8000, 3).unwrap();
    let mut examples = Vec::new();
    for m in &mixes {
        examples.extend(generate_examples(&prepare_triple(&m.mixture).unwrap(), &config, m.utterance).unwrap());
    }
    let total = examples.len();
    let split = split_dataset(examples, [0.8, 0.1, 0.1], 5).unwrap();
    assert_eq!(split.train.len() + split.validation.len() + split.test.len(), total);
    let ids = |v: &[dualmask::data::TrainingExample<f64>]| v.iter().map(|e| e.utterance).collect::<HashSet<_>>();
    let (a, b, c) = (ids(&split.train), ids(&split.validation), ids(&split.test));
    assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
    assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
}

#[test]
fn manifest_errors_name_the_line() {
    let err = parse_manifest("a.wav\tb.wav\t0\t1\nbroken line\n", std::path::Path::new(".")).unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");
}
