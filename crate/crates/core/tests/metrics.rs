use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dualmask::data::synth;
use dualmask::dsp::wav::write_wav;
use dualmask::dsp::AudioSignal;
use dualmask::metrics::{
    evaluate, evaluate_pairs, parse_pairs, seg_snr, si_sdr, stoi, ConditionSummary, SEGSNR_MAX_DB, SEGSNR_MIN_DB,
    SI_SDR_CAP_DB,
};

fn noisy(clean: &AudioSignal<f64>, level: f64, seed: u64) -> AudioSignal<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AudioSignal::new(
        clean.samples().iter().map(|v| v + level * rng.gen_range(-1.0..1.0)).collect(),
        clean.sample_rate(),
    )
    .unwrap()
}

#[test]
fn identity_pairs_hit_the_ceilings() {
    let x = synth::speech_like(1, 8000, 8000);
    let r = evaluate(&x, &x).unwrap();
    assert_eq!(r.stoi, 1.0);
    assert_eq!(r.seg_snr_db, SEGSNR_MAX_DB);
    assert_eq!(r.si_sdr_db, SI_SDR_CAP_DB);
    assert_eq!(r.llr, 0.0);
}

#[test]
fn more_noise_scores_worse() {
    let x = synth::speech_like(2, 8000, 8000);
    let light = evaluate(&x, &noisy(&x, 0.01, 1)).unwrap();
    let heavy = evaluate(&x, &noisy(&x, 0.2, 1)).unwrap();
    assert!(light.stoi > heavy.stoi);
    assert!(light.seg_snr_db > heavy.seg_snr_db);
    assert!(light.si_sdr_db > heavy.si_sdr_db);
    assert!(light.llr < heavy.llr);
}

#[test]
fn pair_manifest_runs_in_parallel_and_groups() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = String::from("# clean\tenhanced\tcondition\n");
    for i in 0..6u64 {
        let x = synth::speech_like(i, 8000, 8000);
        write_wav(dir.path().join(format!("c{i}.wav")), &x).unwrap();
        write_wav(dir.path().join(format!("e{i}.wav")), &noisy(&x, 0.05, i)).unwrap();
        let cond = if i % 2 == 0 { "a" } else { "b" };
        manifest.push_str(&format!("c{i}.wav\te{i}.wav\t{cond}\n"));
    }
    let pairs = parse_pairs(&manifest, dir.path()).unwrap();
    let serial = evaluate_pairs(&pairs, 1).unwrap();
    let parallel = evaluate_pairs(&pairs, 4).unwrap();
    assert_eq!(serial, parallel);
    let summary = ConditionSummary::from_results(&pairs, &serial);
    assert_eq!(summary.len(), 2);
    assert!(summary.iter().all(|s| s.count == 3));
}

#[test]
fn empty_pair_manifest_is_an_error() {
    assert!(parse_pairs("# nothing\n\n", std::path::Path::new(".")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scores_stay_in_range(seed in 0u64..500, level in 0.0f64..1.0) {
        let x = synth::speech_like(seed, 6000, 8000);
        let y = noisy(&x, level, seed);
        let s = stoi(&x, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        let g = seg_snr(&x, &y, 128).unwrap();
        prop_assert!((SEGSNR_MIN_DB..=SEGSNR_MAX_DB).contains(&g));
        let d = si_sdr(&x, &y).unwrap();
        prop_assert!(d.abs() <= SI_SDR_CAP_DB);
    }
}
