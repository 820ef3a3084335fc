use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dualmask::data::synth::{self, NoiseKind};
use dualmask::dsp::wav::{read_wav, write_wav};
use dualmask::metrics::SI_SDR_CAP_DB;
use tempfile::TempDir;

const SMALL_MODEL: &str = "d_model=16\nff_hidden=32\nmlp_hidden=32\nframes=4\n";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualmask"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_corpus(dir: &Path, n: usize, seconds: f64) {
    let len = (seconds * 8000.0) as usize;
    let mut manifest = String::new();
    for i in 0..n {
        let kind = NoiseKind::CONTINUOUS[i % 3];
        write_wav(dir.join(format!("c{i}.wav")), &synth::speech_like(i as u64, len, 8000)).unwrap();
        write_wav(dir.join(format!("n{i}.wav")), &synth::noise(kind, i as u64, len + 800, 8000)).unwrap();
        manifest.push_str(&format!("c{i}.wav\tn{i}.wav\t0\t{i}\n"));
    }
    fs::write(dir.join("manifest.tsv"), manifest).unwrap();
}

fn mixtures(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with("_mix.wav"))
        .collect();
    v.sort();
    v
}

#[test]
fn mix_covers_every_snr_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_corpus(d, 2, 0.5);
    ok(d, &["mix", "--manifest", "manifest.tsv", "--out", "a"]);
    ok(d, &["mix", "--manifest", "manifest.tsv", "--out", "b"]);
    let names = mixtures(&d.join("a"));
    assert_eq!(names.len(), 8);
    for name in &names {
        assert_eq!(fs::read(d.join("a").join(name)).unwrap(), fs::read(d.join("b").join(name)).unwrap());
    }
    let side: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("a/utt001_-3dB.json")).unwrap()).unwrap();
    assert_eq!(side["snr_db"], -3.0);
    assert_eq!(side["seed"], 1);
    assert!(side["gain"].as_f64().unwrap() > 0.0);
    assert!(d.join("a/resolved_config.json").exists());
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_corpus(d, 2, 0.5);
    fs::remove_file(d.join("n1.wav")).unwrap();
    let out = run(d, &["mix", "--manifest", "manifest.tsv", "--out", "m"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n1.wav"));

    fs::write(d.join("broken.tsv"), "c0.wav\tn0.wav\t0\t1\nc0.wav\tn0.wav\n").unwrap();
    let out = run(d, &["mix", "--manifest", "broken.tsv", "--out", "m"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    fs::write(d.join("bad.cfg"), "colour=red\n").unwrap();
    let out = run(d, &["--config", "bad.cfg", "mix", "--manifest", "manifest.tsv", "--out", "m"]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(d.join("empty.tsv"), "# nothing\n").unwrap();
    let out = run(d, &["evaluate", "--pairs", "empty.tsv", "--out", "e.csv"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(d, &["denoise", "--input", "c0.wav", "--model", "missing.bin", "--out", "o.wav"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(d, &["train"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identity_pairs_score_at_the_caps() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_corpus(d, 2, 1.0);
    fs::write(d.join("pairs.tsv"), "c0.wav\tc0.wav\tself\nc1.wav\tc1.wav\tself\n").unwrap();
    ok(d, &["evaluate", "--pairs", "pairs.tsv", "--workers", "2", "--out", "ev/scores.csv"]);
    let csv = fs::read_to_string(d.join("ev/scores.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("ev/scores.summary.json")).unwrap()).unwrap();
    let mean = &summary[0]["mean"];
    assert_eq!(summary[0]["count"], 2);
    assert!((mean["stoi"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(mean["seg_snr_db"].as_f64().unwrap(), 35.0);
    assert_eq!(mean["si_sdr_db"].as_f64().unwrap(), SI_SDR_CAP_DB);
    assert!(mean["llr"].as_f64().unwrap().abs() < 1e-9);
}

fn train_small(d: &Path, out: &str, extra: &str) -> Output {
    fs::write(d.join("small.cfg"), format!("{SMALL_MODEL}max_epochs=2\n{extra}")).unwrap();
    run(d, &["--config", "small.cfg", "--seed", "7", "train", "--dataset", "ds", "--out", out])
}

#[test]
fn train_denoise_and_inspect() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_corpus(d, 3, 0.5);
    fs::write(d.join("small.cfg"), SMALL_MODEL).unwrap();
    ok(d, &["--config", "small.cfg", "dataset", "--manifest", "manifest.tsv", "--out", "ds"]);
    for part in ["train", "validation", "test"] {
        assert!(d.join(format!("ds/{part}.bin")).exists());
    }

    assert!(train_small(d, "r1", "").status.success());
    assert!(train_small(d, "r2", "").status.success());
    let loss = fs::read_to_string(d.join("r1/loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 3);
    assert_eq!(loss, fs::read_to_string(d.join("r2/loss.csv")).unwrap());
    assert!(d.join("r1/resolved_config.json").exists());

    let out = train_small(d, "r3", "learning_rate=1e300\n");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
    assert!(d.join("r3/model.bin").exists());

    let model = "r1/model.bin";
    ok(d, &["denoise", "--model", model, "--input", "c0.wav", "--out", "den/batch.wav"]);
    ok(d, &["denoise", "--model", model, "--input", "c0.wav", "--out", "den/stream.wav", "--streaming"]);
    let batch = read_wav::<f64>(d.join("den/batch.wav")).unwrap();
    let stream = read_wav::<f64>(d.join("den/stream.wav")).unwrap();
    assert_eq!(batch.len(), stream.len());
    let lsb = 1.0 / 32768.0;
    let worst = batch
        .samples()
        .iter()
        .zip(stream.samples())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= lsb * 1.01, "{worst}");
    assert!(d.join("den/batch.config.json").exists());

    ok(
        d,
        &["plot-data", "--model", model, "--mix", "c0.wav", "--clean", "c0.wav", "--noise", "c1.wav", "--out", "plot"],
    );
    let index: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("plot/plot_data.json")).unwrap()).unwrap();
    let (frames, bins) = (index["n_frames"].as_u64().unwrap() as usize, index["n_bins"].as_u64().unwrap() as usize);
    assert_eq!(bins, 65);
    assert_eq!(frames, 4000usize.div_ceil(64) - 1);
    for name in ["mix_magnitude", "ideal_clean_mask", "predicted_clean_mask", "predicted_noise_mask"] {
        let text = fs::read_to_string(d.join(format!("plot/{name}.tsv"))).unwrap();
        assert_eq!(text.lines().count(), frames, "{name}");
        assert!(text.lines().all(|l| l.split('\t').count() == bins), "{name}");
    }

    let table = ok(d, &["profile", "--model", model, "--duration", "1", "--out", "prof"]);
    for row in ["pre-process", "inference", "post-process", "total"] {
        assert!(table.contains(row), "{row}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("prof/latency.json")).unwrap()).unwrap();
    assert!(report["total"]["p99"].as_f64().unwrap() > 0.0);
}

#[test]
fn oracle_improves_a_noisy_mixture() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_corpus(d, 1, 1.0);
    ok(d, &["mix", "--manifest", "manifest.tsv", "--snr", "0", "--out", "m"]);
    let m = "m/utt000_0dB";
    ok(
        d,
        &[
            "denoise-oracle",
            "--mix",
            &format!("{m}_mix.wav"),
            "--clean",
            &format!("{m}_clean.wav"),
            "--noise",
            &format!("{m}_noise.wav"),
            "--out",
            "oracle.wav",
        ],
    );
    fs::write(
        d.join("pairs.tsv"),
        format!("{m}_clean.wav\t{m}_mix.wav\tnoisy\n{m}_clean.wav\toracle.wav\toracle\n"),
    )
    .unwrap();
    ok(d, &["evaluate", "--pairs", "pairs.tsv", "--out", "scores.csv"]);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("scores.summary.json")).unwrap()).unwrap();
    let seg = |i: usize| summary[i]["mean"]["seg_snr_db"].as_f64().unwrap();
    assert_eq!(summary[0]["condition"], "noisy");
    assert!(seg(1) > seg(0) + 3.0, "noisy {} oracle {}", seg(0), seg(1));
}
