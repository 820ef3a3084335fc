use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use dualmask::data::synth::{self, NoiseKind};
use dualmask::data::{
    generate_examples, make_mixture, prepare_triple, read_manifest, read_shard, split_dataset, write_shard,
    MixtureSpec, TrainingExample,
};
use dualmask::dsp::wav::{read_wav, write_wav};
use dualmask::dsp::{bandpass_filter, resample, stft, AudioSignal, BandSpec, FrameGrid};
use dualmask::mask::{ideal_masks, SmoothingMode};
use dualmask::metrics::{evaluate_pairs, parse_pairs, ConditionSummary};
use dualmask::model::{load_weights, save_weights, ModelConfig, ModelWeights};
use dualmask::pipeline::{analyze_mixture, denoise as denoise_offline, enhance_with_masks, predict_masks, PostProcess};
use dualmask::runtime::{profile_stream, StreamState};
use dualmask::train::{history_csv, train as train_model, StopReason};
use dualmask::{Matrix, Scalar, PIPELINE_SAMPLE_RATE};
use serde_json::json;

use crate::config::{write_snapshot, Settings};
use crate::BadInput;

const DEFAULT_SNRS: [f64; 4] = [-3.0, 0.0, 3.0, 10.0];
const SPLIT_FRACTIONS: [f64; 3] = [0.8, 0.1, 0.1];
const SNAPSHOT: &str = "resolved_config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Smoothing {
    Symmetric,
    Causal,
    None,
}

impl From<Smoothing> for SmoothingMode {
    fn from(s: Smoothing) -> Self {
        match s {
            Smoothing::Symmetric => SmoothingMode::Symmetric,
            Smoothing::Causal => SmoothingMode::Causal,
            Smoothing::None => SmoothingMode::None,
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Snapshot path for a command whose output is a single file.
fn file_snapshot(out: &Path) -> PathBuf {
    out.with_extension("config.json")
}

fn ensure_parent(out: &Path) -> Result<()> {
    match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Reads a WAV and brings it to the pipeline rate.
fn load_audio(path: &Path) -> Result<AudioSignal<f64>> {
    let signal = read_wav::<f64>(path)?;
    if signal.sample_rate() != PIPELINE_SAMPLE_RATE {
        log::warn!(
            "{}: resampling {} Hz to {} Hz",
            path.display(),
            signal.sample_rate(),
            PIPELINE_SAMPLE_RATE
        );
        return Ok(resample(&signal, PIPELINE_SAMPLE_RATE));
    }
    Ok(signal)
}

fn snr_label(snr: f64) -> String {
    format!("{snr}dB")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of utterances.
    #[arg(long, default_value_t = 4)]
    pub count: usize,
    /// Utterance length in seconds.
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
    /// Comma-separated noise kinds, cycled over utterances.
    #[arg(long, default_value = "white,chirp,filtered,impulse_train")]
    pub kinds: String,
    /// Comma-separated SNRs written to the manifest, cycled over utterances.
    #[arg(long)]
    pub snr: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn synth(a: SynthArgs, mut settings: Settings) -> Result<()> {
    if let Some(s) = &a.snr {
        settings.set("snr", s);
    }
    let snrs = settings.snr_list()?.unwrap_or(DEFAULT_SNRS.to_vec());
    let kinds: Vec<NoiseKind> = a
        .kinds
        .split(',')
        .map(|k| k.trim().parse().map_err(|e| BadInput(format!("{e}"))))
        .collect::<std::result::Result<_, _>>()?;
    if kinds.is_empty() || a.count == 0 {
        return Err(BadInput("need at least one utterance and one noise kind".into()).into());
    }
    if !(a.duration > 0.05) {
        return Err(BadInput(format!("duration {} s is too short", a.duration)).into());
    }
    let seed = settings.seed()?;
    let rate = PIPELINE_SAMPLE_RATE;
    let len = (a.duration * rate as f64).round() as usize;
    create_dir(&a.out)?;
    let mut manifest = String::from("# clean\tnoise\tsnr_db\tseed\n");
    for i in 0..a.count {
        let s = seed.wrapping_mul(1000).wrapping_add(i as u64);
        let kind = kinds[i % kinds.len()];
        let clean_name = format!("clean_{i:03}.wav");
        let noise_name = format!("noise_{i:03}_{kind}.wav");
        write_wav(a.out.join(&clean_name), &synth::speech_like(s, len, rate))?;
        write_wav(a.out.join(&noise_name), &synth::noise(kind, s, len + len / 3, rate))?;
        writeln!(manifest, "{clean_name}\t{noise_name}\t{}\t{s}", snrs[i % snrs.len()])?;
    }
    write_text(&a.out.join("manifest.tsv"), &manifest)?;
    write_snapshot(
        &a.out.join(SNAPSHOT),
        "synth",
        json!({"count": a.count, "duration": a.duration, "kinds": a.kinds}),
        &settings,
        json!({"seed": seed, "snr": snrs, "sample_rate": rate}),
    )?;
    println!("wrote {} utterances to {}", a.count, a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct MixArgs {
    /// Manifest of `clean<TAB>noise<TAB>snr<TAB>seed` lines; its SNR column is replaced by the list.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated SNR list in dB (default -3,0,3,10).
    #[arg(long, allow_hyphen_values = true)]
    pub snr: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn mix(a: MixArgs, mut settings: Settings) -> Result<()> {
    if let Some(s) = &a.snr {
        settings.set("snr", s);
    }
    let snrs = settings.snr_list()?.unwrap_or(DEFAULT_SNRS.to_vec());
    let specs = read_manifest(&a.manifest)?;
    if specs.is_empty() {
        return Err(BadInput(format!("{}: manifest is empty", a.manifest.display())).into());
    }
    create_dir(&a.out)?;
    let mut pairs = String::from("# clean\tnoisy\tcondition\n");
    let mut count = 0;
    for (u, spec) in specs.iter().enumerate() {
        for &snr in &snrs {
            let mixture = make_mixture::<f64>(&MixtureSpec {
                target_snr_db: snr,
                ..spec.clone()
            })?;
            let stem = format!("utt{u:03}_{}", snr_label(snr));
            let names = ["mix", "clean", "noise"].map(|k| format!("{stem}_{k}.wav"));
            for (name, signal) in names.iter().zip([&mixture.mix, &mixture.clean, &mixture.noise]) {
                write_wav(a.out.join(name), signal)?;
            }
            let sidecar = json!({
                "utterance": u,
                "clean_source": spec.clean_path,
                "noise_source": spec.noise_path,
                "snr_db": snr,
                "seed": spec.seed,
                "gain": mixture.gain,
                "sample_rate": PIPELINE_SAMPLE_RATE,
                "mix": names[0],
                "clean": names[1],
                "noise": names[2],
            });
            write_text(
                &a.out.join(format!("{stem}.json")),
                &(serde_json::to_string_pretty(&sidecar)? + "\n"),
            )?;
            writeln!(pairs, "{}\t{}\t{}", names[1], names[0], snr_label(snr))?;
            count += 1;
        }
    }
    write_text(&a.out.join("noisy_pairs.tsv"), &pairs)?;
    write_snapshot(
        &a.out.join(SNAPSHOT),
        "mix",
        json!({"manifest": a.manifest}),
        &settings,
        json!({"snr": snrs, "utterances": specs.len()}),
    )?;
    println!("wrote {count} mixtures to {}", a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Manifest of `clean<TAB>noise<TAB>snr<TAB>seed` lines, one utterance each.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Context window in STFT frames.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn dataset(a: DatasetArgs, mut settings: Settings) -> Result<()> {
    if let Some(t) = a.frames {
        settings.set("frames", t);
    }
    let config = settings.model()?;
    let seed = settings.seed()?;
    let specs = read_manifest(&a.manifest)?;
    let mut examples: Vec<TrainingExample<f64>> = Vec::new();
    for (u, spec) in specs.iter().enumerate() {
        let triple = prepare_triple(&make_mixture::<f64>(spec)?)?;
        examples.extend(generate_examples(&triple, &config, u)?);
    }
    let split = split_dataset(examples, SPLIT_FRACTIONS, seed)?;
    create_dir(&a.out)?;
    let mut counts = serde_json::Map::new();
    for (name, part) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
        if part.is_empty() {
            log::warn!("{name} partition has no examples");
            continue;
        }
        let info = write_shard(a.out.join(format!("{name}.bin")), part)?;
        counts.insert(name.into(), json!(info.n_examples));
    }
    write_text(
        &a.out.join("dataset.json"),
        &(serde_json::to_string_pretty(&json!({"model": config, "examples": counts}))? + "\n"),
    )?;
    write_snapshot(
        &a.out.join(SNAPSHOT),
        "dataset",
        json!({"manifest": a.manifest, "frames": a.frames}),
        &settings,
        json!({"model": config, "seed": seed, "split": SPLIT_FRACTIONS}),
    )?;
    println!("examples per partition: {}", serde_json::Value::Object(counts));
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `dataset`.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Output directory for weights, loss log and summary.
    #[arg(long)]
    pub out: PathBuf,
}

/// Model config stored with a dataset, with run settings applied on top.
fn dataset_model(dir: &Path, settings: &Settings) -> Result<ModelConfig> {
    let path = dir.join("dataset.json");
    let base = match fs::read_to_string(&path) {
        Ok(text) => {
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| BadInput(format!("{}: {e}", path.display())))?;
            serde_json::from_value(v["model"].clone()).map_err(|e| BadInput(format!("{}: {e}", path.display())))?
        }
        Err(_) => ModelConfig::default(),
    };
    settings.model_from(base)
}

pub fn train(a: TrainArgs, mut settings: Settings) -> Result<()> {
    if let Some(t) = a.frames {
        settings.set("frames", t);
    }
    let config = dataset_model(&a.dataset, &settings)?;
    let cfg = settings.training()?;
    let (info, train_set) = read_shard::<f64>(a.dataset.join("train.bin"))?;
    if (info.context_frames, info.n_bins, info.frame_length) != (config.context_frames, config.n_bins, config.frame_length) {
        return Err(BadInput(format!(
            "shard holds {} frames × {} bins with {}-sample raw windows; the model expects {} × {} with {}",
            info.context_frames, info.n_bins, info.frame_length, config.context_frames, config.n_bins, config.frame_length
        ))
        .into());
    }
    let validation_path = a.dataset.join("validation.bin");
    let validation = if validation_path.exists() {
        read_shard::<f64>(&validation_path)?.1
    } else {
        log::warn!("no validation shard; keeping the weights with the lowest training loss");
        Vec::new()
    };
    create_dir(&a.out)?;
    write_snapshot(
        &a.out.join(SNAPSHOT),
        "train",
        json!({"dataset": a.dataset, "frames": a.frames}),
        &settings,
        json!({"model": config, "training": cfg}),
    )?;
    let initial = ModelWeights::<f64>::init(&config, cfg.seed)?;
    log::info!("training {} parameters on {} examples", initial.parameter_count(), train_set.len());
    let outcome = train_model(initial, &train_set, &validation, &cfg)?;
    let model_path = a.out.join("model.bin");
    save_weights(&outcome.weights, &model_path)?;
    write_text(&a.out.join("loss.csv"), &history_csv(&outcome.history))?;
    let best_validation = outcome
        .history
        .iter()
        .filter_map(|e| e.validation_loss)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
    let summary = json!({
        "stop": outcome.stop,
        "epochs": outcome.history.len(),
        "final_train_loss": outcome.final_train_loss(),
        "best_validation_loss": best_validation,
        "parameters": outcome.weights.parameter_count(),
    });
    write_text(&a.out.join("training.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    if outcome.stop == StopReason::Diverged {
        return Err(dualmask::Error::Numerical(format!(
            "training diverged after {} epochs; last good weights saved to {}",
            outcome.history.len(),
            model_path.display()
        ))
        .into());
    }
    println!(
        "{:?} after {} epochs, final training loss {:.3e}; weights in {}",
        outcome.stop,
        outcome.history.len(),
        outcome.final_train_loss().unwrap_or(f64::NAN),
        model_path.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Process hop by hop through the streaming runtime.
    #[arg(long)]
    pub streaming: bool,
    /// Mask smoothing of the batch path; streaming always uses the causal kernel.
    #[arg(long, value_enum, default_value_t = Smoothing::Causal)]
    pub smoothing: Smoothing,
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs a signal through the streaming runtime. The input is padded with
/// zeros so that every input sample has been emitted; output sample `i`
/// corresponds to input sample `i`.
fn denoise_streaming(x: &AudioSignal<f64>, weights: &ModelWeights<f64>) -> Result<AudioSignal<f64>> {
    let mut state = StreamState::new(weights)?;
    let hop = state.hop();
    let mut input = x.samples().to_vec();
    input.resize(x.len().div_ceil(hop) * hop + hop, 0.0);
    let mut out = Vec::with_capacity(input.len());
    for chunk in input.chunks_exact(hop) {
        if let Some(y) = state.push_frame(chunk, weights)? {
            out.extend_from_slice(y);
        }
    }
    out.truncate(x.len());
    Ok(AudioSignal::new(out, x.sample_rate())?)
}

pub fn denoise(a: DenoiseArgs, settings: Settings) -> Result<()> {
    let weights = load_weights::<f64>(&a.model)?;
    let x = load_audio(&a.input)?;
    let smoothing = if a.streaming { Smoothing::Causal } else { a.smoothing };
    let output = if a.streaming {
        denoise_streaming(&x, &weights)?
    } else {
        denoise_offline(&x, &weights, smoothing.into())?.output
    };
    ensure_parent(&a.out)?;
    write_wav(&a.out, &output)?;
    write_snapshot(
        &file_snapshot(&a.out),
        "denoise",
        json!({"input": a.input, "model": a.model, "streaming": a.streaming, "out": a.out}),
        &settings,
        json!({"model": weights.config, "smoothing": format!("{smoothing:?}").to_lowercase()}),
    )?;
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub mix: PathBuf,
    #[arg(long)]
    pub clean: PathBuf,
    #[arg(long)]
    pub noise: PathBuf,
    #[arg(long, value_enum, default_value_t = Smoothing::Symmetric)]
    pub smoothing: Smoothing,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn denoise_oracle(a: OracleArgs, settings: Settings) -> Result<()> {
    let config = settings.model()?;
    let post = PostProcess::for_model(&config, a.smoothing.into())?;
    let [mix, clean, noise] = [&a.mix, &a.clean, &a.noise].map(|p| load_audio(p));
    let out = dualmask::pipeline::denoise_oracle(&mix?, &clean?, &noise?, &post)?;
    ensure_parent(&a.out)?;
    write_wav(&a.out, &out.output)?;
    write_snapshot(
        &file_snapshot(&a.out),
        "denoise-oracle",
        json!({"mix": a.mix, "clean": a.clean, "noise": a.noise, "out": a.out}),
        &settings,
        json!({"model": config, "smoothing": format!("{:?}", a.smoothing).to_lowercase()}),
    )?;
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Lines of `clean<TAB>enhanced[<TAB>condition]`.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Worker threads for scoring.
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    /// Per-pair CSV; the per-condition summary goes next to it.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn evaluate(a: EvaluateArgs, settings: Settings) -> Result<()> {
    let text = fs::read_to_string(&a.pairs)
        .map_err(|e| BadInput(format!("cannot read {}: {e}", a.pairs.display())))?;
    let pairs = parse_pairs(&text, a.pairs.parent().unwrap_or(Path::new(".")))?;
    let reports = evaluate_pairs(&pairs, a.workers)?;
    let mut csv = String::from("clean,enhanced,condition,seg_snr_db,llr,stoi,si_sdr_db\n");
    for (p, r) in pairs.iter().zip(&reports) {
        writeln!(
            csv,
            "{},{},{},{:.6},{:.6},{:.6},{:.6}",
            csv_field(&p.clean.display().to_string()),
            csv_field(&p.enhanced.display().to_string()),
            csv_field(&p.condition),
            r.seg_snr_db,
            r.llr,
            r.stoi,
            r.si_sdr_db
        )?;
    }
    let summary = ConditionSummary::from_results(&pairs, &reports);
    ensure_parent(&a.out)?;
    write_text(&a.out, &csv)?;
    write_text(
        &a.out.with_extension("summary.json"),
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;
    write_snapshot(
        &file_snapshot(&a.out),
        "evaluate",
        json!({"pairs": a.pairs, "workers": a.workers, "out": a.out}),
        &settings,
        json!({}),
    )?;
    println!(
        "{:<20} {:>6} {:>10} {:>8} {:>8} {:>10}",
        "condition", "count", "segsnr_db", "llr", "stoi", "si_sdr_db"
    );
    for s in &summary {
        println!(
            "{:<20} {:>6} {:>10.3} {:>8.4} {:>8.4} {:>10.3}",
            s.condition, s.count, s.mean.seg_snr_db, s.mean.llr, s.mean.stoi, s.mean.si_sdr_db
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Input to stream; a seeded synthetic utterance when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Length of the synthetic input in seconds.
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Run in single precision.
    #[arg(long)]
    pub f32: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn profile(a: ProfileArgs, settings: Settings) -> Result<()> {
    let signal = match &a.input {
        Some(p) => load_audio(p)?,
        None => {
            let len = (a.duration * PIPELINE_SAMPLE_RATE as f64).round() as usize;
            synth::speech_like(settings.seed()?, len, PIPELINE_SAMPLE_RATE)
        }
    };
    let weights = load_weights::<f64>(&a.model)?;
    let report = if a.f32 {
        profile_stream(&signal.cast::<f32>(), &weights.cast::<f32>(), a.repeats)?
    } else {
        profile_stream(&signal, &weights, a.repeats)?
    };
    create_dir(&a.out)?;
    write_text(&a.out.join("latency.json"), &(report.to_json() + "\n"))?;
    write_text(&a.out.join("latency.txt"), &format!("{report}\n"))?;
    write_snapshot(
        &a.out.join(SNAPSHOT),
        "profile",
        json!({"model": a.model, "input": a.input, "duration": a.duration, "repeats": a.repeats, "f32": a.f32}),
        &settings,
        json!({"model": weights.config, "samples": signal.len()}),
    )?;
    println!("{report}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub mix: PathBuf,
    /// Clean reference; with `--noise` it enables the ideal masks.
    #[arg(long, requires = "noise")]
    pub clean: Option<PathBuf>,
    #[arg(long, requires = "clean")]
    pub noise: Option<PathBuf>,
    /// Trained model; enables predicted masks and the enhanced spectrogram.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Smoothing::Symmetric)]
    pub smoothing: Smoothing,
    #[arg(long)]
    pub out: PathBuf,
}

/// Tab-separated rows of a matrix, one line per frame.
fn matrix_text<T: Scalar>(m: &Matrix<T>) -> String {
    let mut s = String::with_capacity(m.rows() * m.cols() * 12);
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            if c > 0 {
                s.push('\t');
            }
            write!(s, "{:.6e}", v.as_f64()).expect("string write");
        }
        s.push('\n');
    }
    s
}

pub fn plot_data(a: PlotArgs, settings: Settings) -> Result<()> {
    if a.model.is_none() && a.clean.is_none() {
        return Err(BadInput("plot-data needs --model or --clean/--noise".into()).into());
    }
    let weights = a.model.as_ref().map(load_weights::<f64>).transpose()?;
    let config = match &weights {
        Some(w) => w.config.clone(),
        None => settings.model()?,
    };
    let band = BandSpec::default();
    let grid = FrameGrid::<f64>::hann(config.frame_length, config.hop)?;
    let mix = load_audio(&a.mix)?;
    let (filtered, x) = analyze_mixture(&mix, band, &grid)?;
    let mut files: Vec<(String, Matrix<f64>)> = vec![("mix_magnitude".into(), x.magnitude())];

    if let (Some(cp), Some(np)) = (&a.clean, &a.noise) {
        let (clean, noise) = (load_audio(cp)?, load_audio(np)?);
        if clean.len() != mix.len() || noise.len() != mix.len() {
            return Err(BadInput("mixture, clean and noise lengths differ".into()).into());
        }
        let s = stft(&bandpass_filter(&clean, band.low_hz, band.high_hz)?, &grid)?;
        let n = stft(&bandpass_filter(&noise, band.low_hz, band.high_hz)?, &grid)?;
        let ideal = ideal_masks(&s, &n, &x)?;
        files.push(("clean_magnitude".into(), s.magnitude()));
        files.push(("ideal_clean_mask".into(), ideal.clean));
        files.push(("ideal_noise_mask".into(), ideal.noise));
    }
    if let Some(w) = &weights {
        let masks = predict_masks(&filtered, &x, w)?;
        let post = PostProcess::for_model(&config, a.smoothing.into())?;
        let enhanced = enhance_with_masks(&x, masks, &post)?;
        files.push(("enhanced_magnitude".into(), stft(&enhanced.output, &grid)?.magnitude()));
        files.push(("predicted_clean_mask".into(), enhanced.masks.clean));
        files.push(("predicted_noise_mask".into(), enhanced.masks.noise));
    }

    create_dir(&a.out)?;
    let mut index = serde_json::Map::new();
    for (name, m) in &files {
        let file = format!("{name}.tsv");
        write_text(&a.out.join(&file), &matrix_text(m))?;
        index.insert(name.clone(), json!({"file": file, "rows": m.rows(), "cols": m.cols()}));
    }
    let shape = json!({"n_frames": x.n_frames(), "n_bins": x.n_bins(), "sample_rate": PIPELINE_SAMPLE_RATE, "hop": config.hop, "matrices": index});
    write_text(&a.out.join("plot_data.json"), &(serde_json::to_string_pretty(&shape)? + "\n"))?;
    write_snapshot(
        &a.out.join(SNAPSHOT),
        "plot-data",
        json!({"mix": a.mix, "clean": a.clean, "noise": a.noise, "model": a.model}),
        &settings,
        json!({"model": config, "smoothing": format!("{:?}", a.smoothing).to_lowercase()}),
    )?;
    println!("wrote {} matrices of {} × {} to {}", files.len(), x.n_frames(), x.n_bins(), a.out.display());
    Ok(())
}
