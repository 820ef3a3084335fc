use dualmask::data::synth;
use dualmask::mask::SmoothingMode;
use dualmask::model::{ModelConfig, ModelWeights};
use dualmask::pipeline::denoise;
use dualmask::runtime::{profile_stream, StreamState};

fn run<T: dualmask::Scalar>(state: &mut StreamState<T>, w: &ModelWeights<T>, x: &[T]) -> Vec<T> {
    let mut out = Vec::new();
    for chunk in x.chunks_exact(state.hop()) {
        if let Some(y) = state.push_frame(chunk, w).unwrap() {
            out.extend_from_slice(y);
        }
    }
    out
}

#[test]
fn first_output_after_one_full_frame() {
    let w = ModelWeights::<f64>::init(&ModelConfig::default(), 1).unwrap();
    let mut s = StreamState::new(&w).unwrap();
    let hop = s.hop();
    assert!(s.push_frame(&vec![0.0; hop], &w).unwrap().is_none());
    assert_eq!(s.push_frame(&vec![0.0; hop], &w).unwrap().map(|o| o.len()), Some(hop));
    assert_eq!(s.algorithmic_latency(), 128);
    assert!(s.push_frame(&vec![0.0; hop + 1], &w).is_err());
}

#[test]
fn reset_replays_identically() {
    let w = ModelWeights::<f64>::init(&ModelConfig::default(), 2).unwrap();
    let x = synth::speech_like(3, 4000, 8000);
    let mut s = StreamState::new(&w).unwrap();
    let a = run(&mut s, &w, x.samples());
    s.reset();
    let b = run(&mut s, &w, x.samples());
    assert_eq!(a, b);
    assert_eq!(s.frames_processed(), 4000 / 64 - 1);
}

#[test]
fn single_precision_stream_tracks_double_offline() {
    let w = ModelWeights::<f64>::init(&ModelConfig::default(), 3).unwrap();
    let w32: ModelWeights<f32> = w.cast();
    let x = synth::speech_like(4, 4000, 8000);
    let offline = denoise(&x, &w, SmoothingMode::Causal).unwrap().output;
    let x32: Vec<f32> = x.samples().iter().map(|&v| v as f32).collect();
    let mut s = StreamState::new(&w32).unwrap();
    let online = run(&mut s, &w32, &x32);
    let worst = online
        .iter()
        .zip(offline.samples())
        .map(|(a, b)| (*a as f64 - b).abs())
        .fold(0.0, f64::max);
    // f32 high-pass sections have poles close to the unit circle
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn profile_report_has_the_four_rows() {
    let w = ModelWeights::<f32>::init(&ModelConfig::default(), 4).unwrap();
    let x = synth::speech_like(5, 8000, 8000).cast::<f32>();
    let report = profile_stream(&x, &w, 2).unwrap();
    assert_eq!(report.frames, 2 * (8000 / 64 - 1));
    let text = report.to_string();
    for row in ["pre-process", "inference", "post-process", "total"] {
        assert!(text.contains(row), "{text}");
    }
    assert!(report.total.mean >= report.inference.mean);
    assert!(profile_stream(&x.truncated(4000), &w, 1).is_err());
}
