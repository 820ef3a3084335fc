use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dualmask::data::synth;
use dualmask::dsp::{stft, AudioSignal, FrameGrid};
use dualmask::model::{forward_batch, BatchInput, ModelConfig, ModelWeights};
use dualmask::nn::{Graph, Tensor};
use dualmask::pipeline::predict_masks;

fn normalized_weights(seed: u64) -> ModelWeights<f64> {
    let config = ModelConfig::default();
    let mut w = ModelWeights::<f64>::init(&config, seed).unwrap();
    w.set_normalization(vec![-4.0; config.n_bins], vec![2.0; config.n_bins]).unwrap();
    w
}

#[test]
fn masks_never_look_ahead() {
    let w = normalized_weights(3);
    let a = synth::speech_like(1, 4000, 8000);
    let mut b_samples = a.samples().to_vec();
    let cut = 2000;
    b_samples[cut..].iter_mut().for_each(|v| *v = -*v * 3.0);
    let b = AudioSignal::new(b_samples, 8000).unwrap();
    let grid = FrameGrid::standard();
    let ma = predict_masks(&a, &stft(&a, &grid).unwrap(), &w).unwrap();
    let mb = predict_masks(&b, &stft(&b, &grid).unwrap(), &w).unwrap();
    // frame t spans samples [64t, 64t + 128)
    let last_shared = (cut - 128) / 64;
    for t in 0..ma.shape().0 {
        let same = ma.clean.row(t) == mb.clean.row(t) && ma.noise.row(t) == mb.noise.row(t);
        if t <= last_shared {
            assert!(same, "frame {t} changed although its context precedes the edit");
        } else if t == last_shared + 2 {
            assert!(!same, "frame {t} ignores its own input");
        }
    }
}

#[test]
fn every_layer_receives_gradient() {
    let w = normalized_weights(4);
    let c = w.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let feats: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..c.context_frames * c.n_bins).map(|_| rng.gen_range(-8.0..0.0)).collect())
        .collect();
    let raws: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..c.frame_length).map(|_| rng.gen_range(-0.2..0.2)).collect())
        .collect();
    let input = BatchInput::new(&w, &feats, &raws).unwrap();
    let target = Tensor::matrix(4, 2 * c.n_bins, (0..8 * c.n_bins).map(|_| rng.gen_range(0.0..0.7)).collect()).unwrap();
    let mut params = w.params.clone();
    let mut g = Graph::new();
    let out = forward_batch(&mut g, &params, &c, &input, true, &mut rng).unwrap();
    let loss = g.mse(out.masks, &target).unwrap();
    g.backward(loss, &mut params).unwrap();
    for p in params.iter().filter(|p| p.trainable) {
        let norm: f64 = p.grad.data().iter().map(|v| v * v).sum();
        assert!(norm > 0.0 && norm.is_finite(), "{} has gradient norm {norm}", p.name);
    }
}

#[test]
fn single_precision_tracks_double() {
    let w = normalized_weights(5);
    let w32: ModelWeights<f32> = w.cast();
    let x = synth::speech_like(7, 3000, 8000);
    let x32: AudioSignal<f32> = x.cast();
    let m64 = predict_masks(&x, &stft(&x, &FrameGrid::standard()).unwrap(), &w).unwrap();
    let m32 = predict_masks(&x32, &stft(&x32, &FrameGrid::<f32>::standard()).unwrap(), &w32).unwrap();
    let worst = m64
        .clean
        .as_slice()
        .iter()
        .zip(m32.clean.as_slice())
        .map(|(a, b)| (a - *b as f64).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn default_model_is_small() {
    let w = normalized_weights(1);
    assert_eq!(w.parameter_count(), w.config.parameter_count());
    assert!(w.parameter_count() < 250_000);
}
