//! End-to-end transcription: waveform in, note events out, with every
//! intermediate product kept for inspection.
//!
//! The pipeline is a straight composition of the frontend, the network
//! forward pass, and the peak-picking decoder. It owns no state and no
//! randomness, so its output is a pure function of samples, weights, and
//! configuration — identical across runs and across thread counts.

use serde::Serialize;
use thiserror::Error;

use crate::decoder::{self, DecoderParams, ScorePrediction};
use crate::frontend::{self, FrontendConfig, FrontendError, SpectroInput};
use crate::network::{self, ModelSpec, ModelWeights, NetworkError, NetworkOutput};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Decoder(#[from] crate::decoder::DecoderError),
}

/// Everything the caller chose for a transcription run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub frontend: FrontendConfig,
    pub decoder: DecoderParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { frontend: FrontendConfig::default(), decoder: DecoderParams::default() }
    }
}

/// A full transcription with its intermediate artifacts: the
/// time-frequency input, the network's rolls, and the decoded score.
#[derive(Debug, Clone)]
pub struct Transcription {
    pub input: SpectroInput,
    pub output: NetworkOutput,
    pub score: ScorePrediction,
}

impl Transcription {
    /// The onset roll the decoder consumed: the last stage's output.
    pub fn final_onset_roll(&self) -> &crate::roll::PianoRoll {
        self.output.onset_stages.last().expect("model specs require at least one stage")
    }
}

/// Runs the network on an already-computed time-frequency input and
/// decodes the result.
pub fn infer_and_decode(
    input: &SpectroInput,
    spec: &ModelSpec,
    weights: &ModelWeights,
    params: &DecoderParams,
) -> Result<(NetworkOutput, ScorePrediction), PipelineError> {
    let output = network::forward(spec, weights, input)?;
    let onset = output.onset_stages.last().expect("model specs require at least one stage");
    let score = decoder::decode(onset, &output.velocity, params)?;
    Ok((output, score))
}

/// Waveform to score. Audio at a different rate than the frontend
/// expects is resampled first.
pub fn transcribe(
    samples: &[f32],
    sample_rate: u32,
    spec: &ModelSpec,
    weights: &ModelWeights,
    cfg: &PipelineConfig,
) -> Result<Transcription, PipelineError> {
    let resampled;
    let samples = if sample_rate == cfg.frontend.sample_rate {
        samples
    } else {
        resampled = frontend::resample(samples, sample_rate, cfg.frontend.sample_rate);
        &resampled
    };
    let input = frontend::compute(samples, &cfg.frontend)?;
    let (output, score) = infer_and_decode(&input, spec, weights, &cfg.decoder)?;
    Ok(Transcription { input, output, score })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(seconds: f64, freq: f64) -> Vec<f32> {
        let n = (seconds * 16_000.0) as usize;
        (0..n)
            .map(|i| (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin()) as f32)
            .collect()
    }

    fn toy_setup(seed: u64) -> (ModelSpec, ModelWeights) {
        let spec = ModelSpec::toy();
        let weights = ModelWeights::random(&spec, seed);
        (spec, weights)
    }

    #[test]
    fn silence_with_zero_weights_yields_no_notes() {
        let spec = ModelSpec::toy();
        let weights = ModelWeights::zeros(&spec);
        let samples = vec![0.0f32; 16_000];
        let t = transcribe(&samples, 16_000, &spec, &weights, &PipelineConfig::default()).unwrap();
        // zero weights put every roll cell at exactly one half, far below
        // the 0.74 threshold
        assert!(t.score.events.is_empty());
        assert!(t.final_onset_roll().matrix().data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn transcription_is_reproducible_run_to_run() {
        let (spec, weights) = toy_setup(7);
        let samples = tone(1.0, 440.0);
        let cfg = PipelineConfig::default();
        let a = transcribe(&samples, 16_000, &spec, &weights, &cfg).unwrap();
        let b = transcribe(&samples, 16_000, &spec, &weights, &cfg).unwrap();
        assert_eq!(a.score, b.score);
        assert_eq!(a.output.velocity, b.output.velocity);
        assert_eq!(a.output.onset_stages, b.output.onset_stages);
        assert_eq!(a.input.mel, b.input.mel);
    }

    #[test]
    fn thread_count_does_not_change_the_result() {
        let (spec, weights) = toy_setup(11);
        let samples = tone(0.8, 523.25);
        let cfg = PipelineConfig::default();
        let runs: Vec<Transcription> = [1usize, 4, 8]
            .iter()
            .map(|&threads| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .expect("local thread pool")
                    .install(|| transcribe(&samples, 16_000, &spec, &weights, &cfg).unwrap())
            })
            .collect();
        for other in &runs[1..] {
            assert_eq!(runs[0].score, other.score);
            assert_eq!(runs[0].output.velocity, other.output.velocity);
            assert_eq!(runs[0].output.onset_stages, other.output.onset_stages);
        }
    }

    #[test]
    fn pipeline_equals_manual_composition_bit_for_bit() {
        let (spec, weights) = toy_setup(3);
        let samples = tone(0.6, 330.0);
        let cfg = PipelineConfig::default();
        let t = transcribe(&samples, 16_000, &spec, &weights, &cfg).unwrap();

        let input = frontend::compute(&samples, &cfg.frontend).unwrap();
        let output = network::forward(&spec, &weights, &input).unwrap();
        let score = decoder::decode(
            output.onset_stages.last().unwrap(),
            &output.velocity,
            &cfg.decoder,
        )
        .unwrap();
        assert_eq!(t.input.mel, input.mel);
        assert_eq!(t.input.delta, input.delta);
        assert_eq!(t.output.onset_stages, output.onset_stages);
        assert_eq!(t.output.velocity, output.velocity);
        assert_eq!(t.score, score);
    }

    #[test]
    fn foreign_sample_rates_are_resampled_in() {
        let (spec, weights) = toy_setup(5);
        let cfg = PipelineConfig::default();
        // the same tone delivered at 32 kHz must land near the 16 kHz run
        let hi = tone(0.5, 440.0)
            .iter()
            .flat_map(|&s| [s, s])
            .collect::<Vec<f32>>();
        let t_hi = transcribe(&hi, 32_000, &spec, &weights, &cfg).unwrap();
        let t_lo =
            transcribe(&tone(0.5, 440.0), 16_000, &spec, &weights, &cfg).unwrap();
        assert_eq!(t_hi.input.mel.rows(), t_lo.input.mel.rows());
        // frame counts agree; cell values differ only by resampling error
        assert_eq!(t_hi.input.mel.cols(), t_lo.input.mel.cols());
    }

    #[test]
    fn mismatched_weights_are_rejected() {
        let spec = ModelSpec::toy();
        let weights = ModelWeights::default();
        let samples = tone(0.3, 440.0);
        assert!(matches!(
            transcribe(&samples, 16_000, &spec, &weights, &PipelineConfig::default()),
            Err(PipelineError::Network(_))
        ));
    }
}
