//! Forward-pass inference for the onset/velocity transcription network.
//!
//! The model reads a two-plane spectrogram (log-mel and its temporal
//! derivative, 229 bins), normalizes every frequency bin independently,
//! extracts features with residual bottlenecks, collapses the frequency
//! axis to the 88 piano keys with a single depthwise convolution, and then
//! refines onset predictions through sequential stages that each emit a
//! sigmoid piano roll. A final head predicts per-key velocities. There is
//! no pooling and no recurrence: the time dimension is preserved end to
//! end, and a forward pass is a pure function of spec, weights, and input.

pub mod ops;
pub mod weights;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::SpectroInput;
use crate::matrix::Matrix;
use crate::midi::NUM_KEYS;
use crate::roll::{PianoRoll, RollKind};

pub use ops::Tensor;
pub use weights::{ModelWeights, TensorDecl, TensorRole, WeightTensor};

/// Frequency bins the network expects at its input.
pub const INPUT_BINS: usize = 229;
/// Vertical extent of the depthwise frequency-to-key transform
/// (229 - 142 + 1 = 88 output rows).
pub const DOMAIN_KERNEL: usize = INPUT_BINS - NUM_KEYS + 1;
/// Epsilon inside every normalization denominator.
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape { what: String, expected: String, got: String },
    #[error("weight error: {0}")]
    Weights(String),
    #[error("weight/spec format error: {0}")]
    Format(String),
    #[error("bad model spec: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Feature block varieties available to the model body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// Residual 1x1 -> kxk -> 1x1 bottleneck.
    Bottleneck,
    /// Residual branch of chained time-dilated convolutions, concatenated
    /// taps, a merge projection, and a channel-attention gate.
    Cam,
}

/// Architecture description: channel sizes and block lists. Weights are
/// named deterministically from this layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Feature channels everywhere outside bottleneck interiors.
    pub stem_channels: usize,
    /// Mid channels inside residual bottlenecks.
    pub bottleneck_mid: usize,
    /// Branch channels inside attention blocks.
    pub cam_mid: usize,
    /// Hidden units of the attention gate.
    pub attention_hidden: usize,
    /// Time dilation of each chained attention-block convolution.
    pub cam_dilations: Vec<usize>,
    /// Blocks applied on the 229-bin frequency axis (3x3 bottlenecks).
    pub input_blocks: Vec<BlockKind>,
    /// Blocks applied per onset stage on the 88-key axis (1x3 kernels).
    pub stage_blocks: Vec<BlockKind>,
    /// Blocks of the velocity branch, also on the key axis.
    pub velocity_blocks: Vec<BlockKind>,
    /// Number of sequential onset refinement stages.
    pub num_onset_stages: usize,
    /// Training-time dropout rate; inference ignores it.
    pub dropout: f64,
    /// Negative-side slope of every leaky rectifier.
    pub leaky_slope: f64,
}

impl ModelSpec {
    /// Small configuration for tests and demos (84,392 parameters).
    pub fn toy() -> Self {
        Self {
            stem_channels: 16,
            bottleneck_mid: 4,
            cam_mid: 4,
            attention_hidden: 4,
            cam_dilations: vec![1, 2, 4],
            input_blocks: vec![BlockKind::Bottleneck],
            stage_blocks: vec![BlockKind::Bottleneck, BlockKind::Bottleneck, BlockKind::Cam],
            velocity_blocks: vec![BlockKind::Bottleneck, BlockKind::Bottleneck, BlockKind::Cam],
            num_onset_stages: 3,
            dropout: 0.2,
            leaky_slope: 0.01,
        }
    }

    /// Full-size configuration (3,123,952 parameters).
    pub fn reference() -> Self {
        Self {
            stem_channels: 176,
            bottleneck_mid: 88,
            cam_mid: 88,
            attention_hidden: 22,
            cam_dilations: vec![1, 2, 4],
            input_blocks: vec![BlockKind::Bottleneck; 4],
            stage_blocks: vec![BlockKind::Bottleneck, BlockKind::Bottleneck, BlockKind::Cam],
            velocity_blocks: vec![BlockKind::Bottleneck, BlockKind::Bottleneck, BlockKind::Cam],
            num_onset_stages: 3,
            dropout: 0.2,
            leaky_slope: 0.01,
        }
    }

    pub fn check(&self) -> Result<(), NetworkError> {
        let positive = [
            ("stem_channels", self.stem_channels),
            ("bottleneck_mid", self.bottleneck_mid),
            ("cam_mid", self.cam_mid),
            ("attention_hidden", self.attention_hidden),
            ("num_onset_stages", self.num_onset_stages),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(NetworkError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.cam_dilations.is_empty() || self.cam_dilations.iter().any(|&d| d == 0) {
            return Err(NetworkError::Config("cam_dilations must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NetworkError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !self.leaky_slope.is_finite() || self.leaky_slope < 0.0 {
            return Err(NetworkError::Config(format!("bad leaky slope {}", self.leaky_slope)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = SpecFile { version: SPEC_VERSION, spec: self.clone() };
        serde_json::to_string_pretty(&file).expect("spec serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let file: SpecFile =
            serde_json::from_str(text).map_err(|e| NetworkError::Format(e.to_string()))?;
        if file.version != SPEC_VERSION {
            return Err(NetworkError::Format(format!(
                "unsupported spec version {} (this build reads {SPEC_VERSION})",
                file.version
            )));
        }
        file.spec.check()?;
        Ok(file.spec)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), NetworkError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, NetworkError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

const SPEC_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SpecFile {
    version: u32,
    spec: ModelSpec,
}

/// Sigmoid piano rolls produced by one forward pass: one roll per onset
/// stage plus a velocity roll, all 88 x T'.
#[derive(Debug, Clone)]
pub struct NetworkOutput {
    pub onset_stages: Vec<PianoRoll>,
    pub velocity: PianoRoll,
}

// ---------------------------------------------------------------------------
// Tensor layout declarations
// ---------------------------------------------------------------------------

fn sbn_decls(out: &mut Vec<TensorDecl>, prefix: &str, channels: usize, bins: usize) {
    let dims = vec![channels, bins];
    out.push(TensorDecl::new(format!("{prefix}.gamma"), dims.clone(), TensorRole::Gamma));
    out.push(TensorDecl::new(format!("{prefix}.beta"), dims.clone(), TensorRole::Beta));
    out.push(TensorDecl::new(format!("{prefix}.mean"), dims.clone(), TensorRole::RunningMean));
    out.push(TensorDecl::new(format!("{prefix}.var"), dims, TensorRole::RunningVar));
}

fn bottleneck_decls(
    out: &mut Vec<TensorDecl>,
    prefix: &str,
    channels: usize,
    mid: usize,
    bins: usize,
    k_vert: usize,
) {
    out.push(TensorDecl::new(
        format!("{prefix}.conv1.weight"),
        vec![mid, channels, 1, 1],
        TensorRole::Kernel,
    ));
    sbn_decls(out, &format!("{prefix}.sbn1"), mid, bins);
    out.push(TensorDecl::new(
        format!("{prefix}.conv2.weight"),
        vec![mid, mid, k_vert, 3],
        TensorRole::Kernel,
    ));
    sbn_decls(out, &format!("{prefix}.sbn2"), mid, bins);
    out.push(TensorDecl::new(
        format!("{prefix}.conv3.weight"),
        vec![channels, mid, 1, 1],
        TensorRole::Kernel,
    ));
    sbn_decls(out, &format!("{prefix}.sbn3"), channels, bins);
}

fn cam_decls(out: &mut Vec<TensorDecl>, prefix: &str, spec: &ModelSpec, bins: usize) {
    let c = spec.stem_channels;
    let mid = spec.cam_mid;
    for (i, _) in spec.cam_dilations.iter().enumerate() {
        let in_ch = if i == 0 { c } else { mid };
        out.push(TensorDecl::new(
            format!("{prefix}.cd{}.weight", i + 1),
            vec![mid, in_ch, 1, 3],
            TensorRole::Kernel,
        ));
        sbn_decls(out, &format!("{prefix}.cd{}_sbn", i + 1), mid, bins);
    }
    out.push(TensorDecl::new(
        format!("{prefix}.merge.weight"),
        vec![c, mid * spec.cam_dilations.len(), 1, 1],
        TensorRole::Kernel,
    ));
    sbn_decls(out, &format!("{prefix}.merge_sbn"), c, bins);
    let a = spec.attention_hidden;
    out.push(TensorDecl::new(format!("{prefix}.att_fc1.weight"), vec![a, c], TensorRole::Kernel));
    out.push(TensorDecl::new(format!("{prefix}.att_fc1.bias"), vec![a], TensorRole::Bias));
    out.push(TensorDecl::new(format!("{prefix}.att_fc2.weight"), vec![c, a], TensorRole::Kernel));
    out.push(TensorDecl::new(format!("{prefix}.att_fc2.bias"), vec![c], TensorRole::Bias));
}

fn block_decls(
    out: &mut Vec<TensorDecl>,
    prefix: &str,
    kind: BlockKind,
    spec: &ModelSpec,
    bins: usize,
    k_vert: usize,
) {
    match kind {
        BlockKind::Bottleneck => {
            bottleneck_decls(out, prefix, spec.stem_channels, spec.bottleneck_mid, bins, k_vert)
        }
        BlockKind::Cam => cam_decls(out, prefix, spec, bins),
    }
}

fn head_decls(out: &mut Vec<TensorDecl>, prefix: &str, channels: usize) {
    sbn_decls(out, &format!("{prefix}.sbn"), channels, NUM_KEYS);
    out.push(TensorDecl::new(
        format!("{prefix}.conv.weight"),
        vec![1, channels, 1, 1],
        TensorRole::Kernel,
    ));
    out.push(TensorDecl::new(format!("{prefix}.conv.bias"), vec![1], TensorRole::Bias));
}

fn adapter_decls(out: &mut Vec<TensorDecl>, prefix: &str, channels: usize) {
    out.push(TensorDecl::new(
        format!("{prefix}.weight"),
        vec![channels, channels + 1, 1, 1],
        TensorRole::Kernel,
    ));
    out.push(TensorDecl::new(format!("{prefix}.bias"), vec![channels], TensorRole::Bias));
}

/// Complete ordered tensor layout for a spec: the single source of truth
/// shared by initialization, validation, counting, and the forward pass.
pub fn model_decls(spec: &ModelSpec) -> Vec<TensorDecl> {
    let c = spec.stem_channels;
    let mut out = Vec::new();
    sbn_decls(&mut out, "input_sbn", 2, INPUT_BINS);
    out.push(TensorDecl::new("stem.weight", vec![c, 2, 3, 3], TensorRole::Kernel));
    out.push(TensorDecl::new("stem.bias", vec![c], TensorRole::Bias));
    for (i, &kind) in spec.input_blocks.iter().enumerate() {
        block_decls(&mut out, &format!("input.{i}"), kind, spec, INPUT_BINS, 3);
    }
    out.push(TensorDecl::new("domain.weight", vec![c, DOMAIN_KERNEL], TensorRole::Kernel));
    out.push(TensorDecl::new("domain.bias", vec![c], TensorRole::Bias));
    for s in 0..spec.num_onset_stages {
        if s > 0 {
            adapter_decls(&mut out, &format!("onset.{s}.adapter"), c);
        }
        for (j, &kind) in spec.stage_blocks.iter().enumerate() {
            block_decls(&mut out, &format!("onset.{s}.block.{j}"), kind, spec, NUM_KEYS, 1);
        }
        head_decls(&mut out, &format!("onset.{s}.head"), c);
    }
    adapter_decls(&mut out, "velocity.adapter", c);
    for (j, &kind) in spec.velocity_blocks.iter().enumerate() {
        block_decls(&mut out, &format!("velocity.block.{j}"), kind, spec, NUM_KEYS, 1);
    }
    head_decls(&mut out, "velocity.head", c);
    out
}

/// Number of trainable parameters (normalization running statistics are
/// stored with the weights but not counted).
pub fn count_params(spec: &ModelSpec) -> usize {
    model_decls(spec)
        .iter()
        .filter(|d| d.role.trainable())
        .map(|d| d.dims.iter().product::<usize>())
        .sum()
}

impl ModelWeights {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self::zeros_from_decls(&model_decls(spec))
    }

    pub fn random(spec: &ModelSpec, seed: u64) -> Self {
        Self::random_from_decls(&model_decls(spec), seed)
    }

    pub fn validate_against(&self, spec: &ModelSpec) -> Result<(), NetworkError> {
        self.validate_decls(&model_decls(spec))
    }
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

struct Ctx<'a> {
    w: &'a ModelWeights,
    slope: f64,
}

impl Ctx<'_> {
    fn sbn(&self, x: &Tensor, prefix: &str) -> Result<Tensor, NetworkError> {
        ops::sbn(
            x,
            self.w.get(&format!("{prefix}.gamma"))?,
            self.w.get(&format!("{prefix}.beta"))?,
            self.w.get(&format!("{prefix}.mean"))?,
            self.w.get(&format!("{prefix}.var"))?,
            BN_EPS,
        )
    }

    fn bottleneck(&self, x: &Tensor, prefix: &str, k_vert: usize) -> Result<Tensor, NetworkError> {
        let pad_v = (k_vert - 1) / 2;
        let b = ops::conv2d(x, self.w.get(&format!("{prefix}.conv1.weight"))?, None, 0, 0, 1)?;
        let b = ops::leaky_relu(&self.sbn(&b, &format!("{prefix}.sbn1"))?, self.slope);
        let b =
            ops::conv2d(&b, self.w.get(&format!("{prefix}.conv2.weight"))?, None, pad_v, 1, 1)?;
        let b = ops::leaky_relu(&self.sbn(&b, &format!("{prefix}.sbn2"))?, self.slope);
        let b = ops::conv2d(&b, self.w.get(&format!("{prefix}.conv3.weight"))?, None, 0, 0, 1)?;
        let b = self.sbn(&b, &format!("{prefix}.sbn3"))?;
        ops::add(x, &b)
    }

    fn cam(&self, x: &Tensor, prefix: &str, dilations: &[usize]) -> Result<Tensor, NetworkError> {
        let mut taps = Vec::with_capacity(dilations.len());
        let mut cur = x.clone();
        for (i, &d) in dilations.iter().enumerate() {
            let name = format!("{prefix}.cd{}", i + 1);
            let conv =
                ops::conv2d(&cur, self.w.get(&format!("{name}.weight"))?, None, 0, d, d)?;
            cur = ops::leaky_relu(&self.sbn(&conv, &format!("{name}_sbn"))?, self.slope);
            taps.push(cur.clone());
        }
        let mut cat = taps[0].clone();
        for tap in &taps[1..] {
            cat = ops::concat_channels(&cat, tap)?;
        }
        let merged =
            ops::conv2d(&cat, self.w.get(&format!("{prefix}.merge.weight"))?, None, 0, 0, 1)?;
        let merged = self.sbn(&merged, &format!("{prefix}.merge_sbn"))?;
        let gated = ops::channel_attention(
            &merged,
            self.w.get(&format!("{prefix}.att_fc1.weight"))?,
            self.w.get(&format!("{prefix}.att_fc1.bias"))?,
            self.w.get(&format!("{prefix}.att_fc2.weight"))?,
            self.w.get(&format!("{prefix}.att_fc2.bias"))?,
            self.slope,
        )?;
        ops::add(x, &gated)
    }

    fn block(
        &self,
        x: &Tensor,
        prefix: &str,
        kind: BlockKind,
        spec: &ModelSpec,
        k_vert: usize,
    ) -> Result<Tensor, NetworkError> {
        match kind {
            BlockKind::Bottleneck => self.bottleneck(x, prefix, k_vert),
            BlockKind::Cam => self.cam(x, prefix, &spec.cam_dilations),
        }
    }

    /// Head output before the sigmoid: a [1, 88, T'] logit plane.
    fn head(&self, x: &Tensor, prefix: &str) -> Result<Tensor, NetworkError> {
        let h = self.sbn(x, &format!("{prefix}.sbn"))?;
        ops::conv2d(
            &h,
            self.w.get(&format!("{prefix}.conv.weight"))?,
            Some(self.w.get(&format!("{prefix}.conv.bias"))?),
            0,
            0,
            1,
        )
    }

    fn adapter(&self, feats: &Tensor, logits: &Tensor, prefix: &str) -> Result<Tensor, NetworkError> {
        let cat = ops::concat_channels(feats, logits)?;
        let out = ops::conv2d(
            &cat,
            self.w.get(&format!("{prefix}.weight"))?,
            Some(self.w.get(&format!("{prefix}.bias"))?),
            0,
            0,
            1,
        )?;
        Ok(ops::leaky_relu(&out, self.slope))
    }
}

fn input_tensor(input: &SpectroInput) -> Result<Tensor, NetworkError> {
    let (rows, cols) = (input.mel.rows(), input.mel.cols());
    if rows != INPUT_BINS || input.delta.rows() != rows || input.delta.cols() != cols {
        return Err(NetworkError::Shape {
            what: "network input".into(),
            expected: format!("two {INPUT_BINS} x T planes"),
            got: format!(
                "mel {} x {}, delta {} x {}",
                rows,
                cols,
                input.delta.rows(),
                input.delta.cols()
            ),
        });
    }
    if cols == 0 {
        return Err(NetworkError::Shape {
            what: "network input".into(),
            expected: "at least one frame".into(),
            got: "0 frames".into(),
        });
    }
    let mut x = Tensor::zeros(2, rows, cols);
    for v in 0..rows {
        for t in 0..cols {
            x.set(0, v, t, input.mel.get(v, t) as f32);
            x.set(1, v, t, input.delta.get(v, t) as f32);
        }
    }
    Ok(x)
}

fn logits_to_roll(logits: &Tensor, delta_t: f64) -> PianoRoll {
    let mut m = Matrix::zeros(logits.height, logits.width);
    for k in 0..logits.height {
        for t in 0..logits.width {
            let z = logits.get(0, k, t) as f64;
            m.set(k, t, 1.0 / (1.0 + (-z).exp()));
        }
    }
    PianoRoll::from_matrix(RollKind::Prediction, delta_t, m)
}

/// Runs the network on one spectrogram. Deterministic: the same spec,
/// weights, and input give bit-identical rolls at any thread count.
pub fn forward(
    spec: &ModelSpec,
    weights: &ModelWeights,
    input: &SpectroInput,
) -> Result<NetworkOutput, NetworkError> {
    spec.check()?;
    weights.validate_against(spec)?;
    let ctx = Ctx { w: weights, slope: spec.leaky_slope };

    let x = input_tensor(input)?;
    let x = ctx.sbn(&x, "input_sbn")?;
    let x = ops::conv2d(
        &x,
        weights.get("stem.weight")?,
        Some(weights.get("stem.bias")?),
        1,
        1,
        1,
    )?;
    let mut x = ops::leaky_relu(&x, spec.leaky_slope);
    for (i, &kind) in spec.input_blocks.iter().enumerate() {
        x = ctx.block(&x, &format!("input.{i}"), kind, spec, 3)?;
    }
    let x = ops::depthwise_valid(&x, weights.get("domain.weight")?, weights.get("domain.bias")?)?;
    let mut feats = ops::leaky_relu(&x, spec.leaky_slope);

    let mut onset_stages = Vec::with_capacity(spec.num_onset_stages);
    let mut logits = None;
    for s in 0..spec.num_onset_stages {
        if let Some(prev) = &logits {
            feats = ctx.adapter(&feats, prev, &format!("onset.{s}.adapter"))?;
        }
        for (j, &kind) in spec.stage_blocks.iter().enumerate() {
            feats = ctx.block(&feats, &format!("onset.{s}.block.{j}"), kind, spec, 1)?;
        }
        let stage_logits = ctx.head(&feats, &format!("onset.{s}.head"))?;
        onset_stages.push(logits_to_roll(&stage_logits, input.delta_t));
        logits = Some(stage_logits);
    }

    let last_logits = logits.expect("at least one onset stage");
    let mut vfeats = ctx.adapter(&feats, &last_logits, "velocity.adapter")?;
    for (j, &kind) in spec.velocity_blocks.iter().enumerate() {
        vfeats = ctx.block(&vfeats, &format!("velocity.block.{j}"), kind, spec, 1)?;
    }
    let v_logits = ctx.head(&vfeats, "velocity.head")?;
    let velocity = logits_to_roll(&v_logits, input.delta_t);

    Ok(NetworkOutput { onset_stages, velocity })
}

#[cfg(test)]
mod tests;
