use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops::{self, Tensor};
use super::weights::{ModelWeights, WeightTensor};
use super::*;
use crate::frontend::SpectroInput;
use crate::matrix::Matrix;

fn random_tensor(channels: usize, height: usize, width: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..channels * height * width).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    Tensor::from_data(channels, height, width, data).unwrap()
}

fn random_weight(dims: Vec<usize>, seed: u64) -> WeightTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = dims.iter().product();
    WeightTensor { dims, data: (0..len).map(|_| rng.gen_range(-1.0f32..1.0)).collect() }
}

fn random_input(cols: usize, seed: u64) -> SpectroInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mel = Matrix::zeros(INPUT_BINS, cols);
    let mut delta = Matrix::zeros(INPUT_BINS, cols);
    for v in 0..INPUT_BINS {
        for t in 0..cols {
            mel.set(v, t, rng.gen_range(-4.0..4.0));
            delta.set(v, t, rng.gen_range(-1.0..1.0));
        }
    }
    SpectroInput { mel, delta, delta_t: 0.024 }
}

/// Direct summation convolution used as an independent oracle.
fn naive_conv(
    x: &Tensor,
    w: &WeightTensor,
    bias: Option<&WeightTensor>,
    pad_v: usize,
    pad_t: usize,
    dil_t: usize,
) -> Tensor {
    let (co, ci, kv, kt) = (w.dims[0], w.dims[1], w.dims[2], w.dims[3]);
    let oh = x.height + 2 * pad_v - kv + 1;
    let ow = x.width + 2 * pad_t - dil_t * (kt - 1) - 1 + 1;
    let mut out = Tensor::zeros(co, oh, ow);
    for c_out in 0..co {
        for ov in 0..oh {
            for ot in 0..ow {
                let mut acc = bias.map_or(0.0, |b| b.data[c_out] as f64);
                for c_in in 0..ci {
                    for j in 0..kv {
                        for l in 0..kt {
                            let iv = ov as i64 + j as i64 - pad_v as i64;
                            let it = ot as i64 + (l * dil_t) as i64 - pad_t as i64;
                            if iv < 0
                                || iv >= x.height as i64
                                || it < 0
                                || it >= x.width as i64
                            {
                                continue;
                            }
                            acc += w.data[((c_out * ci + c_in) * kv + j) * kt + l] as f64
                                * x.get(c_in, iv as usize, it as usize) as f64;
                        }
                    }
                }
                out.set(c_out, ov, ot, acc as f32);
            }
        }
    }
    out
}

fn max_diff(a: &Tensor, b: &Tensor) -> f32 {
    assert_eq!(a.shape(), b.shape());
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

#[test]
fn identity_one_by_one_conv_copies_input() {
    let x = random_tensor(3, 5, 7, 1);
    let mut w = WeightTensor::filled(vec![3, 3, 1, 1], 0.0);
    for c in 0..3 {
        w.data[c * 3 + c] = 1.0;
    }
    let y = ops::conv2d(&x, &w, None, 0, 0, 1).unwrap();
    assert_eq!(y, x);
}

#[test]
fn unit_statistics_normalization_is_identity_within_epsilon() {
    let x = random_tensor(2, 4, 6, 2);
    let gamma = WeightTensor::filled(vec![2, 4], 1.0);
    let beta = WeightTensor::filled(vec![2, 4], 0.0);
    let mean = WeightTensor::filled(vec![2, 4], 0.0);
    let var = WeightTensor::filled(vec![2, 4], 1.0);
    let y = ops::sbn(&x, &gamma, &beta, &mean, &var, BN_EPS).unwrap();
    assert!(max_diff(&x, &y) < 1e-4);
}

#[test]
fn three_by_three_conv_matches_nine_term_dot_products() {
    // 5x5 ramp, single channel and kernel: check every output against an
    // explicitly written nine-term sum.
    let data: Vec<f32> = (0..25).map(|i| i as f32).collect();
    let x = Tensor::from_data(1, 5, 5, data).unwrap();
    let w = random_weight(vec![1, 1, 3, 3], 3);
    let y = ops::conv2d(&x, &w, None, 1, 1, 1).unwrap();
    assert_eq!(y.shape(), (1, 5, 5));
    for ov in 0..5i64 {
        for ot in 0..5i64 {
            let mut want = 0.0f64;
            for j in 0..3i64 {
                for l in 0..3i64 {
                    let (iv, it) = (ov + j - 1, ot + l - 1);
                    if (0..5).contains(&iv) && (0..5).contains(&it) {
                        want += w.data[(j * 3 + l) as usize] as f64
                            * x.get(0, iv as usize, it as usize) as f64;
                    }
                }
            }
            let got = y.get(0, ov as usize, ot as usize);
            assert!((got as f64 - want).abs() < 1e-6, "at ({ov},{ot}): {got} vs {want}");
        }
    }
}

#[test]
fn conv_matches_naive_oracle_on_random_tensors() {
    let x = random_tensor(8, 8, 8, 4);
    let w = random_weight(vec![4, 8, 3, 3], 5);
    let b = random_weight(vec![4], 6);
    let fast = ops::conv2d(&x, &w, Some(&b), 1, 1, 1).unwrap();
    let slow = naive_conv(&x, &w, Some(&b), 1, 1, 1);
    assert!(max_diff(&fast, &slow) <= 1e-5);
}

#[test]
fn dilated_conv_matches_naive_oracle() {
    let x = random_tensor(3, 2, 11, 7);
    let w = random_weight(vec![2, 3, 1, 3], 8);
    for dil in [1usize, 2, 4] {
        let fast = ops::conv2d(&x, &w, None, 0, dil, dil).unwrap();
        let slow = naive_conv(&x, &w, None, 0, dil, dil);
        assert!(max_diff(&fast, &slow) <= 1e-5, "dilation {dil}");
    }
}

#[test]
fn depthwise_collapse_matches_direct_sums() {
    let x = random_tensor(2, 6, 4, 9);
    let w = random_weight(vec![2, 3], 10);
    let b = random_weight(vec![2], 11);
    let y = ops::depthwise_valid(&x, &w, &b).unwrap();
    assert_eq!(y.shape(), (2, 4, 4));
    for c in 0..2 {
        for v in 0..4 {
            for t in 0..4 {
                let want: f64 = (0..3)
                    .map(|j| w.data[c * 3 + j] as f64 * x.get(c, v + j, t) as f64)
                    .sum::<f64>()
                    + b.data[c] as f64;
                assert!((y.get(c, v, t) as f64 - want).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn shape_mismatch_error_names_both_shapes() {
    let x = random_tensor(3, 5, 5, 12);
    let w = random_weight(vec![2, 4, 3, 3], 13);
    let err = ops::conv2d(&x, &w, None, 1, 1, 1).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 4, 3, 3]") && msg.contains("(3, 5, 5)"), "got: {msg}");
}

// --------------------------------------------------------------------------
// Residual blocks
// --------------------------------------------------------------------------

fn sbn_weights(w: &mut ModelWeights, prefix: &str, channels: usize, bins: usize, seed: u64) {
    let gamma = if seed == 0 {
        WeightTensor::filled(vec![channels, bins], 0.0)
    } else {
        let mut t = random_weight(vec![channels, bins], seed);
        // keep scales near one so activations stay tame
        for v in &mut t.data {
            *v = 1.0 + 0.1 * *v;
        }
        t
    };
    w.insert(format!("{prefix}.gamma"), gamma);
    w.insert(format!("{prefix}.beta"), WeightTensor::filled(vec![channels, bins], 0.0));
    w.insert(format!("{prefix}.mean"), WeightTensor::filled(vec![channels, bins], 0.0));
    w.insert(format!("{prefix}.var"), WeightTensor::filled(vec![channels, bins], 1.0));
}

fn bottleneck_weights(prefix: &str, c: usize, m: usize, bins: usize, seed: u64) -> ModelWeights {
    let mut w = ModelWeights::default();
    let zero = seed == 0;
    let kernel = |dims: Vec<usize>, s: u64| {
        if zero {
            WeightTensor::filled(dims, 0.0)
        } else {
            random_weight(dims, s)
        }
    };
    w.insert(format!("{prefix}.conv1.weight"), kernel(vec![m, c, 1, 1], seed));
    sbn_weights(&mut w, &format!("{prefix}.sbn1"), m, bins, if zero { 0 } else { seed + 1 });
    w.insert(format!("{prefix}.conv2.weight"), kernel(vec![m, m, 3, 3], seed + 2));
    sbn_weights(&mut w, &format!("{prefix}.sbn2"), m, bins, if zero { 0 } else { seed + 3 });
    w.insert(format!("{prefix}.conv3.weight"), kernel(vec![c, m, 1, 1], seed + 4));
    sbn_weights(&mut w, &format!("{prefix}.sbn3"), c, bins, if zero { 0 } else { seed + 5 });
    w
}

#[test]
fn zero_weight_bottleneck_is_exact_identity() {
    let x = random_tensor(3, 6, 5, 20);
    let w = bottleneck_weights("b", 3, 2, 6, 0);
    let ctx = Ctx { w: &w, slope: 0.01 };
    let y = ctx.bottleneck(&x, "b", 3).unwrap();
    assert_eq!(y, x);
}

#[test]
fn bottleneck_preserves_shape_and_composes_statelessly() {
    let x = random_tensor(3, 6, 5, 21);
    let w1 = bottleneck_weights("b", 3, 2, 6, 30);
    let w2 = bottleneck_weights("b", 3, 2, 6, 40);
    let c1 = Ctx { w: &w1, slope: 0.01 };
    let c2 = Ctx { w: &w2, slope: 0.01 };
    let y1 = c1.bottleneck(&x, "b", 3).unwrap();
    assert_eq!(y1.shape(), x.shape());
    // pure function: repeated evaluation is bit-identical
    assert_eq!(c1.bottleneck(&x, "b", 3).unwrap(), y1);
    // stacking is plain composition, no hidden state between calls
    let stacked = c2.bottleneck(&y1, "b", 3).unwrap();
    let composed = c2.bottleneck(&c1.bottleneck(&x, "b", 3).unwrap(), "b", 3).unwrap();
    assert_eq!(stacked, composed);
}

fn cam_weights(
    prefix: &str,
    c: usize,
    mid: usize,
    hidden: usize,
    bins: usize,
    seed: u64,
    gate_open: bool,
) -> ModelWeights {
    let mut w = ModelWeights::default();
    let zero = seed == 0;
    let kernel = |dims: Vec<usize>, s: u64| {
        if zero {
            WeightTensor::filled(dims, 0.0)
        } else {
            random_weight(dims, s)
        }
    };
    for (i, in_ch) in [c, mid, mid].iter().enumerate() {
        w.insert(
            format!("{prefix}.cd{}.weight", i + 1),
            kernel(vec![mid, *in_ch, 1, 3], seed + i as u64),
        );
        // unit scale keeps the branch comparable across the chain
        w.insert(format!("{prefix}.cd{}_sbn.gamma", i + 1), WeightTensor::filled(vec![mid, bins], if zero { 0.0 } else { 1.0 }));
        w.insert(format!("{prefix}.cd{}_sbn.beta", i + 1), WeightTensor::filled(vec![mid, bins], 0.0));
        w.insert(format!("{prefix}.cd{}_sbn.mean", i + 1), WeightTensor::filled(vec![mid, bins], 0.0));
        w.insert(format!("{prefix}.cd{}_sbn.var", i + 1), WeightTensor::filled(vec![mid, bins], 1.0));
    }
    w.insert(format!("{prefix}.merge.weight"), kernel(vec![c, 3 * mid, 1, 1], seed + 7));
    w.insert(format!("{prefix}.merge_sbn.gamma"), WeightTensor::filled(vec![c, bins], if zero { 0.0 } else { 1.0 }));
    w.insert(format!("{prefix}.merge_sbn.beta"), WeightTensor::filled(vec![c, bins], 0.0));
    w.insert(format!("{prefix}.merge_sbn.mean"), WeightTensor::filled(vec![c, bins], 0.0));
    w.insert(format!("{prefix}.merge_sbn.var"), WeightTensor::filled(vec![c, bins], 1.0));
    w.insert(format!("{prefix}.att_fc1.weight"), WeightTensor::filled(vec![hidden, c], 0.0));
    w.insert(format!("{prefix}.att_fc1.bias"), WeightTensor::filled(vec![hidden], 0.0));
    w.insert(format!("{prefix}.att_fc2.weight"), WeightTensor::filled(vec![c, hidden], 0.0));
    w.insert(
        format!("{prefix}.att_fc2.bias"),
        WeightTensor::filled(vec![c], if gate_open { 40.0 } else { 0.0 }),
    );
    w
}

#[test]
fn zero_weight_attention_block_is_exact_identity() {
    let x = random_tensor(4, 5, 9, 22);
    let w = cam_weights("cam", 4, 2, 2, 5, 0, false);
    let ctx = Ctx { w: &w, slope: 0.01 };
    let y = ctx.cam(&x, "cam", &[1, 2, 4]).unwrap();
    assert_eq!(y, x);
}

#[test]
fn saturated_gate_reduces_to_plain_dilated_branch() {
    let x = random_tensor(4, 5, 9, 23);
    let w = cam_weights("cam", 4, 2, 2, 5, 50, true);
    let ctx = Ctx { w: &w, slope: 0.01 };
    let y = ctx.cam(&x, "cam", &[1, 2, 4]).unwrap();

    // Recompute the branch without any attention gate.
    let mut taps = Vec::new();
    let mut cur = x.clone();
    for (i, d) in [1usize, 2, 4].iter().enumerate() {
        let conv = ops::conv2d(&cur, w.get(&format!("cam.cd{}.weight", i + 1)).unwrap(), None, 0, *d, *d)
            .unwrap();
        let normed = ops::sbn(
            &conv,
            w.get(&format!("cam.cd{}_sbn.gamma", i + 1)).unwrap(),
            w.get(&format!("cam.cd{}_sbn.beta", i + 1)).unwrap(),
            w.get(&format!("cam.cd{}_sbn.mean", i + 1)).unwrap(),
            w.get(&format!("cam.cd{}_sbn.var", i + 1)).unwrap(),
            BN_EPS,
        )
        .unwrap();
        cur = ops::leaky_relu(&normed, 0.01);
        taps.push(cur.clone());
    }
    let mut cat = taps[0].clone();
    for tap in &taps[1..] {
        cat = ops::concat_channels(&cat, tap).unwrap();
    }
    let merged = ops::conv2d(&cat, w.get("cam.merge.weight").unwrap(), None, 0, 0, 1).unwrap();
    let merged = ops::sbn(
        &merged,
        w.get("cam.merge_sbn.gamma").unwrap(),
        w.get("cam.merge_sbn.beta").unwrap(),
        w.get("cam.merge_sbn.mean").unwrap(),
        w.get("cam.merge_sbn.var").unwrap(),
        BN_EPS,
    )
    .unwrap();
    let want = ops::add(&x, &merged).unwrap();
    // sigmoid(40) rounds to exactly 1.0f32, so the gate drops out entirely
    assert_eq!(y, want);
}

#[test]
fn chained_dilations_give_fifteen_frame_impulse_response() {
    // Kernel 3 at dilations 1+2+4 widens the response by 2*(1+2+4) = 14
    // around the impulse: fifteen frames in total.
    let width = 41;
    let center = 20usize;
    let mut x = Tensor::zeros(4, 5, width);
    for c in 0..4 {
        for v in 0..5 {
            x.set(c, v, center, 1.0 + 0.1 * (c * 5 + v) as f32);
        }
    }
    let w = cam_weights("cam", 4, 2, 2, 5, 60, true);
    let ctx = Ctx { w: &w, slope: 0.01 };
    let y = ctx.cam(&x, "cam", &[1, 2, 4]).unwrap();
    let diff = {
        let mut d = y.clone();
        for (o, &v) in d.data.iter_mut().zip(&x.data) {
            *o -= v;
        }
        d
    };
    let mut active: Vec<usize> = Vec::new();
    for t in 0..width {
        let hot = (0..4).any(|c| (0..5).any(|v| diff.get(c, v, t).abs() > 1e-7));
        if hot {
            active.push(t);
        }
    }
    assert_eq!(active.first(), Some(&(center - 7)));
    assert_eq!(active.last(), Some(&(center + 7)));
    assert_eq!(active.len(), 15);
}

// --------------------------------------------------------------------------
// Whole-network properties
// --------------------------------------------------------------------------

fn zero_input(cols: usize) -> SpectroInput {
    SpectroInput {
        mel: Matrix::zeros(INPUT_BINS, cols),
        delta: Matrix::zeros(INPUT_BINS, cols),
        delta_t: 0.024,
    }
}

#[test]
fn zero_weights_and_zero_input_give_one_half_everywhere() {
    let spec = ModelSpec::toy();
    let w = ModelWeights::zeros(&spec);
    let out = forward(&spec, &w, &zero_input(7)).unwrap();
    assert_eq!(out.onset_stages.len(), 3);
    for roll in out.onset_stages.iter().chain(std::iter::once(&out.velocity)) {
        assert_eq!(roll.matrix().rows(), NUM_KEYS);
        assert_eq!(roll.matrix().cols(), 7);
        assert!(roll.matrix().data().iter().all(|&v| v == 0.5));
    }
}

#[test]
fn head_bias_shows_through_as_sigmoid_of_bias() {
    let spec = ModelSpec::toy();
    let mut w = ModelWeights::zeros(&spec);
    w.insert("onset.0.head.conv.bias", WeightTensor::filled(vec![1], 2.0));
    let out = forward(&spec, &w, &zero_input(4)).unwrap();
    let want = 1.0 / (1.0 + (-2.0f64).exp());
    assert!(out.onset_stages[0]
        .matrix()
        .data()
        .iter()
        .all(|&v| (v - want).abs() < 1e-12));
    // later stages see the logits only through zero adapters
    assert!(out.onset_stages[1].matrix().data().iter().all(|&v| v == 0.5));
}

#[test]
fn output_shape_follows_input_frames() {
    let spec = ModelSpec::toy();
    let w = ModelWeights::random(&spec, 7);
    for cols in [1usize, 7, 100] {
        let out = forward(&spec, &w, &random_input(cols, cols as u64)).unwrap();
        assert_eq!(out.onset_stages.len(), 3);
        for roll in out.onset_stages.iter().chain(std::iter::once(&out.velocity)) {
            assert_eq!((roll.matrix().rows(), roll.matrix().cols()), (NUM_KEYS, cols));
            assert!(roll.matrix().data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}

#[test]
fn first_stage_ignores_weights_of_later_stages() {
    let full_spec = ModelSpec::toy();
    let mut one_spec = ModelSpec::toy();
    one_spec.num_onset_stages = 1;
    let full = ModelWeights::random(&full_spec, 11);
    let subset =
        full.filtered(|name| !name.starts_with("onset.1.") && !name.starts_with("onset.2."));
    subset.validate_against(&one_spec).unwrap();
    let input = random_input(9, 99);
    let out_full = forward(&full_spec, &full, &input).unwrap();
    let out_one = forward(&one_spec, &subset, &input).unwrap();
    assert_eq!(out_one.onset_stages.len(), 1);
    assert_eq!(out_full.onset_stages[0], out_one.onset_stages[0]);
}

#[test]
fn forward_rejects_wrong_input_height() {
    let spec = ModelSpec::toy();
    let w = ModelWeights::zeros(&spec);
    let bad = SpectroInput {
        mel: Matrix::zeros(100, 5),
        delta: Matrix::zeros(100, 5),
        delta_t: 0.024,
    };
    assert!(matches!(forward(&spec, &w, &bad), Err(NetworkError::Shape { .. })));
}

#[test]
fn forward_is_reproducible() {
    let spec = ModelSpec::toy();
    let w = ModelWeights::random(&spec, 3);
    let input = random_input(12, 5);
    let a = forward(&spec, &w, &input).unwrap();
    let b = forward(&spec, &w, &input).unwrap();
    for (x, y) in a.onset_stages.iter().zip(&b.onset_stages) {
        assert_eq!(x, y);
    }
    assert_eq!(a.velocity, b.velocity);
}

// --------------------------------------------------------------------------
// Parameter accounting and serialization
// --------------------------------------------------------------------------

#[test]
fn toy_parameter_count_matches_hand_computed_sum() {
    // Per-piece arithmetic, written out independently of the declaration
    // walk. Channels c = 16, bottleneck mid m = 4, attention branch mid 4,
    // gate hidden 4.
    let input_sbn = 2 * (2 * 229);
    let stem = 16 * 2 * 3 * 3 + 16;
    // spectral bottleneck (m=4, c=16, 229 bins, 3x3 core):
    let spectral_b = (4 * 16) + 2 * (4 * 229)      // conv1 + sbn1
        + (4 * 4 * 3 * 3) + 2 * (4 * 229)          // conv2 + sbn2
        + (16 * 4) + 2 * (16 * 229);               // conv3 + sbn3
    let domain = 16 * 142 + 16;
    // key-domain bottleneck (1x3 core, 88 bins):
    let key_b = (4 * 16) + 2 * (4 * 88)
        + (4 * 4 * 3) + 2 * (4 * 88)
        + (16 * 4) + 2 * (16 * 88);
    // attention block: three chained 1x3 convs, merge, gate
    let cam = (4 * 16 * 3) + 2 * (4 * 88)
        + (4 * 4 * 3) + 2 * (4 * 88)
        + (4 * 4 * 3) + 2 * (4 * 88)
        + (16 * 12) + 2 * (16 * 88)
        + (4 * 16 + 4) + (16 * 4 + 16);
    let head = 2 * (16 * 88) + 16 + 1;
    let adapter = 16 * 17 + 16;
    let stage = 2 * key_b + cam + head;
    let total = input_sbn
        + stem
        + spectral_b
        + domain
        + stage               // stage 1, no adapter
        + 3 * (adapter + stage); // stages 2 and 3, velocity branch
    assert_eq!(total, 84_392);
    assert_eq!(count_params(&ModelSpec::toy()), total);
}

#[test]
fn reference_parameter_count_is_pinned() {
    let n = count_params(&ModelSpec::reference());
    assert_eq!(n, 3_123_952);
    assert!((3_000_000..=3_300_000).contains(&n));
}

#[test]
fn weight_bytes_round_trip_bit_exact() {
    let spec = ModelSpec::toy();
    let w = ModelWeights::random(&spec, 42);
    let bytes = w.to_bytes();
    let back = ModelWeights::from_bytes(&bytes).unwrap();
    assert_eq!(w, back);
    // serialization is canonical: same weights, same bytes
    assert_eq!(bytes, back.to_bytes());
}

#[test]
fn weight_file_rejects_bad_magic_and_truncation() {
    let spec = ModelSpec::toy();
    let w = ModelWeights::zeros(&spec);
    let mut bytes = w.to_bytes();
    let err = ModelWeights::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
    assert!(matches!(err, NetworkError::Format(_)));
    bytes[0] = b'X';
    let err = ModelWeights::from_bytes(&bytes).unwrap_err();
    assert!(err.to_string().contains("magic"));
}

#[test]
fn validation_flags_missing_mismatched_and_extra_tensors() {
    let spec = ModelSpec::toy();
    let mut w = ModelWeights::random(&spec, 1);
    w.validate_against(&spec).unwrap();

    let removed = w.remove("domain.bias").unwrap();
    let msg = w.validate_against(&spec).unwrap_err().to_string();
    assert!(msg.contains("domain.bias"), "got: {msg}");
    w.insert("domain.bias", removed);

    w.insert("stem.bias", WeightTensor::filled(vec![3], 0.0));
    let msg = w.validate_against(&spec).unwrap_err().to_string();
    assert!(msg.contains("stem.bias"), "got: {msg}");
    w.insert("stem.bias", WeightTensor::filled(vec![16], 0.0));

    w.insert("bogus.extra", WeightTensor::filled(vec![1], 0.0));
    let msg = w.validate_against(&spec).unwrap_err().to_string();
    assert!(msg.contains("bogus.extra"), "got: {msg}");
}

#[test]
fn spec_json_round_trips_and_checks_version() {
    let spec = ModelSpec::reference();
    let text = spec.to_json();
    assert_eq!(ModelSpec::from_json(&text).unwrap(), spec);
    let tampered = text.replace("\"version\": 1", "\"version\": 9");
    assert!(ModelSpec::from_json(&tampered).is_err());
}

#[test]
fn trivial_ops_behave() {
    let x = random_tensor(2, 3, 4, 77);
    assert_eq!(ops::dropout_inference(&x), x);
    let y = ops::concat_channels(&x, &x).unwrap();
    assert_eq!(y.shape(), (4, 3, 4));
    let s = ops::sigmoid(&Tensor::zeros(1, 2, 2));
    assert!(s.data.iter().all(|&v| v == 0.5));
    let l = ops::leaky_relu(
        &Tensor::from_data(1, 1, 2, vec![-1.0, 2.0]).unwrap(),
        0.01,
    );
    assert_eq!(l.data, vec![-0.01, 2.0]);
}
