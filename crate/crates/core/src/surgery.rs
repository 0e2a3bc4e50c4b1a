//! Compiler passes lowering composite layers into the 3x3-only dialect.
//!
//! Two kernel-stack building blocks recur throughout: the impulse block
//! ("P1"), whose diagonal kernels carry a 1 at the center and zeros
//! elsewhere so that convolving with it is the identity, and the zero block
//! ("P0"), whose output is identically zero. Block matrices assembled from
//! W1/W2/P1/P0 turn residual additions and channel-wise filtering into
//! plain convolutions.

use crate::graph::{fc_head_stages, LayerSpec, ModelGraph};
use crate::tensor::{KernelStack, Padding};
use crate::{Error, Result};

/// Writes `src`'s 3x3 kernel for `(src_o, src_i)` into `dst` at
/// `(dst_o, dst_i)`.
fn copy_kernel(dst: &mut KernelStack, dst_o: usize, dst_i: usize, src: &KernelStack, src_o: usize, src_i: usize) {
    for kr in 0..3 {
        for kc in 0..3 {
            *dst.tap_mut(dst_o, dst_i, kr, kc) = src.tap(src_o, src_i, kr, kc);
        }
    }
}

/// The impulse block P1: an n-channel convolutional identity.
pub fn impulse_block(n: usize) -> KernelStack {
    let mut k = KernelStack::zeros(n, n);
    for i in 0..n {
        *k.tap_mut(i, i, 1, 1) = 1.0;
    }
    k
}

/// The zero block P0: n x n all-zero 3x3 kernels.
pub fn zero_block(n: usize) -> KernelStack {
    KernelStack::zeros(n, n)
}

/// Rewrites a shortcut block `relu(x + W2 * relu(W1 * x))` as three 3x3
/// layers, assuming the block input is non-negative (post-ReLU):
///
/// - layer A (2N <- N, ReLU on): outputs 0..N apply W1, outputs N..2N copy
///   the input through P1;
/// - layer B (2N <- 2N, ReLU off): W2 in the upper-left block, P1 in the
///   lower-right, P0 off-diagonal;
/// - layer C (N <- 2N, ReLU on): two stacked P1 blocks, so output i sums
///   channels i and N+i.
pub fn lower_shortcut(w1: &KernelStack, w2: &KernelStack) -> Result<Vec<LayerSpec>> {
    let n = w1.out_channels;
    if w1.in_channels != n || w2.out_channels != n || w2.in_channels != n {
        return Err(Error::Shape(
            "shortcut lowering requires square W1 and W2 of equal size".into(),
        ));
    }

    let mut a = KernelStack::zeros(2 * n, n);
    for o in 0..n {
        for i in 0..n {
            copy_kernel(&mut a, o, i, w1, o, i);
        }
        a.bias[o] = w1.bias[o];
        *a.tap_mut(n + o, o, 1, 1) = 1.0;
    }

    let mut b = KernelStack::zeros(2 * n, 2 * n);
    for o in 0..n {
        for i in 0..n {
            copy_kernel(&mut b, o, i, w2, o, i);
        }
        b.bias[o] = w2.bias[o];
        *b.tap_mut(n + o, n + o, 1, 1) = 1.0;
    }

    let mut c = KernelStack::zeros(n, 2 * n);
    for o in 0..n {
        *c.tap_mut(o, o, 1, 1) = 1.0;
        *c.tap_mut(o, n + o, 1, 1) = 1.0;
    }

    Ok(vec![
        LayerSpec::Conv3x3 {
            padding: Padding::Same,
            relu: true,
            pool: false,
            weights: a,
        },
        LayerSpec::Conv3x3 {
            padding: Padding::Same,
            relu: false,
            pool: false,
            weights: b,
        },
        LayerSpec::Conv3x3 {
            padding: Padding::Same,
            relu: true,
            pool: false,
            weights: c,
        },
    ])
}

/// Rewrites a depthwise+pointwise pair as two 3x3 layers: the depthwise
/// kernels go on the diagonal of a P x P stack, and each pointwise scalar
/// becomes the center tap of a Q x P stack. Exact for all inputs, signed
/// included.
pub fn lower_depthwise_separable(
    depthwise: &[[f64; 9]],
    pointwise: &[f64],
    out_channels: usize,
) -> Result<Vec<LayerSpec>> {
    let p = depthwise.len();
    let q = out_channels;
    if p == 0 || q == 0 {
        return Err(Error::Shape("depthwise separable channels must be positive".into()));
    }
    if pointwise.len() != q * p {
        return Err(Error::Shape(format!(
            "pointwise expects {} scalars for {}x{}, got {}",
            q * p,
            q,
            p,
            pointwise.len()
        )));
    }

    let mut dw = KernelStack::zeros(p, p);
    for (ch, kernel) in depthwise.iter().enumerate() {
        for kr in 0..3 {
            for kc in 0..3 {
                *dw.tap_mut(ch, ch, kr, kc) = kernel[kr * 3 + kc];
            }
        }
    }

    let mut pw = KernelStack::zeros(q, p);
    for o in 0..q {
        for i in 0..p {
            *pw.tap_mut(o, i, 1, 1) = pointwise[o * p + i];
        }
    }

    Ok(vec![
        LayerSpec::Conv3x3 {
            padding: Padding::Same,
            relu: false,
            pool: false,
            weights: dw,
        },
        LayerSpec::Conv3x3 {
            padding: Padding::Same,
            relu: false,
            pool: false,
            weights: pw,
        },
    ])
}

/// Expands an FC head into its `(spatial - 1) / 2` unpadded 3x3 stages,
/// stepping the map S -> S-2 -> ... -> 1. Weights are carried through when
/// provided and left as zeros (for offline training) otherwise. This pass
/// is structural: no equivalence to a trained dense layer is claimed.
pub fn lower_fc_head(
    spatial: usize,
    in_channels: usize,
    hidden: &[usize],
    out_dim: usize,
    weights: Option<&[KernelStack]>,
) -> Result<Vec<LayerSpec>> {
    let stages = fc_head_stages(spatial, in_channels, hidden, out_dim)?;
    if let Some(stacks) = weights {
        if stacks.len() != stages.len() {
            return Err(Error::Shape(format!(
                "fc head expects {} weight stacks, got {}",
                stages.len(),
                stacks.len()
            )));
        }
    }
    Ok(stages
        .iter()
        .enumerate()
        .map(|(i, stage)| {
            let stack = match weights {
                Some(stacks) => stacks[i].clone(),
                None => KernelStack::zeros(stage.out_channels, stage.in_channels),
            };
            LayerSpec::Conv3x3 {
                padding: Padding::Valid,
                relu: stage.relu,
                pool: false,
                weights: stack,
            }
        })
        .collect())
}

/// Keeps the first `k` output channels of the final convolution and drops
/// any trailing dense consumers, turning the model into a feature
/// extractor whose output is the k*H*W vector.
pub fn compress_channels(g: &ModelGraph, layer_index: usize, k: usize) -> Result<ModelGraph> {
    g.validate()?;
    if layer_index >= g.layers.len() {
        return Err(Error::Validation {
            layer: layer_index,
            msg: "layer index out of range".into(),
        });
    }
    let LayerSpec::Conv3x3 {
        padding,
        relu,
        pool,
        weights,
    } = &g.layers[layer_index]
    else {
        return Err(Error::Validation {
            layer: layer_index,
            msg: "channel compression targets a 3x3 convolution".into(),
        });
    };
    if k == 0 || k > weights.out_channels {
        return Err(Error::Validation {
            layer: layer_index,
            msg: format!(
                "cannot keep {k} of {} output channels",
                weights.out_channels
            ),
        });
    }
    if g.layers[layer_index + 1..]
        .iter()
        .any(|l| !matches!(l, LayerSpec::Dense { .. }))
    {
        return Err(Error::Validation {
            layer: layer_index,
            msg: "target must be the final convolution (only dense consumers may follow)"
                .into(),
        });
    }

    let sliced = KernelStack::new(
        k,
        weights.in_channels,
        weights.weights[..k * weights.in_channels * 9].to_vec(),
        weights.bias[..k].to_vec(),
    )?;
    let mut layers: Vec<LayerSpec> = g.layers[..layer_index].to_vec();
    layers.push(LayerSpec::Conv3x3 {
        padding: *padding,
        relu: *relu,
        pool: *pool,
        weights: sliced,
    });
    let out = ModelGraph {
        input_shape: g.input_shape,
        layers,
        params: g.params,
        input_scale: g.input_scale,
    };
    out.validate()?;
    Ok(out)
}

/// One rewrite performed by [`lower_all`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rewrite {
    pub layer: usize,
    pub description: String,
}

/// Applies the shortcut, depthwise-separable, and FC-head lowerings until
/// the graph is pure 3x3 convolutions. Idempotent on already-lowered
/// graphs. Dense layers cannot be lowered and are rejected.
pub fn lower_all(g: &ModelGraph) -> Result<(ModelGraph, Vec<Rewrite>)> {
    g.validate()?;
    let mut layers = Vec::with_capacity(g.layers.len());
    let mut rewrites = Vec::new();
    for (idx, layer) in g.layers.iter().enumerate() {
        match layer {
            LayerSpec::Conv3x3 { .. } => layers.push(layer.clone()),
            LayerSpec::ShortcutBlock { w1, w2 } => {
                let lowered = lower_shortcut(w1, w2)?;
                rewrites.push(Rewrite {
                    layer: idx,
                    description: format!(
                        "shortcut block (n={}) -> {} conv3x3 layers",
                        w1.out_channels,
                        lowered.len()
                    ),
                });
                layers.extend(lowered);
            }
            LayerSpec::DepthwiseSeparable {
                depthwise,
                pointwise,
                out_channels,
            } => {
                let lowered = lower_depthwise_separable(depthwise, pointwise, *out_channels)?;
                rewrites.push(Rewrite {
                    layer: idx,
                    description: format!(
                        "depthwise separable ({} -> {}) -> {} conv3x3 layers",
                        depthwise.len(),
                        out_channels,
                        lowered.len()
                    ),
                });
                layers.extend(lowered);
            }
            LayerSpec::FCHead {
                spatial,
                in_channels,
                hidden,
                out_dim,
                weights,
            } => {
                let lowered =
                    lower_fc_head(*spatial, *in_channels, hidden, *out_dim, weights.as_deref())?;
                rewrites.push(Rewrite {
                    layer: idx,
                    description: format!(
                        "fc head ({sp}x{sp} -> {out_dim}) -> {} valid conv3x3 stages",
                        lowered.len(),
                        sp = spatial,
                    ),
                });
                layers.extend(lowered);
            }
            LayerSpec::Dense { .. } => {
                return Err(Error::Validation {
                    layer: idx,
                    msg: "dense layer cannot be lowered to the 3x3 dialect; \
                          compress channels or drop it first"
                        .into(),
                });
            }
        }
    }
    let out = ModelGraph {
        input_shape: g.input_shape,
        layers,
        params: g.params,
        input_scale: g.input_scale,
    };
    out.validate()?;
    debug_assert!(out.is_vgg_type());
    Ok((out, rewrites))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{self, FeatureMap};
    use proptest::prelude::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn random_kernels(seed: &mut u64, o: usize, i: usize) -> KernelStack {
        let weights = (0..o * i * 9).map(|_| lcg(seed)).collect();
        let bias = (0..o).map(|_| lcg(seed)).collect();
        KernelStack::new(o, i, weights, bias).unwrap()
    }

    fn random_map(seed: &mut u64, c: usize, h: usize, w: usize, non_negative: bool) -> FeatureMap {
        let values = (0..c * h * w)
            .map(|_| {
                let v = lcg(seed);
                if non_negative {
                    v.abs()
                } else {
                    v
                }
            })
            .collect();
        FeatureMap::new(c, h, w, values).unwrap()
    }

    /// Direct shortcut formula: relu(x + W2 * relu(W1 * x)).
    fn shortcut_direct(x: &FeatureMap, w1: &KernelStack, w2: &KernelStack) -> FeatureMap {
        let inner = tensor::relu(&tensor::conv3x3(x, w1, Padding::Same).unwrap());
        let outer = tensor::conv3x3(&inner, w2, Padding::Same).unwrap();
        tensor::relu(&tensor::add(x, &outer).unwrap())
    }

    fn run_conv_layers(x: &FeatureMap, layers: &[LayerSpec]) -> FeatureMap {
        let mut cur = x.clone();
        for layer in layers {
            let LayerSpec::Conv3x3 {
                padding,
                relu,
                weights,
                ..
            } = layer
            else {
                panic!("expected conv layer");
            };
            cur = tensor::conv3x3(&cur, weights, *padding).unwrap();
            if *relu {
                cur = tensor::relu(&cur);
            }
        }
        cur
    }

    fn max_abs_diff(a: &FeatureMap, b: &FeatureMap) -> f64 {
        a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn impulse_block_is_identity() {
        let mut seed = 11u64;
        let x = random_map(&mut seed, 5, 6, 4, false);
        let p1 = impulse_block(5);
        let y = tensor::conv3x3(&x, &p1, Padding::Same).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn stacked_impulse_blocks_add_channel_halves() {
        let mut seed = 13u64;
        let x = random_map(&mut seed, 6, 5, 5, false);
        // C-layer shape: n <- 2n with two P1 blocks side by side
        let mut c = KernelStack::zeros(3, 6);
        for o in 0..3 {
            *c.tap_mut(o, o, 1, 1) = 1.0;
            *c.tap_mut(o, 3 + o, 1, 1) = 1.0;
        }
        let y = tensor::conv3x3(&x, &c, Padding::Same).unwrap();
        for o in 0..3 {
            for r in 0..5 {
                for col in 0..5 {
                    assert_eq!(y.at(o, r, col), x.at(o, r, col) + x.at(3 + o, r, col));
                }
            }
        }
    }

    #[test]
    fn shortcut_identity_case() {
        let mut seed = 17u64;
        let x = random_map(&mut seed, 1, 6, 6, true);
        // W1 = impulse, W2 = zero: relu(x + 0) == x on non-negative input
        let layers = lower_shortcut(&impulse_block(1), &zero_block(1)).unwrap();
        let y = run_conv_layers(&x, &layers);
        assert!(max_abs_diff(&y, &x) < 1e-12);
    }

    #[test]
    fn shortcut_doubling_case() {
        let mut seed = 19u64;
        let x = random_map(&mut seed, 1, 6, 6, true);
        // W1 = W2 = impulse: relu(x + relu(x)) == 2x on non-negative input
        let layers = lower_shortcut(&impulse_block(1), &impulse_block(1)).unwrap();
        let y = run_conv_layers(&x, &layers);
        let doubled = FeatureMap::new(1, 6, 6, x.values.iter().map(|v| 2.0 * v).collect()).unwrap();
        assert!(max_abs_diff(&y, &doubled) < 1e-12);
    }

    #[test]
    fn shortcut_equivalence_random() {
        let mut seed = 23u64;
        let w1 = random_kernels(&mut seed, 4, 4);
        let w2 = random_kernels(&mut seed, 4, 4);
        let x = random_map(&mut seed, 4, 8, 8, true);
        let layers = lower_shortcut(&w1, &w2).unwrap();
        let lowered = run_conv_layers(&x, &layers);
        let direct = shortcut_direct(&x, &w1, &w2);
        assert!(max_abs_diff(&lowered, &direct) < 1e-12);
    }

    #[test]
    fn shortcut_rejects_non_square() {
        let w1 = KernelStack::zeros(2, 3);
        let w2 = KernelStack::zeros(2, 2);
        assert!(lower_shortcut(&w1, &w2).is_err());
    }

    #[test]
    fn shortcut_layer_flags() {
        let layers = lower_shortcut(&impulse_block(2), &impulse_block(2)).unwrap();
        let flags: Vec<(bool, usize, usize)> = layers
            .iter()
            .map(|l| {
                let LayerSpec::Conv3x3 { relu, weights, .. } = l else { unreachable!() };
                (*relu, weights.in_channels, weights.out_channels)
            })
            .collect();
        assert_eq!(flags, vec![(true, 2, 4), (false, 4, 4), (true, 4, 2)]);
    }

    /// Direct depthwise-then-pointwise formula.
    fn dws_direct(x: &FeatureMap, depthwise: &[[f64; 9]], pointwise: &[f64], q: usize) -> FeatureMap {
        let p = depthwise.len();
        let mut filtered = FeatureMap::zeros(p, x.height, x.width);
        for (ch, kernel) in depthwise.iter().enumerate() {
            for r in 0..x.height {
                for c in 0..x.width {
                    let mut sum = 0.0;
                    for kr in 0..3isize {
                        for kc in 0..3isize {
                            let ir = r as isize + kr - 1;
                            let ic = c as isize + kc - 1;
                            if ir < 0 || ic < 0 || ir >= x.height as isize || ic >= x.width as isize
                            {
                                continue;
                            }
                            sum += x.at(ch, ir as usize, ic as usize)
                                * kernel[(kr * 3 + kc) as usize];
                        }
                    }
                    *filtered.at_mut(ch, r, c) = sum;
                }
            }
        }
        let mut out = FeatureMap::zeros(q, x.height, x.width);
        for o in 0..q {
            for ch in 0..p {
                let y = pointwise[o * p + ch];
                for r in 0..x.height {
                    for c in 0..x.width {
                        *out.at_mut(o, r, c) += y * filtered.at(ch, r, c);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn dws_identity_case() {
        let mut impulse = [0.0; 9];
        impulse[4] = 1.0;
        let layers = lower_depthwise_separable(&[impulse], &[1.0], 1).unwrap();
        let mut seed = 29u64;
        let x = random_map(&mut seed, 1, 5, 5, false);
        assert!(max_abs_diff(&run_conv_layers(&x, &layers), &x) < 1e-12);
    }

    #[test]
    fn dws_zero_pointwise_gives_zero() {
        let layers = lower_depthwise_separable(&[[0.5; 9], [0.25; 9]], &[0.0; 6], 3).unwrap();
        let mut seed = 31u64;
        let x = random_map(&mut seed, 2, 4, 4, false);
        let y = run_conv_layers(&x, &layers);
        assert!(y.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dws_equivalence_random() {
        let mut seed = 37u64;
        let depthwise: Vec<[f64; 9]> = (0..3)
            .map(|_| {
                let mut k = [0.0; 9];
                for v in &mut k {
                    *v = lcg(&mut seed);
                }
                k
            })
            .collect();
        let pointwise: Vec<f64> = (0..2 * 3).map(|_| lcg(&mut seed)).collect();
        let x = random_map(&mut seed, 3, 6, 6, false);
        let layers = lower_depthwise_separable(&depthwise, &pointwise, 2).unwrap();
        let lowered = run_conv_layers(&x, &layers);
        let direct = dws_direct(&x, &depthwise, &pointwise, 2);
        assert!(max_abs_diff(&lowered, &direct) < 1e-12);
    }

    #[test]
    fn dws_rejects_bad_counts() {
        assert!(lower_depthwise_separable(&[[0.0; 9]], &[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn fc_head_shapes() {
        let layers = lower_fc_head(7, 16, &[32, 32], 2, None).unwrap();
        assert_eq!(layers.len(), 3);
        let g = ModelGraph::new(
            (16, 7, 7),
            layers,
        );
        assert_eq!(
            g.validate().unwrap(),
            vec![(32, 5, 5), (32, 3, 3), (2, 1, 1)]
        );

        let single = lower_fc_head(3, 8, &[], 10, None).unwrap();
        assert_eq!(single.len(), 1);
        let g = ModelGraph::new((8, 3, 3), single);
        assert_eq!(g.validate().unwrap(), vec![(10, 1, 1)]);

        assert!(lower_fc_head(4, 8, &[], 10, None).is_err());
        assert!(lower_fc_head(7, 8, &[32], 10, None).is_err());
    }

    #[test]
    fn compress_keeps_first_channels() {
        let mut seed = 41u64;
        let weights = random_kernels(&mut seed, 512, 8);
        let g = ModelGraph::new(
            (8, 7, 7),
            vec![
                LayerSpec::Conv3x3 {
                    padding: Padding::Same,
                    relu: true,
                    pool: false,
                    weights: weights.clone(),
                },
                LayerSpec::Dense {
                    in_dim: 512 * 7 * 7,
                    out_dim: 10,
                    weights: vec![0.0; 512 * 7 * 7 * 10],
                },
            ],
        );
        let out = compress_channels(&g, 0, 1).unwrap();
        assert_eq!(out.layers.len(), 1);
        let shapes = out.validate().unwrap();
        assert_eq!(shapes.last().copied().unwrap(), (1, 7, 7));

        let LayerSpec::Conv3x3 { weights: sliced, .. } = &out.layers[0] else {
            unreachable!()
        };
        assert_eq!(sliced.weights[..], weights.weights[..8 * 9]);
        assert_eq!(sliced.bias[..], weights.bias[..1]);

        // k == out_ch only removes the dense consumer
        let full = compress_channels(&g, 0, 512).unwrap();
        assert_eq!(full.layers.len(), 1);
        assert_eq!(full.layers[0], g.layers[0]);

        let eight = compress_channels(&g, 0, 8).unwrap();
        let shapes = eight.validate().unwrap();
        assert_eq!(shapes.last().copied().unwrap(), (8, 7, 7));
        assert_eq!(8 * 7 * 7, 392);
    }

    #[test]
    fn compress_rejects_bad_targets() {
        let g = ModelGraph::new(
            (4, 8, 8),
            vec![
                LayerSpec::Conv3x3 {
                    padding: Padding::Same,
                    relu: true,
                    pool: false,
                    weights: KernelStack::zeros(4, 4),
                },
                LayerSpec::Conv3x3 {
                    padding: Padding::Same,
                    relu: true,
                    pool: false,
                    weights: KernelStack::zeros(4, 4),
                },
            ],
        );
        // k too large
        assert!(compress_channels(&g, 0, 5).is_err());
        // not the final convolution
        assert!(compress_channels(&g, 0, 2).is_err());
        // fine on the actual final conv
        assert!(compress_channels(&g, 1, 2).is_ok());
    }

    #[test]
    fn lower_all_is_fixed_point_on_vgg() {
        let g = ModelGraph::new(
            (3, 8, 8),
            vec![LayerSpec::Conv3x3 {
                padding: Padding::Same,
                relu: true,
                pool: false,
                weights: KernelStack::zeros(4, 3),
            }],
        );
        let (out, rewrites) = lower_all(&g).unwrap();
        assert_eq!(out, g);
        assert!(rewrites.is_empty());
    }

    #[test]
    fn lower_all_reaches_vgg_type() {
        let mut seed = 43u64;
        let g = ModelGraph::new(
            (2, 8, 8),
            vec![
                LayerSpec::ShortcutBlock {
                    w1: random_kernels(&mut seed, 2, 2),
                    w2: random_kernels(&mut seed, 2, 2),
                },
                LayerSpec::DepthwiseSeparable {
                    depthwise: vec![[0.5; 9], [0.25; 9]],
                    pointwise: vec![1.0, -1.0, 0.5, 0.5, 0.0, 2.0],
                    out_channels: 3,
                },
            ],
        );
        let (out, rewrites) = lower_all(&g).unwrap();
        assert!(out.is_vgg_type());
        assert_eq!(out.layers.len(), 5);
        assert_eq!(rewrites.len(), 2);

        // idempotent
        let (again, rewrites2) = lower_all(&out).unwrap();
        assert_eq!(again, out);
        assert!(rewrites2.is_empty());
    }

    #[test]
    fn lower_all_rejects_dense() {
        let g = ModelGraph::new(
            (2, 2, 2),
            vec![LayerSpec::Dense {
                in_dim: 8,
                out_dim: 2,
                weights: vec![0.0; 16],
            }],
        );
        assert!(matches!(
            lower_all(&g),
            Err(Error::Validation { layer: 0, .. })
        ));
    }

    #[test]
    fn lowering_parameter_count_is_predictable() {
        for n in [1usize, 2, 4, 8] {
            let w1 = impulse_block(n);
            let w2 = impulse_block(n);
            let composite = LayerSpec::ShortcutBlock {
                w1: w1.clone(),
                w2: w2.clone(),
            };
            assert_eq!(composite.coefficient_count(), (2 * 9 * n * n) as u64);
            let lowered = lower_shortcut(&w1, &w2).unwrap();
            let total: u64 = lowered.iter().map(|l| l.coefficient_count()).sum();
            assert_eq!(total, (9 * (2 * n * n + 4 * n * n + 2 * n * n)) as u64);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn shortcut_equivalence_property(seed in any::<u64>(), n_idx in 0usize..4) {
            let n = [1usize, 2, 4, 8][n_idx];
            let mut s = seed;
            let w1 = random_kernels(&mut s, n, n);
            let w2 = random_kernels(&mut s, n, n);
            let x = random_map(&mut s, n, 8, 8, true);
            let layers = lower_shortcut(&w1, &w2).unwrap();
            let lowered = run_conv_layers(&x, &layers);
            let direct = shortcut_direct(&x, &w1, &w2);
            prop_assert!(max_abs_diff(&lowered, &direct) <= 1e-12);
        }

        #[test]
        fn dws_equivalence_property(seed in any::<u64>(), p in 1usize..=8, q in 1usize..=8) {
            let mut s = seed;
            let depthwise: Vec<[f64; 9]> = (0..p)
                .map(|_| {
                    let mut k = [0.0; 9];
                    for v in &mut k {
                        *v = lcg(&mut s);
                    }
                    k
                })
                .collect();
            let pointwise: Vec<f64> = (0..q * p).map(|_| lcg(&mut s)).collect();
            let x = random_map(&mut s, p, 6, 6, false);
            let layers = lower_depthwise_separable(&depthwise, &pointwise, q).unwrap();
            let lowered = run_conv_layers(&x, &layers);
            let direct = dws_direct(&x, &depthwise, &pointwise, q);
            prop_assert!(max_abs_diff(&lowered, &direct) <= 1e-12);
        }
    }
}
