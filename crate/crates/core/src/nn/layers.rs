//! Forward and backward kernels for each layer type, generic over the float type so the
//! same code can be checked against finite differences in double precision.

use num_traits::Float;

use super::spec::{LayerGeom, LayerSpec};

pub(crate) const NORM_EPS: f64 = 1e-5;

/// Per-layer state saved by the forward pass for use in backward.
pub(crate) enum Saved<T> {
    Nothing,
    /// Flat input index that won each pooling window.
    Argmax(Vec<usize>),
    Norm {
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
}

pub(crate) fn forward<T: Float>(
    layer: &LayerSpec,
    geom: &LayerGeom,
    params: &[T],
    x: &[T],
) -> (Vec<T>, Saved<T>) {
    let p = &params[geom.params.clone()];
    match *layer {
        LayerSpec::Dense { inputs, outputs } => {
            (dense_forward(p, x, inputs, outputs), Saved::Nothing)
        }
        LayerSpec::Conv {
            in_channels,
            out_channels,
            kernel,
            padding,
        } => (
            conv_forward(geom, p, x, in_channels, out_channels, kernel, padding),
            Saved::Nothing,
        ),
        LayerSpec::InstanceNorm { channels } => norm_forward(geom, p, x, channels),
        LayerSpec::MaxPool { window } => {
            let (y, idx) = maxpool_forward(geom, x, window);
            (y, Saved::Argmax(idx))
        }
        LayerSpec::Relu => (
            x.iter().map(|&v| v.max(T::zero())).collect(),
            Saved::Nothing,
        ),
        LayerSpec::AvgPool => {
            let n = geom.input.spatial_len();
            let inv = T::one() / T::from(n).unwrap();
            let y = x
                .chunks_exact(n)
                .map(|c| c.iter().fold(T::zero(), |a, &v| a + v) * inv)
                .collect();
            (y, Saved::Nothing)
        }
    }
}

/// Accumulates parameter gradients into `grad` and returns the gradient w.r.t. the input.
pub(crate) fn backward<T: Float>(
    layer: &LayerSpec,
    geom: &LayerGeom,
    params: &[T],
    x: &[T],
    saved: &Saved<T>,
    dy: &[T],
    grad: &mut [T],
) -> Vec<T> {
    let p = &params[geom.params.clone()];
    let g = &mut grad[geom.params.clone()];
    match *layer {
        LayerSpec::Dense { inputs, outputs } => {
            let (w, _) = p.split_at(inputs * outputs);
            let (gw, gb) = g.split_at_mut(inputs * outputs);
            let mut dx = vec![T::zero(); inputs];
            for o in 0..outputs {
                let d = dy[o];
                gb[o] = gb[o] + d;
                let row = &w[o * inputs..(o + 1) * inputs];
                let grow = &mut gw[o * inputs..(o + 1) * inputs];
                for i in 0..inputs {
                    grow[i] = grow[i] + d * x[i];
                    dx[i] = dx[i] + d * row[i];
                }
            }
            dx
        }
        LayerSpec::Conv {
            in_channels,
            out_channels,
            kernel,
            padding,
        } => conv_backward(
            geom,
            p,
            x,
            dy,
            g,
            in_channels,
            out_channels,
            kernel,
            padding,
        ),
        LayerSpec::InstanceNorm { channels } => {
            let Saved::Norm { xhat, inv_std } = saved else {
                unreachable!("instance norm saves statistics")
            };
            let n = geom.input.spatial_len();
            let nf = T::from(n).unwrap();
            let (gamma, _) = p.split_at(channels);
            let (ggamma, gbeta) = g.split_at_mut(channels);
            let mut dx = vec![T::zero(); x.len()];
            for c in 0..channels {
                let r = c * n..(c + 1) * n;
                let (mut sum_dxhat, mut sum_dxhat_xhat) = (T::zero(), T::zero());
                for j in r.clone() {
                    ggamma[c] = ggamma[c] + dy[j] * xhat[j];
                    gbeta[c] = gbeta[c] + dy[j];
                    let dxh = dy[j] * gamma[c];
                    sum_dxhat = sum_dxhat + dxh;
                    sum_dxhat_xhat = sum_dxhat_xhat + dxh * xhat[j];
                }
                let scale = inv_std[c] / nf;
                for j in r {
                    let dxh = dy[j] * gamma[c];
                    dx[j] = scale * (nf * dxh - sum_dxhat - xhat[j] * sum_dxhat_xhat);
                }
            }
            dx
        }
        LayerSpec::MaxPool { .. } => {
            let Saved::Argmax(idx) = saved else {
                unreachable!("max pool saves argmax")
            };
            let mut dx = vec![T::zero(); x.len()];
            for (o, &i) in idx.iter().enumerate() {
                dx[i] = dx[i] + dy[o];
            }
            dx
        }
        LayerSpec::Relu => x
            .iter()
            .zip(dy)
            .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
            .collect(),
        LayerSpec::AvgPool => {
            let n = geom.input.spatial_len();
            let inv = T::one() / T::from(n).unwrap();
            let mut dx = Vec::with_capacity(x.len());
            for &d in dy {
                dx.extend(std::iter::repeat_n(d * inv, n));
            }
            dx
        }
    }
}

pub(crate) fn dense_forward<T: Float>(p: &[T], x: &[T], inputs: usize, outputs: usize) -> Vec<T> {
    let (w, b) = p.split_at(inputs * outputs);
    (0..outputs)
        .map(|o| {
            let row = &w[o * inputs..(o + 1) * inputs];
            let mut acc = b[o];
            for i in 0..inputs {
                acc = acc + row[i] * x[i];
            }
            acc
        })
        .collect()
}

/// Offset of input voxel for output position `o` and kernel tap `k` along one axis, or
/// `None` if the tap lands in the zero padding.
#[inline]
fn tap(o: usize, k: usize, pad: usize, len: usize) -> Option<usize> {
    let i = o + k;
    if i < pad || i - pad >= len {
        None
    } else {
        Some(i - pad)
    }
}

fn conv_forward<T: Float>(
    geom: &LayerGeom,
    p: &[T],
    x: &[T],
    cin: usize,
    cout: usize,
    k: [usize; 3],
    pad: usize,
) -> Vec<T> {
    let [id, ih, iw] = geom.input.spatial();
    let [od, oh, ow] = geom.output.spatial();
    let ksz = k[0] * k[1] * k[2];
    let (w, b) = p.split_at(cout * cin * ksz);
    let mut y = vec![T::zero(); cout * od * oh * ow];
    for co in 0..cout {
        for z in 0..od {
            for r in 0..oh {
                for c in 0..ow {
                    let mut acc = b[co];
                    for ci in 0..cin {
                        let wbase = (co * cin + ci) * ksz;
                        let xbase = ci * id * ih * iw;
                        for a in 0..k[0] {
                            let Some(zi) = tap(z, a, pad, id) else {
                                continue;
                            };
                            for bb in 0..k[1] {
                                let Some(ri) = tap(r, bb, pad, ih) else {
                                    continue;
                                };
                                for cc in 0..k[2] {
                                    let Some(ci_) = tap(c, cc, pad, iw) else {
                                        continue;
                                    };
                                    acc = acc
                                        + w[wbase + (a * k[1] + bb) * k[2] + cc]
                                            * x[xbase + (zi * ih + ri) * iw + ci_];
                                }
                            }
                        }
                    }
                    y[((co * od + z) * oh + r) * ow + c] = acc;
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Float>(
    geom: &LayerGeom,
    p: &[T],
    x: &[T],
    dy: &[T],
    g: &mut [T],
    cin: usize,
    cout: usize,
    k: [usize; 3],
    pad: usize,
) -> Vec<T> {
    let [id, ih, iw] = geom.input.spatial();
    let [od, oh, ow] = geom.output.spatial();
    let ksz = k[0] * k[1] * k[2];
    let (w, _) = p.split_at(cout * cin * ksz);
    let (gw, gb) = g.split_at_mut(cout * cin * ksz);
    let mut dx = vec![T::zero(); x.len()];
    for co in 0..cout {
        for z in 0..od {
            for r in 0..oh {
                for c in 0..ow {
                    let d = dy[((co * od + z) * oh + r) * ow + c];
                    gb[co] = gb[co] + d;
                    for ci in 0..cin {
                        let wbase = (co * cin + ci) * ksz;
                        let xbase = ci * id * ih * iw;
                        for a in 0..k[0] {
                            let Some(zi) = tap(z, a, pad, id) else {
                                continue;
                            };
                            for bb in 0..k[1] {
                                let Some(ri) = tap(r, bb, pad, ih) else {
                                    continue;
                                };
                                for cc in 0..k[2] {
                                    let Some(ci_) = tap(c, cc, pad, iw) else {
                                        continue;
                                    };
                                    let wi = wbase + (a * k[1] + bb) * k[2] + cc;
                                    let xi = xbase + (zi * ih + ri) * iw + ci_;
                                    gw[wi] = gw[wi] + d * x[xi];
                                    dx[xi] = dx[xi] + d * w[wi];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

fn norm_forward<T: Float>(
    geom: &LayerGeom,
    p: &[T],
    x: &[T],
    channels: usize,
) -> (Vec<T>, Saved<T>) {
    let n = geom.input.spatial_len();
    let nf = T::from(n).unwrap();
    let eps = T::from(NORM_EPS).unwrap();
    let (gamma, beta) = p.split_at(channels);
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_std = vec![T::zero(); channels];
    for c in 0..channels {
        let xs = &x[c * n..(c + 1) * n];
        let mean = xs.iter().fold(T::zero(), |a, &v| a + v) / nf;
        let var = xs
            .iter()
            .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
            / nf;
        let is = T::one() / (var + eps).sqrt();
        inv_std[c] = is;
        for j in 0..n {
            let h = (xs[j] - mean) * is;
            xhat[c * n + j] = h;
            y[c * n + j] = gamma[c] * h + beta[c];
        }
    }
    (y, Saved::Norm { xhat, inv_std })
}

fn maxpool_forward<T: Float>(geom: &LayerGeom, x: &[T], win: [usize; 3]) -> (Vec<T>, Vec<usize>) {
    let [_, ih, iw] = geom.input.spatial();
    let in_spatial = geom.input.spatial_len();
    let [od, oh, ow] = geom.output.spatial();
    let channels = geom.input.channels();
    let mut y = Vec::with_capacity(channels * od * oh * ow);
    let mut idx = Vec::with_capacity(y.capacity());
    for ch in 0..channels {
        let base = ch * in_spatial;
        for z in 0..od {
            for r in 0..oh {
                for c in 0..ow {
                    let mut best = base + ((z * win[0]) * ih + r * win[1]) * iw + c * win[2];
                    for a in 0..win[0] {
                        for b in 0..win[1] {
                            for d in 0..win[2] {
                                let i = base
                                    + ((z * win[0] + a) * ih + r * win[1] + b) * iw
                                    + c * win[2]
                                    + d;
                                if x[i] > x[best] {
                                    best = i;
                                }
                            }
                        }
                    }
                    y.push(x[best]);
                    idx.push(best);
                }
            }
        }
    }
    (y, idx)
}
