//! Batched kernels. Every loop runs in a fixed order so results are bit-reproducible.

use alloc::vec;
use alloc::vec::Vec;

pub(super) fn dense_forward(p: &[f64], inputs: usize, outputs: usize, n: usize, x: &[f64], y: &mut [f64]) {
    let (w, b) = p.split_at(inputs * outputs);
    for s in 0..n {
        let xs = &x[s * inputs..(s + 1) * inputs];
        let ys = &mut y[s * outputs..(s + 1) * outputs];
        for (o, yo) in ys.iter_mut().enumerate() {
            let row = &w[o * inputs..(o + 1) * inputs];
            *yo = b[o] + row.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn dense_backward(
    p: &[f64],
    inputs: usize,
    outputs: usize,
    n: usize,
    x: &[f64],
    gy: &[f64],
    g: &mut [f64],
    gx: &mut [f64],
) {
    let (w, _) = p.split_at(inputs * outputs);
    let (gw, gb) = g.split_at_mut(inputs * outputs);
    for s in 0..n {
        let xs = &x[s * inputs..(s + 1) * inputs];
        let gxs = &mut gx[s * inputs..(s + 1) * inputs];
        for o in 0..outputs {
            let d = gy[s * outputs + o];
            gb[o] += d;
            let row = &w[o * inputs..(o + 1) * inputs];
            let grow = &mut gw[o * inputs..(o + 1) * inputs];
            for i in 0..inputs {
                grow[i] += d * xs[i];
                gxs[i] += d * row[i];
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(super) struct ConvDims {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub h: usize,
    pub w: usize,
}

/// Width of the register-blocked strips in the convolution kernels.
const STRIP: usize = 16;

/// Zero-bordered copy of a feature map. Output pixel `(r, c)` lives at `r * stride + c`
/// in a row-strided accumulator, and kernel tap `(ky, kx)` reads the padded map at that
/// index plus `ky * stride + kx`, so every tap is one contiguous multiply-add over the
/// whole plane. Columns `c >= w` of the accumulator are scratch.
struct Padded {
    stride: usize,
    /// Accumulator length, `h * stride` rounded up to whole strips.
    span: usize,
    /// Length of one padded map, with slack so every tap can read a full span.
    len: usize,
    /// Largest tap offset.
    reach: usize,
}

impl Padded {
    fn new(d: &ConvDims) -> Self {
        let stride = d.w + d.k - 1;
        let span = (d.h * stride).div_ceil(STRIP) * STRIP;
        let reach = (d.k - 1) * stride + d.k - 1;
        Self { stride, span, len: reach + span, reach }
    }

    /// Copies an `h × w` map into the padded buffer.
    fn fill(&self, d: &ConvDims, src: &[f64], dst: &mut [f64]) {
        let pad = d.k / 2;
        dst.fill(0.0);
        for r in 0..d.h {
            let at = (r + pad) * self.stride + pad;
            dst[at..at + d.w].copy_from_slice(&src[r * d.w..(r + 1) * d.w]);
        }
    }

    /// Interior of a padded buffer back to an `h × w` map, added into `dst`.
    fn add_interior(&self, d: &ConvDims, src: &[f64], dst: &mut [f64]) {
        let pad = d.k / 2;
        for r in 0..d.h {
            let at = (r + pad) * self.stride + pad;
            for (o, i) in dst[r * d.w..(r + 1) * d.w].iter_mut().zip(&src[at..at + d.w]) {
                *o += i;
            }
        }
    }

    /// `(offset, weight)` for every tap feeding output channel `oc`, offsets into the
    /// concatenation of all padded input maps.
    fn taps(&self, d: &ConvDims, kernel: &[f64], oc: usize) -> Vec<(usize, f64)> {
        let mut taps = Vec::with_capacity(d.cin * d.k * d.k);
        for ic in 0..d.cin {
            for ky in 0..d.k {
                for kx in 0..d.k {
                    let wt = kernel[((oc * d.cin + ic) * d.k + ky) * d.k + kx];
                    taps.push((ic * self.len + ky * self.stride + kx, wt));
                }
            }
        }
        taps
    }
}

/// `out[i] = init + Σ wt · src[off + i]` strip by strip, keeping each strip in registers.
fn correlate(taps: &[(usize, f64)], src: &[f64], init: f64, out: &mut [f64]) {
    for (b, strip) in out.chunks_exact_mut(STRIP).enumerate() {
        let base = b * STRIP;
        let mut acc = [init; STRIP];
        for &(off, wt) in taps {
            let s = &src[off + base..off + base + STRIP];
            for j in 0..STRIP {
                acc[j] += wt * s[j];
            }
        }
        strip.copy_from_slice(&acc);
    }
}

pub(super) fn conv_forward(p: &[f64], d: ConvDims, n: usize, x: &[f64], y: &mut [f64]) {
    let ConvDims { cin, cout, k, h, w } = d;
    let plane = h * w;
    let pad = Padded::new(&d);
    let (kernel, bias) = p.split_at(cout * cin * k * k);
    let taps: Vec<Vec<(usize, f64)>> = (0..cout).map(|oc| pad.taps(&d, kernel, oc)).collect();
    let mut padded = vec![0.0; cin * pad.len];
    let mut acc = vec![0.0; pad.span];
    for s in 0..n {
        let xs = &x[s * cin * plane..(s + 1) * cin * plane];
        for ic in 0..cin {
            pad.fill(&d, &xs[ic * plane..(ic + 1) * plane], &mut padded[ic * pad.len..(ic + 1) * pad.len]);
        }
        let ys = &mut y[s * cout * plane..(s + 1) * cout * plane];
        for oc in 0..cout {
            correlate(&taps[oc], &padded, bias[oc], &mut acc);
            let out = &mut ys[oc * plane..(oc + 1) * plane];
            for r in 0..h {
                out[r * w..(r + 1) * w].copy_from_slice(&acc[r * pad.stride..r * pad.stride + w]);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn conv_backward(
    p: &[f64],
    d: ConvDims,
    n: usize,
    x: &[f64],
    gy: &[f64],
    g: &mut [f64],
    gx: &mut [f64],
) {
    let ConvDims { cin, cout, k, h, w } = d;
    let plane = h * w;
    let pad = Padded::new(&d);
    let (kernel, _) = p.split_at(cout * cin * k * k);
    let (gk, gb) = g.split_at_mut(cout * cin * k * k);
    // Input gradient is a correlation of the output gradient with the flipped kernel:
    // padded-input index j collects tap (oc, ky, kx) from gradient index j − offset.
    // Output gradients sit `reach` zeros into a buffer with `reach` (plus a strip) of zeros after.
    let glen = 2 * pad.reach + pad.span + STRIP;
    let mut back_taps: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(cout * k * k); cin];
    for (ic, t) in back_taps.iter_mut().enumerate() {
        for oc in 0..cout {
            for ky in 0..k {
                for kx in 0..k {
                    let wt = kernel[((oc * cin + ic) * k + ky) * k + kx];
                    t.push((oc * glen + pad.reach - (ky * pad.stride + kx), wt));
                }
            }
        }
    }
    let mut padded = vec![0.0; cin * pad.len];
    let mut gpad = vec![0.0; cout * glen];
    let mut grad_padded = vec![0.0; pad.len.div_ceil(STRIP) * STRIP];
    for s in 0..n {
        let xs = &x[s * cin * plane..(s + 1) * cin * plane];
        for ic in 0..cin {
            pad.fill(&d, &xs[ic * plane..(ic + 1) * plane], &mut padded[ic * pad.len..(ic + 1) * pad.len]);
        }
        let gys = &gy[s * cout * plane..(s + 1) * cout * plane];
        for oc in 0..cout {
            let gout = &gys[oc * plane..(oc + 1) * plane];
            gb[oc] += gout.iter().sum::<f64>();
            let ga = &mut gpad[oc * glen + pad.reach..oc * glen + pad.reach + pad.span];
            for r in 0..h {
                ga[r * pad.stride..r * pad.stride + w].copy_from_slice(&gout[r * w..(r + 1) * w]);
            }
        }
        for oc in 0..cout {
            let ga = &gpad[oc * glen + pad.reach..oc * glen + pad.reach + pad.span];
            for ic in 0..cin {
                let inp = &padded[ic * pad.len..(ic + 1) * pad.len];
                for ky in 0..k {
                    for kx in 0..k {
                        let off = ky * pad.stride + kx;
                        gk[((oc * cin + ic) * k + ky) * k + kx] += dot(ga, &inp[off..off + pad.span]);
                    }
                }
            }
        }
        let gxs = &mut gx[s * cin * plane..(s + 1) * cin * plane];
        for ic in 0..cin {
            correlate(&back_taps[ic], &gpad, 0.0, &mut grad_padded);
            pad.add_interior(&d, &grad_padded, &mut gxs[ic * plane..(ic + 1) * plane]);
        }
    }
}

/// Dot product with eight independent partial sums, combined in a fixed order.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (xa, xb) in ca.zip(cb) {
        for i in 0..8 {
            lanes[i] += xa[i] * xb[i];
        }
    }
    ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7])) + tail
}

/// Returns, for every output element, the flat input index it was taken from.
/// Ties go to the first maximum in row-major window order.
pub(super) fn maxpool_forward(size: usize, n: usize, in_shape: &[usize], x: &[f64], y: &mut [f64]) -> Vec<usize> {
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow) = (h / size, w / size);
    let mut argmax = vec![0; n * c * oh * ow];
    let mut out = 0;
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * h * w;
            for orow in 0..oh {
                for ocol in 0..ow {
                    let mut best_idx = base + orow * size * w + ocol * size;
                    let mut best = x[best_idx];
                    for dr in 0..size {
                        for dc in 0..size {
                            let idx = base + (orow * size + dr) * w + ocol * size + dc;
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    y[out] = best;
                    argmax[out] = best_idx;
                    out += 1;
                }
            }
        }
    }
    argmax
}

pub(super) fn maxpool_backward(argmax: &[usize], gy: &[f64], gx: &mut [f64]) {
    for (&idx, &g) in argmax.iter().zip(gy) {
        gx[idx] += g;
    }
}

pub(super) fn relu_forward(x: &[f64], y: &mut [f64]) {
    for (o, &i) in y.iter_mut().zip(x) {
        *o = if i > 0.0 { i } else { 0.0 };
    }
}

/// Subgradient at zero is zero.
pub(super) fn relu_backward(y: &[f64], gy: &[f64], gx: &mut [f64]) {
    for ((gi, &o), &g) in gx.iter_mut().zip(y).zip(gy) {
        *gi = if o > 0.0 { g } else { 0.0 };
    }
}
