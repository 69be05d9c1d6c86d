use super::{gemm, Mat, Real};

/// Sliding-window geometry between a "source" map that is read through
/// `kernel x kernel` windows and a "destination" grid of window positions.
///
/// A strided convolution reads its input as the source; a transposed
/// convolution is the adjoint of that, so it scatters into its output map
/// treated as the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Patches {
    src_h: usize,
    src_w: usize,
    channels: usize,
    dst_h: usize,
    dst_w: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl Patches {
    fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.channels
    }

    fn src_len(&self) -> usize {
        self.src_h * self.src_w * self.channels
    }

    /// Source coordinate read by window position `o` at kernel offset `k`.
    #[inline]
    fn source(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        let s = (o * self.stride + k) as isize - self.pad as isize;
        (s >= 0 && (s as usize) < limit).then_some(s as usize)
    }

    /// Gathers every window into a row: `[n * dst_h * dst_w, kernel^2 * channels]`.
    fn im2col<T: Real>(&self, src: &[T], n: usize) -> Vec<T> {
        let c = self.channels;
        let row = self.patch_len();
        let mut out = vec![T::zero(); n * self.dst_h * self.dst_w * row];
        let mut r = 0;
        for b in 0..n {
            let img = &src[b * self.src_len()..(b + 1) * self.src_len()];
            for oy in 0..self.dst_h {
                for ox in 0..self.dst_w {
                    let dst = &mut out[r * row..(r + 1) * row];
                    for ky in 0..self.kernel {
                        let Some(sy) = self.source(oy, ky, self.src_h) else { continue };
                        for kx in 0..self.kernel {
                            let Some(sx) = self.source(ox, kx, self.src_w) else { continue };
                            let from = (sy * self.src_w + sx) * c;
                            let to = (ky * self.kernel + kx) * c;
                            dst[to..to + c].copy_from_slice(&img[from..from + c]);
                        }
                    }
                    r += 1;
                }
            }
        }
        out
    }

    /// Adjoint of [`Patches::im2col`]: scatters rows back, summing overlaps.
    fn col2im<T: Real>(&self, cols: &[T], n: usize, out: &mut [T]) {
        let c = self.channels;
        let row = self.patch_len();
        let mut r = 0;
        for b in 0..n {
            let img = &mut out[b * self.src_len()..(b + 1) * self.src_len()];
            for oy in 0..self.dst_h {
                for ox in 0..self.dst_w {
                    let src = &cols[r * row..(r + 1) * row];
                    for ky in 0..self.kernel {
                        let Some(sy) = self.source(oy, ky, self.src_h) else { continue };
                        for kx in 0..self.kernel {
                            let Some(sx) = self.source(ox, kx, self.src_w) else { continue };
                            let to = (sy * self.src_w + sx) * c;
                            let from = (ky * self.kernel + kx) * c;
                            for (d, &s) in img[to..to + c].iter_mut().zip(&src[from..from + c]) {
                                *d = *d + s;
                            }
                        }
                    }
                    r += 1;
                }
            }
        }
    }
}

fn add_bias<T: Real>(out: &mut [T], bias: &[T]) {
    for row in out.chunks_exact_mut(bias.len()) {
        for (o, &b) in row.iter_mut().zip(bias) {
            *o = *o + b;
        }
    }
}

fn accumulate_bias_grad<T: Real>(grad_out: &[T], gbias: &mut [T]) {
    for row in grad_out.chunks_exact(gbias.len()) {
        for (g, &v) in gbias.iter_mut().zip(row) {
            *g = *g + v;
        }
    }
}

/// Strided 2-D convolution with "same" padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conv2d {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub(crate) weight: usize,
    pub(crate) bias: usize,
}

impl Conv2d {
    fn geometry(&self) -> Patches {
        let (out_h, out_w) = self.out_hw();
        let pad = ((out_h - 1) * self.stride + self.kernel).saturating_sub(self.in_h) / 2;
        Patches {
            src_h: self.in_h,
            src_w: self.in_w,
            channels: self.in_c,
            dst_h: out_h,
            dst_w: out_w,
            kernel: self.kernel,
            stride: self.stride,
            pad,
        }
    }

    pub fn out_hw(&self) -> (usize, usize) {
        (self.in_h.div_ceil(self.stride), self.in_w.div_ceil(self.stride))
    }

    pub fn weight_len(&self) -> usize {
        self.kernel * self.kernel * self.in_c * self.out_c
    }
}

/// Transposed convolution doubling (for stride 2) the spatial resolution;
/// the exact adjoint of [`Conv2d`] with the same kernel and stride.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvTranspose2d {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub(crate) weight: usize,
    pub(crate) bias: usize,
}

impl ConvTranspose2d {
    pub fn out_hw(&self) -> (usize, usize) {
        (self.in_h * self.stride, self.in_w * self.stride)
    }

    fn geometry(&self) -> Patches {
        let (out_h, out_w) = self.out_hw();
        let pad = ((self.in_h - 1) * self.stride + self.kernel).saturating_sub(out_h) / 2;
        Patches {
            src_h: out_h,
            src_w: out_w,
            channels: self.out_c,
            dst_h: self.in_h,
            dst_w: self.in_w,
            kernel: self.kernel,
            stride: self.stride,
            pad,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.kernel * self.kernel * self.in_c * self.out_c
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Linear {
    pub fan_in: usize,
    pub fan_out: usize,
    pub(crate) weight: usize,
    pub(crate) bias: usize,
}

/// Per-sample, per-channel normalization over spatial positions, no affine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceNorm {
    pub hw: usize,
    pub channels: usize,
}

pub(crate) const INSTANCE_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Layer {
    Conv2d(Conv2d),
    ConvTranspose2d(ConvTranspose2d),
    Linear(Linear),
    InstanceNorm(InstanceNorm),
    Relu { size: usize },
}

impl Layer {
    pub fn in_size(&self) -> usize {
        match self {
            Layer::Conv2d(c) => c.in_h * c.in_w * c.in_c,
            Layer::ConvTranspose2d(c) => c.in_h * c.in_w * c.in_c,
            Layer::Linear(l) => l.fan_in,
            Layer::InstanceNorm(n) => n.hw * n.channels,
            Layer::Relu { size } => *size,
        }
    }

    pub fn out_size(&self) -> usize {
        match self {
            Layer::Conv2d(c) => {
                let (h, w) = c.out_hw();
                h * w * c.out_c
            }
            Layer::ConvTranspose2d(c) => {
                let (h, w) = c.out_hw();
                h * w * c.out_c
            }
            Layer::Linear(l) => l.fan_out,
            Layer::InstanceNorm(n) => n.hw * n.channels,
            Layer::Relu { size } => *size,
        }
    }

    /// Runs the layer on `n` samples. Returns the output and an auxiliary
    /// buffer needed by [`Layer::backward`] (empty when none is needed).
    pub(crate) fn forward<T: Real>(&self, params: &[T], x: &[T], n: usize, keep_aux: bool) -> (Vec<T>, Vec<T>) {
        match self {
            Layer::Conv2d(c) => {
                let geo = c.geometry();
                let patches = geo.im2col(x, n);
                let rows = n * geo.dst_h * geo.dst_w;
                let mut out = vec![T::zero(); rows * c.out_c];
                let w = &params[c.weight..c.weight + c.weight_len()];
                gemm(rows, geo.patch_len(), c.out_c, Mat::n(&patches), Mat::n(w), T::zero(), &mut out);
                add_bias(&mut out, &params[c.bias..c.bias + c.out_c]);
                (out, if keep_aux { patches } else { Vec::new() })
            }
            Layer::ConvTranspose2d(c) => {
                let geo = c.geometry();
                let rows = n * c.in_h * c.in_w;
                let mut cols = vec![T::zero(); rows * geo.patch_len()];
                let w = &params[c.weight..c.weight + c.weight_len()];
                gemm(rows, c.in_c, geo.patch_len(), Mat::n(x), Mat::n(w), T::zero(), &mut cols);
                let mut out = vec![T::zero(); n * geo.src_len()];
                geo.col2im(&cols, n, &mut out);
                add_bias(&mut out, &params[c.bias..c.bias + c.out_c]);
                (out, Vec::new())
            }
            Layer::Linear(l) => {
                let mut out = vec![T::zero(); n * l.fan_out];
                let w = &params[l.weight..l.weight + l.fan_in * l.fan_out];
                gemm(n, l.fan_in, l.fan_out, Mat::n(x), Mat::n(w), T::zero(), &mut out);
                add_bias(&mut out, &params[l.bias..l.bias + l.fan_out]);
                (out, Vec::new())
            }
            Layer::Relu { .. } => (x.iter().map(|&v| v.max(T::zero())).collect(), Vec::new()),
            Layer::InstanceNorm(norm) => {
                let (hw, c) = (norm.hw, norm.channels);
                let eps = T::from_f64_lossy(INSTANCE_NORM_EPS);
                let inv_hw = T::one() / T::from_usize(hw).unwrap();
                let mut out = vec![T::zero(); x.len()];
                let mut inv_std = vec![T::zero(); n * c];
                for b in 0..n {
                    let xs = &x[b * hw * c..(b + 1) * hw * c];
                    let ys = &mut out[b * hw * c..(b + 1) * hw * c];
                    for ch in 0..c {
                        let mean = (0..hw).map(|p| xs[p * c + ch]).sum::<T>() * inv_hw;
                        let var = (0..hw).map(|p| (xs[p * c + ch] - mean).powi(2)).sum::<T>() * inv_hw;
                        let is = T::one() / (var + eps).sqrt();
                        for p in 0..hw {
                            ys[p * c + ch] = (xs[p * c + ch] - mean) * is;
                        }
                        inv_std[b * c + ch] = is;
                    }
                }
                (out, inv_std)
            }
        }
    }

    /// Back-propagates `grad_out`. Parameter gradients are accumulated into
    /// `grads` when given; the input gradient is returned when requested.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward<T: Real>(
        &self,
        params: &[T],
        input: &[T],
        output: &[T],
        aux: &[T],
        grad_out: &[T],
        n: usize,
        grads: Option<&mut [T]>,
        need_input: bool,
    ) -> Option<Vec<T>> {
        match self {
            Layer::Conv2d(c) => {
                let geo = c.geometry();
                let rows = n * geo.dst_h * geo.dst_w;
                let k = geo.patch_len();
                let w = &params[c.weight..c.weight + c.weight_len()];
                if let Some(g) = grads {
                    let gw = &mut g[c.weight..c.weight + c.weight_len()];
                    gemm(k, rows, c.out_c, Mat::t(aux), Mat::n(grad_out), T::one(), gw);
                    accumulate_bias_grad(grad_out, &mut g[c.bias..c.bias + c.out_c]);
                }
                need_input.then(|| {
                    let mut gpatches = vec![T::zero(); rows * k];
                    gemm(rows, c.out_c, k, Mat::n(grad_out), Mat::t(w), T::zero(), &mut gpatches);
                    let mut gx = vec![T::zero(); n * geo.src_len()];
                    geo.col2im(&gpatches, n, &mut gx);
                    gx
                })
            }
            Layer::ConvTranspose2d(c) => {
                let geo = c.geometry();
                let rows = n * c.in_h * c.in_w;
                let k = geo.patch_len();
                let w = &params[c.weight..c.weight + c.weight_len()];
                let gcols = geo.im2col(grad_out, n);
                if let Some(g) = grads {
                    let gw = &mut g[c.weight..c.weight + c.weight_len()];
                    gemm(c.in_c, rows, k, Mat::t(input), Mat::n(&gcols), T::one(), gw);
                    accumulate_bias_grad(grad_out, &mut g[c.bias..c.bias + c.out_c]);
                }
                need_input.then(|| {
                    let mut gx = vec![T::zero(); rows * c.in_c];
                    gemm(rows, k, c.in_c, Mat::n(&gcols), Mat::t(w), T::zero(), &mut gx);
                    gx
                })
            }
            Layer::Linear(l) => {
                let w = &params[l.weight..l.weight + l.fan_in * l.fan_out];
                if let Some(g) = grads {
                    let gw = &mut g[l.weight..l.weight + l.fan_in * l.fan_out];
                    gemm(l.fan_in, n, l.fan_out, Mat::t(input), Mat::n(grad_out), T::one(), gw);
                    accumulate_bias_grad(grad_out, &mut g[l.bias..l.bias + l.fan_out]);
                }
                need_input.then(|| {
                    let mut gx = vec![T::zero(); n * l.fan_in];
                    gemm(n, l.fan_out, l.fan_in, Mat::n(grad_out), Mat::t(w), T::zero(), &mut gx);
                    gx
                })
            }
            Layer::Relu { .. } => need_input.then(|| {
                input
                    .iter()
                    .zip(grad_out)
                    .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
                    .collect()
            }),
            Layer::InstanceNorm(norm) => need_input.then(|| {
                let (hw, c) = (norm.hw, norm.channels);
                let inv_hw = T::one() / T::from_usize(hw).unwrap();
                let mut gx = vec![T::zero(); grad_out.len()];
                for b in 0..n {
                    let base = b * hw * c;
                    for ch in 0..c {
                        let idx = |p: usize| base + p * c + ch;
                        let mean_g = (0..hw).map(|p| grad_out[idx(p)]).sum::<T>() * inv_hw;
                        let mean_gx = (0..hw).map(|p| grad_out[idx(p)] * output[idx(p)]).sum::<T>() * inv_hw;
                        let is = aux[b * c + ch];
                        for p in 0..hw {
                            gx[idx(p)] = is * (grad_out[idx(p)] - mean_g - output[idx(p)] * mean_gx);
                        }
                    }
                }
                gx
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[allow(clippy::too_many_arguments)]
    fn naive_conv(x: &[f64], h: usize, w: usize, cin: usize, weight: &[f64], cout: usize, k: usize, s: usize, p: usize) -> Vec<f64> {
        let (oh, ow) = (h.div_ceil(s), w.div_ceil(s));
        let mut out = vec![0.0; oh * ow * cout];
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = 0.0;
                    for ky in 0..k {
                        for kx in 0..k {
                            let sy = (oy * s + ky) as isize - p as isize;
                            let sx = (ox * s + kx) as isize - p as isize;
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                let xv = x[((sy as usize) * w + sx as usize) * cin + ci];
                                acc += xv * weight[((ky * k + kx) * cin + ci) * cout + co];
                            }
                        }
                    }
                    out[(oy * ow + ox) * cout + co] = acc;
                }
            }
        }
        out
    }

    fn ramp(len: usize, scale: f64) -> Vec<f64> {
        (0..len).map(|i| ((i * 7919 % 97) as f64 / 97.0 - 0.5) * scale).collect()
    }

    #[test]
    fn conv_matches_direct_summation() {
        let conv = Conv2d { in_h: 8, in_w: 8, in_c: 3, out_c: 5, kernel: 4, stride: 2, weight: 0, bias: 0 };
        let wlen = conv.weight_len();
        let mut params = ramp(wlen + 5, 1.0);
        params[wlen..].iter_mut().for_each(|b| *b = 0.0);
        let conv = Conv2d { bias: wlen, ..conv };
        let x = ramp(2 * 8 * 8 * 3, 2.0);
        let (y, _) = Layer::Conv2d(conv.clone()).forward(&params, &x, 2, false);
        for b in 0..2 {
            let expect = naive_conv(&x[b * 192..(b + 1) * 192], 8, 8, 3, &params[..wlen], 5, 4, 2, 1);
            for (a, e) in y[b * 80..(b + 1) * 80].iter().zip(&expect) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        // <conv(x), y> == <x, convT(y)> with shared weights laid out accordingly.
        let (h, cin, cout, k) = (4usize, 2usize, 3usize, 4usize);
        let conv = Conv2d { in_h: 2 * h, in_w: 2 * h, in_c: cin, out_c: cout, kernel: k, stride: 2, weight: 0, bias: 0 };
        let wlen = conv.weight_len();
        let wconv = ramp(wlen, 1.0);
        // convT weight [cout_t=cin ... ] maps (h,h,cout) -> (2h,2h,cin); W_t[co][(ky,kx,ci)] = W[(ky,kx,ci)][co]
        let mut wt = vec![0.0; wlen];
        for r in 0..k * k * cin {
            for co in 0..cout {
                wt[co * k * k * cin + r] = wconv[r * cout + co];
            }
        }
        let convt = ConvTranspose2d { in_h: h, in_w: h, in_c: cout, out_c: cin, kernel: k, stride: 2, weight: 0, bias: wlen };
        let x = ramp(4 * h * h * cin, 1.0);
        let y = ramp(h * h * cout, 3.0);
        let mut pc = wconv.clone();
        pc.extend(std::iter::repeat_n(0.0, cout));
        let mut pt = wt;
        pt.extend(std::iter::repeat_n(0.0, cin));
        let conv = Conv2d { bias: wlen, ..conv };
        let (cx, _) = Layer::Conv2d(conv).forward(&pc, &x, 1, false);
        let (ty, _) = Layer::ConvTranspose2d(convt).forward(&pt, &y, 1, false);
        let lhs: f64 = cx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&ty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn instance_norm_output_is_standardized() {
        let norm = Layer::InstanceNorm(InstanceNorm { hw: 16, channels: 3 });
        let x = ramp(2 * 16 * 3, 5.0);
        let (y, _) = norm.forward::<f64>(&[], &x, 2, true);
        for b in 0..2 {
            for ch in 0..3 {
                let vals: Vec<f64> = (0..16).map(|p| y[b * 48 + p * 3 + ch]).collect();
                let mean = vals.iter().sum::<f64>() / 16.0;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
                assert!(mean.abs() < 1e-12);
                assert!((var - 1.0).abs() < 1e-3);
            }
        }
    }
}
