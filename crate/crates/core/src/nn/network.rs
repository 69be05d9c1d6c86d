use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::layers::{Conv2d, ConvTranspose2d, InstanceNorm, Layer, Linear};
use super::Real;

/// Name, shape and location of one parameter array inside the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub fan_in: usize,
    pub is_bias: bool,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Feed-forward stack of layers over a single flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    layers: Vec<Layer>,
    specs: Vec<ParamSpec>,
    pub params: Vec<T>,
}

/// Everything recorded by a forward pass that the backward pass needs.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    n: usize,
    /// `acts[i]` is the input of layer `i`; the last entry is the output.
    acts: Vec<Vec<T>>,
    aux: Vec<Vec<T>>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().expect("trace holds at least the input")
    }

    pub fn batch(&self) -> usize {
        self.n
    }
}

/// Spatial state tracked while stacking layers.
#[derive(Debug, Clone, Copy)]
struct Cursor {
    h: usize,
    w: usize,
    c: usize,
}

pub struct NetworkBuilder {
    layers: Vec<Layer>,
    specs: Vec<ParamSpec>,
    next_offset: usize,
    cursor: Cursor,
}

impl NetworkBuilder {
    pub fn new(h: usize, w: usize, c: usize) -> Self {
        NetworkBuilder { layers: Vec::new(), specs: Vec::new(), next_offset: 0, cursor: Cursor { h, w, c } }
    }

    fn param(&mut self, name: String, shape: Vec<usize>, fan_in: usize, is_bias: bool) -> usize {
        let offset = self.next_offset;
        self.next_offset += shape.iter().product::<usize>();
        self.specs.push(ParamSpec { name, shape, offset, fan_in, is_bias });
        offset
    }

    fn flat(&self) -> usize {
        self.cursor.h * self.cursor.w * self.cursor.c
    }

    pub fn conv(mut self, name: &str, out_c: usize, kernel: usize, stride: usize) -> Self {
        let Cursor { h, w, c } = self.cursor;
        let fan_in = kernel * kernel * c;
        let weight = self.param(format!("{name}.weight"), vec![kernel, kernel, c, out_c], fan_in, false);
        let bias = self.param(format!("{name}.bias"), vec![out_c], fan_in, true);
        let conv = Conv2d { in_h: h, in_w: w, in_c: c, out_c, kernel, stride, weight, bias };
        let (oh, ow) = conv.out_hw();
        self.cursor = Cursor { h: oh, w: ow, c: out_c };
        self.layers.push(Layer::Conv2d(conv));
        self
    }

    pub fn conv_transpose(mut self, name: &str, out_c: usize, kernel: usize, stride: usize) -> Self {
        let Cursor { h, w, c } = self.cursor;
        // Each output pixel receives (kernel / stride)^2 taps per input channel.
        let fan_in = (c * kernel * kernel / (stride * stride)).max(1);
        let weight = self.param(format!("{name}.weight"), vec![c, kernel, kernel, out_c], fan_in, false);
        let bias = self.param(format!("{name}.bias"), vec![out_c], fan_in, true);
        let layer = ConvTranspose2d { in_h: h, in_w: w, in_c: c, out_c, kernel, stride, weight, bias };
        let (oh, ow) = layer.out_hw();
        self.cursor = Cursor { h: oh, w: ow, c: out_c };
        self.layers.push(Layer::ConvTranspose2d(layer));
        self
    }

    /// Fully connected layer over the flattened current activation.
    pub fn linear(mut self, name: &str, fan_out: usize) -> Self {
        let fan_in = self.flat();
        let weight = self.param(format!("{name}.weight"), vec![fan_in, fan_out], fan_in, false);
        let bias = self.param(format!("{name}.bias"), vec![fan_out], fan_in, true);
        self.layers.push(Layer::Linear(Linear { fan_in, fan_out, weight, bias }));
        self.cursor = Cursor { h: 1, w: 1, c: fan_out };
        self
    }

    /// Reinterprets the flat activation as an `h x w x c` map.
    pub fn reshape(mut self, h: usize, w: usize, c: usize) -> Self {
        assert_eq!(h * w * c, self.flat(), "reshape must preserve size");
        self.cursor = Cursor { h, w, c };
        self
    }

    pub fn relu(mut self) -> Self {
        let size = self.flat();
        self.layers.push(Layer::Relu { size });
        self
    }

    pub fn instance_norm(mut self) -> Self {
        let Cursor { h, w, c } = self.cursor;
        self.layers.push(Layer::InstanceNorm(InstanceNorm { hw: h * w, channels: c }));
        self
    }

    /// Finishes the stack with He-uniform weights and zero biases.
    pub fn build<T: Real, R: Rng + ?Sized>(self, rng: &mut R) -> Network<T> {
        let mut params = vec![T::zero(); self.next_offset];
        for spec in &self.specs {
            if spec.is_bias {
                continue;
            }
            let bound = (6.0 / spec.fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for p in &mut params[spec.offset..spec.offset + spec.len()] {
                *p = T::from_f64_lossy(dist.sample(rng));
            }
        }
        Network { layers: self.layers, specs: self.specs, params }
    }
}

/// Identifier of the initialization scheme used by [`NetworkBuilder::build`].
pub const INIT_SCHEME: &str = "he_uniform_fan_in/zero_bias";

impl<T: Real> Network<T> {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_size(&self) -> usize {
        self.layers.first().map_or(0, Layer::in_size)
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_size)
    }

    /// Converts parameters to another element type (used by gradient checks).
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            layers: self.layers.clone(),
            specs: self.specs.clone(),
            params: self.params.iter().map(|p| U::from_f64_lossy(p.to_f64().unwrap())).collect(),
        }
    }

    pub fn forward(&self, x: &[T], n: usize) -> Trace<T> {
        assert_eq!(x.len(), n * self.input_size(), "network input size");
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.layers.len());
        acts.push(x.to_vec());
        for layer in &self.layers {
            let (out, a) = layer.forward(&self.params, acts.last().unwrap(), n, true);
            acts.push(out);
            aux.push(a);
        }
        Trace { n, acts, aux }
    }

    /// Forward pass that keeps no intermediate state.
    pub fn infer(&self, x: &[T], n: usize) -> Vec<T> {
        assert_eq!(x.len(), n * self.input_size(), "network input size");
        let mut cur: Option<Vec<T>> = None;
        for layer in &self.layers {
            let input = cur.as_deref().unwrap_or(x);
            let (out, _) = layer.forward(&self.params, input, n, false);
            cur = Some(out);
        }
        cur.unwrap_or_else(|| x.to_vec())
    }

    /// Back-propagates `grad_out` through a recorded trace.
    ///
    /// Parameter gradients are added into `grads` (same layout as `params`)
    /// when given. Returns the gradient with respect to the network input
    /// when `need_input` is set.
    pub fn backward(&self, trace: &Trace<T>, grad_out: &[T], mut grads: Option<&mut [T]>, need_input: bool) -> Option<Vec<T>> {
        assert_eq!(grad_out.len(), trace.output().len(), "gradient size");
        if let Some(g) = grads.as_deref() {
            assert_eq!(g.len(), self.params.len(), "gradient buffer size");
        }
        let mut g = grad_out.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let want_input = i > 0 || need_input;
            {
                let next = layer.backward(
                &self.params,
                &trace.acts[i],
                &trace.acts[i + 1],
                &trace.aux[i],
                &g,
                trace.n,
                grads.as_deref_mut(),
                want_input,
            )?;
                g = next
            }
        }
        Some(g)
    }
}
