//! Sequential layer stacks recorded onto a [`Graph`].

use rand::Rng;

use super::config::{Architecture, ModelConfig};
use crate::tensor::{Graph, Tensor, Var};
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Layer {
    /// `x [B, in] · w [in, out] + b`.
    Dense { w: usize, b: usize },
    Conv { k: usize, b: usize, stride: usize, pad: usize },
    Deconv { k: usize, b: usize, stride: usize, pad: usize },
    Relu,
    LeakyRelu(f64),
    /// Per-sample shape; the batch axis is kept.
    Reshape(Vec<usize>),
    /// Tiles `[B, n]` to `[B, n, s, s]` and appends two coordinate channels.
    Broadcast { side: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    names: Vec<String>,
    params: Vec<Tensor>,
}

impl Network {
    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Records the parameters as trainable leaves or as constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| if trainable { g.param(p.clone()) } else { g.input(p.clone()) })
            .collect()
    }

    pub fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        for layer in &self.layers {
            h = match layer {
                Layer::Dense { w, b } => {
                    let y = g.matmul(h, vars[*w])?;
                    g.add_bias(y, vars[*b], 1)?
                }
                Layer::Conv { k, b, stride, pad } => {
                    let y = g.conv2d(h, vars[*k], *stride, *pad)?;
                    g.add_bias(y, vars[*b], 1)?
                }
                Layer::Deconv { k, b, stride, pad } => {
                    let y = g.conv_transpose2d(h, vars[*k], *stride, *pad)?;
                    g.add_bias(y, vars[*b], 1)?
                }
                Layer::Relu => g.relu(h),
                Layer::LeakyRelu(slope) => g.leaky_relu(h, *slope),
                Layer::Reshape(shape) => {
                    let batch = g.value(h).shape()[0];
                    let mut full = vec![batch];
                    full.extend(shape);
                    g.reshape(h, &full)?
                }
                Layer::Broadcast { side } => broadcast(g, h, *side)?,
            };
        }
        Ok(h)
    }

    /// Forward pass with every parameter held constant.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let xv = g.input(x.clone());
        let out = self.forward(&mut g, &vars, xv)?;
        Ok(g.value(out).clone())
    }
}

fn broadcast(g: &mut Graph, z: Var, side: usize) -> Result<Var> {
    let shape = g.value(z).shape().to_vec();
    let (batch, n) = (shape[0], shape[1]);
    let col = g.reshape(z, &[batch * n, 1])?;
    let ones = g.input(Tensor::ones(&[1, side * side]));
    let tiled = g.matmul(col, ones)?;
    let tiled = g.reshape(tiled, &[batch, n, side, side])?;
    let coords = g.input(coordinate_channels(batch, side));
    g.concat(&[tiled, coords], 1)
}

/// `[B, 2, s, s]` with x then y running linearly over `[-1, 1]`.
fn coordinate_channels(batch: usize, side: usize) -> Tensor {
    let lin = |i: usize| if side == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (side - 1) as f64 };
    let xs = (0..side * side).map(|i| lin(i % side));
    let ys = (0..side * side).map(|i| lin(i / side));
    let one: Vec<f64> = xs.chain(ys).collect();
    let data = (0..batch).flat_map(|_| one.iter().copied()).collect();
    Tensor::from_parts(vec![batch, 2, side, side], data)
}

pub(crate) struct Builder<'a, R: Rng + ?Sized> {
    prefix: &'static str,
    layers: Vec<Layer>,
    names: Vec<String>,
    params: Vec<Tensor>,
    rng: &'a mut R,
}

impl<'a, R: Rng + ?Sized> Builder<'a, R> {
    pub fn new(prefix: &'static str, rng: &'a mut R) -> Self {
        Builder { prefix, layers: Vec::new(), names: Vec::new(), params: Vec::new(), rng }
    }

    fn push_param(&mut self, kind: &str, shape: &[usize], fan_in: usize) -> usize {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let t = Tensor::rand_uniform(shape, -bound, bound, self.rng);
        let layer = self.layers.len();
        self.names.push(format!("{}.{layer}.{kind}", self.prefix));
        self.params.push(t);
        self.params.len() - 1
    }

    pub fn dense(mut self, input: usize, output: usize) -> Self {
        let w = self.push_param("w", &[input, output], input);
        let b = self.push_param("b", &[output], input);
        self.layers.push(Layer::Dense { w, b });
        self
    }

    pub fn conv(mut self, cin: usize, cout: usize, size: usize, stride: usize, pad: usize) -> Self {
        let fan_in = cin * size * size;
        let k = self.push_param("k", &[cout, cin, size, size], fan_in);
        let b = self.push_param("b", &[cout], fan_in);
        self.layers.push(Layer::Conv { k, b, stride, pad });
        self
    }

    pub fn deconv(mut self, cin: usize, cout: usize, size: usize, stride: usize, pad: usize) -> Self {
        let fan_in = cout * size * size;
        let k = self.push_param("k", &[cin, cout, size, size], fan_in);
        let b = self.push_param("b", &[cout], fan_in);
        self.layers.push(Layer::Deconv { k, b, stride, pad });
        self
    }

    pub fn relu(mut self) -> Self {
        self.layers.push(Layer::Relu);
        self
    }

    pub fn leaky_relu(mut self, slope: f64) -> Self {
        self.layers.push(Layer::LeakyRelu(slope));
        self
    }

    pub fn reshape(mut self, shape: &[usize]) -> Self {
        self.layers.push(Layer::Reshape(shape.to_vec()));
        self
    }

    pub fn broadcast(mut self, side: usize) -> Self {
        self.layers.push(Layer::Broadcast { side });
        self
    }

    pub fn build(self) -> Network {
        Network { layers: self.layers, names: self.names, params: self.params }
    }
}

fn conv_encoder<R: Rng + ?Sized>(c: &ModelConfig, rng: &mut R) -> Network {
    let (h, w) = (c.height / 16, c.width / 16);
    Builder::new("encoder", rng)
        .conv(c.channels, 32, 4, 2, 1)
        .relu()
        .conv(32, 32, 4, 2, 1)
        .relu()
        .conv(32, 64, 4, 2, 1)
        .relu()
        .conv(64, 64, 4, 2, 1)
        .relu()
        .reshape(&[64 * h * w])
        .dense(64 * h * w, 256)
        .relu()
        .dense(256, c.head_size())
        .build()
}

/// Encoder and decoder for `config`, initialized from `rng`.
pub fn build_networks<R: Rng + ?Sized>(c: &ModelConfig, rng: &mut R) -> (Network, Network) {
    let pixels = c.pixels();
    match c.architecture {
        Architecture::MlpSmall => {
            let enc = Builder::new("encoder", rng)
                .reshape(&[pixels])
                .dense(pixels, 256)
                .relu()
                .dense(256, 256)
                .relu()
                .dense(256, c.head_size())
                .build();
            let dec = Builder::new("decoder", rng)
                .dense(c.n, 256)
                .relu()
                .dense(256, 256)
                .relu()
                .dense(256, pixels)
                .reshape(&[c.channels, c.height, c.width])
                .build();
            (enc, dec)
        }
        Architecture::PaperConv => {
            let enc = conv_encoder(c, rng);
            let (h, w) = (c.height / 16, c.width / 16);
            let dec = Builder::new("decoder", rng)
                .dense(c.n, 256)
                .relu()
                .dense(256, 64 * h * w)
                .relu()
                .reshape(&[64, h, w])
                .deconv(64, 64, 4, 2, 1)
                .relu()
                .deconv(64, 32, 4, 2, 1)
                .relu()
                .deconv(32, 32, 4, 2, 1)
                .relu()
                .deconv(32, c.channels, 4, 2, 1)
                .build();
            (enc, dec)
        }
        Architecture::BroadcastCircles => {
            let enc = conv_encoder(c, rng);
            // Three valid 4×4 convolutions shrink the tiled map by 9.
            let dec = Builder::new("decoder", rng)
                .broadcast(c.height + 9)
                .conv(c.n + 2, 64, 4, 1, 0)
                .relu()
                .conv(64, 64, 4, 1, 0)
                .relu()
                .conv(64, c.channels, 4, 1, 0)
                .build();
            (enc, dec)
        }
    }
}

/// Six leaky-ReLU layers of `width` units and a two-logit output.
pub fn discriminator_network<R: Rng + ?Sized>(n: usize, width: usize, rng: &mut R) -> Network {
    let mut b = Builder::new("discriminator", rng).dense(n, width).leaky_relu(0.2);
    for _ in 0..5 {
        b = b.dense(width, width).leaky_relu(0.2);
    }
    b.dense(width, 2).build()
}
