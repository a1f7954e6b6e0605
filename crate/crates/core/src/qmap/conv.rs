//! Small fully convolutional Q-network with hand-written backpropagation.
//!
//! Each component gets its own network:
//! `F -> conv3x3(16) -> ReLU -> conv3x3(16) -> ReLU -> conv1x1(1)`, all with
//! zero same-padding, so the output map has the input's dimensions.
//!
//! Training only ever needs the value at one pixel per sample, so `fit`
//! evaluates and differentiates the 5x5 receptive field around that pixel
//! instead of the whole map.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Approximator, FitSample, Heads, LayerShape, ParamManifest, ParamSet, QMap, QMapError, QMapSet, PARAM_FORMAT_VERSION};
use crate::scene::{Observation, Pixel};

pub const HIDDEN_WIDTH: usize = 16;
const HW: usize = HIDDEN_WIDTH;
const TAPS: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet {
    pub channels: usize,
    /// `[out][in][ky][kx]`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

/// Activations of the receptive field around one pixel.
struct LocalCache {
    /// `[c][5][5]` input patch centred on the pixel, zero outside the grid.
    patch: Vec<f64>,
    /// Which of the 3x3 first-layer positions lie inside the grid.
    valid: [bool; TAPS],
    /// `[tap][HW]` first hidden layer at each of the 3x3 positions.
    h1: Vec<f64>,
    h2: [f64; HW],
    out: f64,
}

impl ConvNet {
    pub fn zeros(channels: usize) -> Self {
        Self {
            channels,
            w1: vec![0.0; HW * channels * TAPS],
            b1: vec![0.0; HW],
            w2: vec![0.0; HW * HW * TAPS],
            b2: vec![0.0; HW],
            w3: vec![0.0; HW],
            b3: vec![0.0; 1],
        }
    }

    /// He-uniform weights, zero biases.
    pub fn init<R: Rng>(channels: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(channels);
        let fill = |v: &mut Vec<f64>, fan_in: usize, rng: &mut R| {
            let bound = (6.0 / fan_in as f64).sqrt();
            for x in v.iter_mut() {
                *x = rng.gen_range(-bound..bound);
            }
        };
        fill(&mut net.w1, channels * TAPS, rng);
        fill(&mut net.w2, HW * TAPS, rng);
        fill(&mut net.w3, HW, rng);
        for x in net.w3.iter_mut() {
            *x *= 0.5;
        }
        net
    }

    pub fn layers(&self) -> [&[f64]; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    pub fn layers_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }

    pub fn layer_shapes(&self) -> [(&'static str, Vec<usize>); 6] {
        [
            ("conv1.weight", vec![HW, self.channels, 3, 3]),
            ("conv1.bias", vec![HW]),
            ("conv2.weight", vec![HW, HW, 3, 3]),
            ("conv2.bias", vec![HW]),
            ("head.weight", vec![1, HW, 1, 1]),
            ("head.bias", vec![1]),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.len()).sum()
    }

    /// Flat parameter view, layers in declaration order.
    pub fn param(&self, mut i: usize) -> f64 {
        for l in self.layers() {
            if i < l.len() {
                return l[i];
            }
            i -= l.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set_param(&mut self, mut i: usize, value: f64) {
        for l in self.layers_mut() {
            if i < l.len() {
                l[i] = value;
                return;
            }
            i -= l.len();
        }
        panic!("parameter index out of range")
    }

    /// Full output map, row-major.
    pub fn forward(&self, obs: &Observation) -> Vec<f64> {
        assert_eq!(obs.channels, self.channels, "observation channel count");
        let (w, h) = (obs.width, obs.height);
        let h1 = conv3x3_relu(&obs.data, self.channels, w, h, &self.w1, &self.b1);
        let h2 = conv3x3_relu(&h1, HW, w, h, &self.w2, &self.b2);
        let n = w * h;
        let mut out = vec![self.b3[0]; n];
        for c in 0..HW {
            let wc = self.w3[c];
            for (o, &x) in out.iter_mut().zip(&h2[c * n..(c + 1) * n]) {
                *o += wc * x;
            }
        }
        out
    }

    fn local_forward(&self, obs: &Observation, p: Pixel) -> LocalCache {
        let ch = self.channels;
        let (w, h) = (obs.width as i64, obs.height as i64);
        let (u, v) = (p.u as i64, p.v as i64);
        let mut patch = vec![0.0; ch * 25];
        for dy in 0..5i64 {
            let y = v + dy - 2;
            if y < 0 || y >= h {
                continue;
            }
            for dx in 0..5i64 {
                let x = u + dx - 2;
                if x < 0 || x >= w {
                    continue;
                }
                for c in 0..ch {
                    patch[c * 25 + (dy * 5 + dx) as usize] = obs.get(x as usize, y as usize, c);
                }
            }
        }

        let mut valid = [false; TAPS];
        let mut h1 = vec![0.0; TAPS * HW];
        for oy in 0..3i64 {
            for ox in 0..3i64 {
                let a = (oy * 3 + ox) as usize;
                let (qx, qy) = (u + ox - 1, v + oy - 1);
                if qx < 0 || qy < 0 || qx >= w || qy >= h {
                    continue;
                }
                valid[a] = true;
                for o in 0..HW {
                    let mut s = self.b1[o];
                    for c in 0..ch {
                        let wk = &self.w1[(o * ch + c) * TAPS..(o * ch + c + 1) * TAPS];
                        let pc = &patch[c * 25..(c + 1) * 25];
                        for ky in 0..3 {
                            for kx in 0..3 {
                                s += wk[(ky * 3 + kx) as usize]
                                    * pc[((oy + ky) * 5 + ox + kx) as usize];
                            }
                        }
                    }
                    h1[a * HW + o] = s.max(0.0);
                }
            }
        }

        let mut h2 = [0.0; HW];
        for (o, h2o) in h2.iter_mut().enumerate() {
            let mut s = self.b2[o];
            for c in 0..HW {
                let wk = &self.w2[(o * HW + c) * TAPS..(o * HW + c + 1) * TAPS];
                for a in 0..TAPS {
                    if valid[a] {
                        s += wk[a] * h1[a * HW + c];
                    }
                }
            }
            *h2o = s.max(0.0);
        }
        let out = self.b3[0] + self.w3.iter().zip(&h2).map(|(a, b)| a * b).sum::<f64>();
        LocalCache {
            patch,
            valid,
            h1,
            h2,
            out,
        }
    }

    pub fn value_at(&self, obs: &Observation, p: Pixel) -> f64 {
        self.local_forward(obs, p).out
    }

    /// Accumulate `d_out * d(out)/d(params)` into `grad`.
    fn backward(&self, cache: &LocalCache, d_out: f64, grad: &mut ConvNet) {
        let ch = self.channels;
        grad.b3[0] += d_out;
        let mut dh2 = [0.0; HW];
        for c in 0..HW {
            grad.w3[c] += d_out * cache.h2[c];
            if cache.h2[c] > 0.0 {
                dh2[c] = d_out * self.w3[c];
            }
        }
        let mut dh1 = vec![0.0; TAPS * HW];
        for o in 0..HW {
            let g = dh2[o];
            if g == 0.0 {
                continue;
            }
            grad.b2[o] += g;
            for c in 0..HW {
                let base = (o * HW + c) * TAPS;
                for a in 0..TAPS {
                    if cache.valid[a] {
                        grad.w2[base + a] += g * cache.h1[a * HW + c];
                        dh1[a * HW + c] += g * self.w2[base + a];
                    }
                }
            }
        }
        for a in 0..TAPS {
            if !cache.valid[a] {
                continue;
            }
            let (oy, ox) = (a / 3, a % 3);
            for o in 0..HW {
                if cache.h1[a * HW + o] <= 0.0 {
                    continue;
                }
                let g = dh1[a * HW + o];
                grad.b1[o] += g;
                for c in 0..ch {
                    let gw = &mut grad.w1[(o * ch + c) * TAPS..(o * ch + c + 1) * TAPS];
                    let pc = &cache.patch[c * 25..(c + 1) * 25];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            gw[ky * 3 + kx] += g * pc[(oy + ky) * 5 + ox + kx];
                        }
                    }
                }
            }
        }
    }
}

/// Same-padded 3x3 convolution followed by ReLU. Tensors are `[c][y][x]`.
fn conv3x3_relu(input: &[f64], cin: usize, w: usize, h: usize, weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = w * h;
    let cout = bias.len();
    let mut out = vec![0.0; cout * n];
    for o in 0..cout {
        let out_o = &mut out[o * n..(o + 1) * n];
        out_o.fill(bias[o]);
        for c in 0..cin {
            let in_c = &input[c * n..(c + 1) * n];
            let wk = &weights[(o * cin + c) * TAPS..(o * cin + c + 1) * TAPS];
            for ky in 0..3usize {
                // Output rows whose source row y + ky - 1 is inside the grid.
                let y_lo = if ky == 0 { 1 } else { 0 };
                let y_hi = if ky == 2 { h - 1 } else { h };
                for kx in 0..3usize {
                    let wt = wk[ky * 3 + kx];
                    let x_lo = if kx == 0 { 1 } else { 0 };
                    let x_hi = if kx == 2 { w - 1 } else { w };
                    for y in y_lo..y_hi {
                        let sy = y + ky - 1;
                        let dst = &mut out_o[y * w + x_lo..y * w + x_hi];
                        let src = &in_c[sy * w + x_lo + kx - 1..sy * w + x_hi + kx - 1];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wt * s;
                        }
                    }
                }
            }
        }
        for x in out_o.iter_mut() {
            *x = x.max(0.0);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvSettings {
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for ConvSettings {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
        }
    }
}

/// One [`ConvNet`] per component, trained with momentum SGD on squared error.
#[derive(Debug, Clone)]
pub struct ConvApproximator {
    heads: Heads,
    settings: ConvSettings,
    nets: Vec<ConvNet>,
    velocity: Vec<ConvNet>,
}

impl ConvApproximator {
    pub fn new(heads: Heads, channels: usize, settings: ConvSettings, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nets: Vec<ConvNet> = (0..heads.len()).map(|_| ConvNet::init(channels, &mut rng)).collect();
        let velocity = nets.iter().map(|n| ConvNet::zeros(n.channels)).collect();
        Self {
            heads,
            settings,
            nets,
            velocity,
        }
    }

    pub fn channels(&self) -> usize {
        self.nets[0].channels
    }

    pub fn settings(&self) -> ConvSettings {
        self.settings
    }

    pub fn set_settings(&mut self, settings: ConvSettings) {
        self.settings = settings;
    }

    pub fn nets(&self) -> &[ConvNet] {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut [ConvNet] {
        &mut self.nets
    }

    /// Batch loss (as returned by `fit`) and its gradient per component
    /// network, without updating anything.
    pub fn gradients(&self, batch: &[FitSample<'_>]) -> (f64, Vec<ConvNet>) {
        let mut grads: Vec<ConvNet> = self.nets.iter().map(|n| ConvNet::zeros(n.channels)).collect();
        if batch.is_empty() {
            return (0.0, grads);
        }
        let scale = 2.0 / batch.len() as f64;
        let mut loss = 0.0;
        for sample in batch {
            for (k, net) in self.nets.iter().enumerate() {
                let cache = net.local_forward(sample.observation, sample.pixel);
                let err = cache.out - sample.targets[k];
                loss += err * err;
                net.backward(&cache, scale * err, &mut grads[k]);
            }
        }
        (loss / batch.len() as f64, grads)
    }
}

impl Approximator for ConvApproximator {
    fn heads(&self) -> &Heads {
        &self.heads
    }

    fn predict(&self, obs: &Observation) -> QMapSet {
        QMapSet {
            maps: self
                .nets
                .iter()
                .map(|net| QMap {
                    width: obs.width,
                    height: obs.height,
                    values: net.forward(obs),
                })
                .collect(),
            component_names: self.heads.names.clone(),
            weights: self.heads.weights.clone(),
        }
    }

    fn values_at(&self, obs: &Observation, pixel: Pixel) -> Vec<f64> {
        self.nets.iter().map(|n| n.value_at(obs, pixel)).collect()
    }

    fn fit(&mut self, batch: &[FitSample<'_>]) -> f64 {
        let (loss, grads) = self.gradients(batch);
        let ConvSettings {
            learning_rate,
            momentum,
        } = self.settings;
        for ((net, vel), grad) in self.nets.iter_mut().zip(&mut self.velocity).zip(&grads) {
            for ((p, v), g) in net
                .layers_mut()
                .into_iter()
                .zip(vel.layers_mut())
                .zip(grad.layers())
            {
                for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
                    *vi = momentum * *vi + gi;
                    *pi -= learning_rate * *vi;
                }
            }
        }
        loss
    }

    fn configure_optimizer(&mut self, learning_rate: f64, momentum: f64) {
        self.settings = ConvSettings {
            learning_rate,
            momentum,
        };
    }

    fn copy_from(&mut self, other: &Self) {
        self.nets.clone_from(&other.nets);
    }

    fn export_params(&self) -> ParamSet {
        let mut layers = Vec::new();
        let mut payload = Vec::new();
        for (name, net) in self.heads.names.iter().zip(&self.nets) {
            for ((layer, shape), data) in net.layer_shapes().into_iter().zip(net.layers()) {
                layers.push(LayerShape {
                    name: format!("{name}.{layer}"),
                    shape,
                });
                payload.push(data.to_vec());
            }
        }
        ParamSet {
            manifest: ParamManifest {
                format_version: PARAM_FORMAT_VERSION,
                kind: "conv".into(),
                component_names: self.heads.names.clone(),
                weights: self.heads.weights.clone(),
                layers,
                settings: json!({
                    "channels": self.channels(),
                    "hidden_width": HW,
                    "learning_rate": self.settings.learning_rate,
                    "momentum": self.settings.momentum,
                }),
            },
            payload,
        }
    }

    fn import_params(params: &ParamSet) -> Result<Self, QMapError> {
        params.validate("conv")?;
        let m = &params.manifest;
        let get = |key: &str| {
            m.settings[key]
                .as_f64()
                .ok_or_else(|| QMapError::Params(format!("missing setting '{key}'")))
        };
        let channels = get("channels")? as usize;
        if get("hidden_width")? as usize != HW {
            return Err(QMapError::Params("unsupported hidden width".into()));
        }
        let settings = ConvSettings {
            learning_rate: get("learning_rate")?,
            momentum: get("momentum")?,
        };
        let heads = Heads::new(m.component_names.clone(), m.weights.clone());
        let mut nets = Vec::with_capacity(heads.len());
        for name in &heads.names {
            let mut net = ConvNet::zeros(channels);
            let shapes = net.layer_shapes();
            for ((layer, shape), dst) in shapes.into_iter().zip(net.layers_mut()) {
                let full = format!("{name}.{layer}");
                let idx = m
                    .layers
                    .iter()
                    .position(|l| l.name == full)
                    .ok_or_else(|| QMapError::Params(format!("missing layer '{full}'")))?;
                if m.layers[idx].shape != shape {
                    return Err(QMapError::Params(format!("layer '{full}' has wrong shape")));
                }
                dst.clone_from(&params.payload[idx]);
            }
            nets.push(net);
        }
        let velocity = nets.iter().map(|n| ConvNet::zeros(n.channels)).collect();
        Ok(Self {
            heads,
            settings,
            nets,
            velocity,
        })
    }
}
