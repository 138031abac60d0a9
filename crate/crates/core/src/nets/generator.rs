//! Encoder-decoder generator with skip concatenation.
//!
//! A full-resolution stem is followed by stride-2 encoder stages. Each decoder
//! stage upsamples by nearest neighbour, concatenates the encoder feature of
//! matching resolution and applies a 3x3 convolution. A 3x3 head and a sigmoid
//! produce a one-channel probability map of the input's size.

use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::layers::{self, Cursor, Init, LEAKY_SLOPE};
use super::params::{spec_hash, ParamSet};
use super::tensor::{ConvGeom, Tensor};
use super::Network;
use crate::classical::reflect;
use crate::error::{Error, Result};
use crate::raster::RasterImage;

const SAME: ConvGeom = ConvGeom { stride: 1, pad: 1 };
const DOWN: ConvGeom = ConvGeom { stride: 2, pad: 1 };

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub in_channels: usize,
    /// Width of the full-resolution stem, which is also the last decoder width.
    pub stem_width: usize,
    /// Encoder widths, one stride-2 stage each. The decoder mirrors them.
    pub stages: Vec<usize>,
    /// Instance normalization after every hidden convolution. Without it those
    /// convolutions carry a bias instead.
    pub instance_norm: bool,
}

impl GeneratorSpec {
    /// The compact desk-scale backbone for `in_channels` inputs.
    pub fn compact(in_channels: usize) -> Self {
        Self { in_channels, stem_width: 16, stages: vec![16, 32, 64, 128], instance_norm: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.stem_width == 0 {
            return Err(Error::invalid("generator channel counts must be positive"));
        }
        if self.stages.is_empty() || self.stages.contains(&0) {
            return Err(Error::invalid("generator needs at least one stage of positive width"));
        }
        Ok(())
    }

    /// Input sides must be multiples of this; [`Generator::predict`] pads to it.
    pub fn side_multiple(&self) -> usize {
        1 << self.stages.len()
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.stem_width];
        w.extend(&self.stages);
        w
    }
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self::compact(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    spec: GeneratorSpec,
    params: ParamSet,
}

impl Generator {
    pub fn new(spec: GeneratorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut init = Init::new(ParamSet::new(&spec, seed));
        let norm = spec.instance_norm;
        let widths = spec.widths();
        let block = |init: &mut Init, name: &str, cin: usize, cout: usize| {
            init.conv(name, cin, cout, 3, !norm);
            if norm {
                init.norm(&format!("{name}.norm"), cout);
            }
        };
        block(&mut init, "stem", spec.in_channels, widths[0]);
        for i in 1..widths.len() {
            block(&mut init, &format!("enc{i}"), widths[i - 1], widths[i]);
        }
        for i in (1..widths.len()).rev() {
            block(&mut init, &format!("dec{i}"), widths[i] + widths[i - 1], widths[i - 1]);
        }
        init.conv("head", widths[0], 1, 3, true);
        Ok(Self { spec, params: init.set })
    }

    /// Wraps loaded parameters, checking they were built for `spec`.
    pub fn from_params(spec: GeneratorSpec, params: ParamSet) -> Result<Self> {
        spec.validate()?;
        params.check_hash(&spec_hash(&spec))?;
        let fresh = Self::new(spec.clone(), params.seed())?;
        if fresh.params.names() != params.names()
            || fresh.params.tensors().iter().zip(params.tensors()).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::invalid("parameter layout does not match the generator spec"));
        }
        Ok(Self { spec, params })
    }

    /// Loads a generator whose spec is taken from the file header.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let params = ParamSet::load(path)?;
        let spec: GeneratorSpec = serde_json::from_value(params.spec_json().clone())?;
        Self::from_params(spec, params)
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// Records the forward pass on `g`. `params` are this network's bound parameters.
    pub fn forward(&self, g: &mut Graph, params: &[Var], x: Var) -> Result<Var> {
        let [_, c, h, w] = g.shape(x);
        if c != self.spec.in_channels {
            return Err(Error::ChannelMismatch { expected: self.spec.in_channels, actual: c });
        }
        let m = self.spec.side_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(Error::invalid(format!("generator input {w}x{h} is not a multiple of {m}")));
        }
        let mut p = Cursor::new(params);
        let norm = self.spec.instance_norm;
        let block = |g: &mut Graph, p: &mut Cursor, x: Var, geom: ConvGeom, leaky: bool| {
            let y = layers::conv(g, p, x, geom, !norm);
            let y = if norm { layers::instance_norm(g, p, y) } else { y };
            g.leaky_relu(y, if leaky { LEAKY_SLOPE } else { 0.0 })
        };
        let mut skips = vec![block(g, &mut p, x, SAME, true)];
        for _ in &self.spec.stages {
            let prev = *skips.last().expect("stem");
            skips.push(block(g, &mut p, prev, DOWN, true));
        }
        let mut h = skips.pop().expect("deepest stage");
        while let Some(skip) = skips.pop() {
            let up = g.upsample2(h);
            let cat = g.concat(up, skip);
            h = block(g, &mut p, cat, SAME, false);
        }
        let logits = layers::conv(g, &mut p, h, SAME, true);
        debug_assert!(p.finished());
        Ok(g.sigmoid(logits))
    }

    /// Probability maps for a `[N, C, H, W]` batch of any size. Inputs are
    /// reflect-padded to the stage multiple and the output cropped back.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let [n, c, h, w] = x.shape();
        if c != self.spec.in_channels {
            return Err(Error::ChannelMismatch { expected: self.spec.in_channels, actual: c });
        }
        let m = self.spec.side_multiple();
        let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
        let padded = if (ph, pw) == (h, w) { x.clone() } else { reflect_pad(x, ph, pw) };
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let input = g.leaf(padded);
        let y = self.forward(&mut g, &vars, input)?;
        let out = g.value(y);
        if (ph, pw) == (h, w) {
            return Ok(out.clone());
        }
        let mut data = Vec::with_capacity(n * h * w);
        for plane in out.data().chunks_exact(ph * pw) {
            for row in plane.chunks_exact(pw).take(h) {
                data.extend_from_slice(&row[..w]);
            }
        }
        Tensor::from_vec([n, 1, h, w], data)
    }

    /// Probability map of one image, same width and height.
    pub fn predict_image(&self, img: &RasterImage) -> Result<RasterImage> {
        self.predict(&Tensor::from_raster(img))?.to_raster(0)
    }
}

impl Network for Generator {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

fn reflect_pad(x: &Tensor, ph: usize, pw: usize) -> Tensor {
    let [n, c, h, w] = x.shape();
    let mut data = Vec::with_capacity(n * c * ph * pw);
    for plane in x.data().chunks_exact(h * w) {
        for y in 0..ph {
            let row = &plane[reflect(y as isize, h) * w..][..w];
            data.extend((0..pw).map(|xx| row[reflect(xx as isize, w)]));
        }
    }
    Tensor::from_vec([n, c, ph, pw], data).expect("padded shape")
}
