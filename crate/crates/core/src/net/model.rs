//! The full network: normal predictor, two feature encoders, two MLP heads.

use serde::{Deserialize, Serialize};

use crate::embed::{FeatureMap, EMBEDDING_DIM};
use crate::error::{Error, Result};
use crate::net::conv::{ConvCache, ConvLayer, ConvNet, Tensor};
use crate::net::mlp::{Mlp, MlpShape, OutputActivation};
use crate::net::params::{kaiming_init, Layout, ParameterSet};
use crate::net::real::Real;
use crate::raster::{MultiChannelImage, OrthoCamera};

/// Channels fed to every image network: `[rgb | normal, alpha]`.
pub const IMAGE_CHANNELS: usize = 4;

const NORMAL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Strided convolution stack.
    Conv,
    /// No parameters: input pixels tiled to `feature_dim` channels, stride 1.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub feature_dim: usize,
    pub encoder: EncoderKind,
    /// Hidden conv widths; the last layer outputs `feature_dim`.
    pub encoder_channels: Vec<usize>,
    pub encoder_strides: Vec<usize>,
    /// Hidden widths of the stride-1 normal predictor (outputs 3 channels).
    pub normal_channels: Vec<usize>,
    pub geometry_width: usize,
    pub geometry_layers: usize,
    pub geometry_skips: Vec<usize>,
    pub color_width: usize,
    pub color_layers: usize,
    pub color_skips: Vec<usize>,
    pub leaky_slope: f64,
    pub geometry_output_bias: f64,
    /// Feed the body embedding p to the heads (zeroed when false).
    pub use_body_embedding: bool,
    /// Geometry encoder sees predicted normals (else rgb).
    pub use_normal_guidance: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            feature_dim: 32,
            encoder: EncoderKind::Conv,
            encoder_channels: vec![16, 32, 32],
            encoder_strides: vec![1, 2, 1, 2],
            normal_channels: vec![16, 16],
            geometry_width: 512,
            geometry_layers: 5,
            geometry_skips: vec![3, 4, 5],
            color_width: 256,
            color_layers: 4,
            color_skips: vec![3, 4],
            leaky_slope: 0.01,
            geometry_output_bias: 0.1,
            use_body_embedding: true,
            use_normal_guidance: true,
        }
    }
}

impl NetworkConfig {
    /// Reduced widths for single-machine CPU experiments; same topology.
    pub fn desk() -> Self {
        NetworkConfig {
            feature_dim: 16,
            encoder_channels: vec![8, 16, 16],
            normal_channels: vec![8, 8],
            geometry_width: 64,
            color_width: 48,
            ..NetworkConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if self.encoder == EncoderKind::Conv {
            if self.encoder_strides.len() != self.encoder_channels.len() + 1 {
                return Err(Error::Config(format!(
                    "encoder has {} strides for {} layers",
                    self.encoder_strides.len(),
                    self.encoder_channels.len() + 1
                )));
            }
            if self.encoder_channels.contains(&0) || self.encoder_strides.contains(&0) {
                return Err(Error::Config("encoder widths and strides must be positive".into()));
            }
        }
        if self.normal_channels.contains(&0) {
            return Err(Error::Config("normal predictor widths must be positive".into()));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config("leaky_slope must be in (0, 1)".into()));
        }
        self.geometry_shape().validate()?;
        self.color_shape().validate()
    }

    pub fn mlp_input(&self) -> usize {
        2 * self.feature_dim + EMBEDDING_DIM
    }

    pub fn stride_product(&self) -> usize {
        match self.encoder {
            EncoderKind::Conv => self.encoder_strides.iter().product(),
            EncoderKind::Identity => 1,
        }
    }

    fn geometry_shape(&self) -> MlpShape {
        MlpShape {
            input: self.mlp_input(),
            width: self.geometry_width,
            layers: self.geometry_layers,
            skips: self.geometry_skips.clone(),
            output: 1,
        }
    }

    fn color_shape(&self) -> MlpShape {
        MlpShape {
            input: self.mlp_input(),
            width: self.color_width,
            layers: self.color_layers,
            skips: self.color_skips.clone(),
            output: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    Conv(ConvNet),
    Identity { dim: usize },
}

pub enum EncoderCache<T> {
    Conv(ConvCache<T>),
    Identity { h: usize, w: usize, c: usize },
}

impl Encoder {
    pub fn forward<T: Real>(&self, params: &[T], input: Tensor<T>) -> Result<(Tensor<T>, EncoderCache<T>)> {
        match self {
            Encoder::Conv(net) => {
                let cache = net.forward(params, input)?;
                Ok((cache.output().clone(), EncoderCache::Conv(cache)))
            }
            Encoder::Identity { dim } => {
                let (h, w, c) = (input.h, input.w, input.c);
                let mut out = Vec::with_capacity(h * w * dim);
                for px in input.data.chunks(c) {
                    out.extend((0..*dim).map(|k| px[k % c]));
                }
                Ok((Tensor::new(h, w, *dim, out)?, EncoderCache::Identity { h, w, c }))
            }
        }
    }

    pub fn backward<T: Real>(
        &self,
        params: &[T],
        cache: &EncoderCache<T>,
        dout: &[T],
        grad: &mut [T],
        want_input: bool,
    ) -> Option<Vec<T>> {
        match (self, cache) {
            (Encoder::Conv(net), EncoderCache::Conv(c)) => net.backward(params, c, dout, grad, want_input),
            (Encoder::Identity { dim }, EncoderCache::Identity { h, w, c }) => want_input.then(|| {
                let mut dx = vec![T::zero(); h * w * c];
                for (p, d) in dout.chunks(*dim).enumerate() {
                    for (k, &g) in d.iter().enumerate() {
                        dx[p * c + k % c] += g;
                    }
                }
                dx
            }),
            _ => panic!("encoder/cache mismatch"),
        }
    }
}

/// Normal-predictor output with what its backward pass needs.
pub struct NormalPrediction<T> {
    /// Unit normals, `h × w × 3`.
    pub normals: Tensor<T>,
    norms: Vec<T>,
    cache: ConvCache<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Geometry,
    Color,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: NetworkConfig,
    pub params: ParameterSet,
    pub normal_net: ConvNet,
    pub geo_encoder: Encoder,
    pub color_encoder: Encoder,
    pub geo_head: Mlp,
    pub color_head: Mlp,
}

pub const GROUP_NORMAL: &str = "normal.";
pub const GROUP_GEO_ENCODER: &str = "genc.";
pub const GROUP_COLOR_ENCODER: &str = "cenc.";
pub const GROUP_GEO_HEAD: &str = "ghead.";
pub const GROUP_COLOR_HEAD: &str = "chead.";

impl Model {
    /// Builds the architecture with zeroed parameters.
    pub fn architecture(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let slope = config.leaky_slope;
        let mut layout = Layout::default();

        let mut widths = vec![IMAGE_CHANNELS];
        widths.extend(&config.normal_channels);
        widths.push(3);
        let normal_layers = conv_layers(&widths, &vec![1; widths.len() - 1]);
        let normal_net = ConvNet::register(&mut layout, "normal", normal_layers, slope);

        let encoder = |layout: &mut Layout, prefix: &str| match config.encoder {
            EncoderKind::Conv => {
                let mut w = vec![IMAGE_CHANNELS];
                w.extend(&config.encoder_channels);
                w.push(config.feature_dim);
                Encoder::Conv(ConvNet::register(layout, prefix, conv_layers(&w, &config.encoder_strides), slope))
            }
            EncoderKind::Identity => Encoder::Identity {
                dim: config.feature_dim,
            },
        };
        let geo_encoder = encoder(&mut layout, "genc");
        let color_encoder = encoder(&mut layout, "cenc");
        let geo_head = Mlp::register(&mut layout, "ghead", config.geometry_shape(), OutputActivation::None, slope);
        let color_head = Mlp::register(&mut layout, "chead", config.color_shape(), OutputActivation::Logistic, slope);
        Ok(Model {
            config: config.clone(),
            params: ParameterSet::zeros(layout),
            normal_net,
            geo_encoder,
            color_encoder,
            geo_head,
            color_head,
        })
    }

    /// Kaiming-uniform weights, zero biases, geometry output bias set so the
    /// initial field is slightly positive (empty space).
    pub fn new(config: &NetworkConfig, seed: u64) -> Result<Self> {
        let mut m = Model::architecture(config)?;
        kaiming_init(&mut m.params, config.leaky_slope, seed);
        let r = m.geo_head.output_bias();
        m.params.data[r].fill(config.geometry_output_bias as f32);
        Ok(m)
    }

    pub fn encoder(&self, head: Head) -> &Encoder {
        match head {
            Head::Geometry => &self.geo_encoder,
            Head::Color => &self.color_encoder,
        }
    }

    pub fn head(&self, head: Head) -> &Mlp {
        match head {
            Head::Geometry => &self.geo_head,
            Head::Color => &self.color_head,
        }
    }

    pub fn group(&self, prefix: &str) -> std::ops::Range<usize> {
        self.params.layout.group(prefix)
    }

    pub fn predict_normals<T: Real>(&self, params: &[T], rgba: &Tensor<T>) -> Result<NormalPrediction<T>> {
        let cache = self.normal_net.forward(params, rgba.clone())?;
        let raw = cache.output();
        let eps = T::c(NORMAL_EPS);
        let mut norms = Vec::with_capacity(raw.h * raw.w);
        let mut data = Vec::with_capacity(raw.data.len());
        for z in raw.data.chunks(3) {
            let n = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2] + eps).sqrt();
            norms.push(n);
            data.extend(z.iter().map(|&v| v / n));
        }
        Ok(NormalPrediction {
            normals: Tensor::new(raw.h, raw.w, 3, data)?,
            norms,
            cache,
        })
    }

    /// Backward through per-pixel normalization and the predictor.
    pub fn normals_backward<T: Real>(&self, params: &[T], pred: &NormalPrediction<T>, dn: &[T], grad: &mut [T]) {
        let mut dz = Vec::with_capacity(dn.len());
        for ((y, d), &n) in pred.normals.data.chunks(3).zip(dn.chunks(3)).zip(&pred.norms) {
            let dot = y[0] * d[0] + y[1] * d[1] + y[2] * d[2];
            dz.extend((0..3).map(|k| (d[k] - y[k] * dot) / n));
        }
        self.normal_net.backward(params, &pred.cache, &dz, grad, false);
    }

    pub fn encode<T: Real>(
        &self,
        head: Head,
        params: &[T],
        input: Tensor<T>,
        camera: &OrthoCamera,
    ) -> Result<(FeatureMap<T>, EncoderCache<T>)> {
        let (out, cache) = self.encoder(head).forward(params, input)?;
        let fm = FeatureMap::new(
            out.h,
            out.w,
            out.c,
            out.data,
            camera.clone(),
            self.config.stride_product() as f64,
        )?;
        Ok((fm, cache))
    }
}

fn conv_layers(widths: &[usize], strides: &[usize]) -> Vec<ConvLayer> {
    let n = widths.len() - 1;
    (0..n)
        .map(|i| ConvLayer {
            cin: widths[i],
            cout: widths[i + 1],
            stride: strides[i],
            activate: i + 1 < n,
        })
        .collect()
}

/// `[rgb, alpha]` tensor of an image with `rgb` and `alpha` channels.
pub fn rgba_tensor<T: Real>(img: &MultiChannelImage) -> Result<Tensor<T>> {
    let rgb = img.require("rgb")?;
    let alpha = img.require("alpha")?;
    let mut data = Vec::with_capacity(img.pixels() * 4);
    for i in 0..img.pixels() {
        data.extend(rgb[i * 3..i * 3 + 3].iter().map(|&v| T::c(v as f64)));
        data.push(T::c(alpha[i] as f64));
    }
    Tensor::new(img.height(), img.width(), 4, data)
}

/// Geometry-encoder input `[n·α, α]` from unit normals and an rgba tensor.
pub fn guided_tensor<T: Real>(normals: &Tensor<T>, rgba: &Tensor<T>) -> Tensor<T> {
    let mut data = Vec::with_capacity(rgba.data.len());
    for (n, px) in normals.data.chunks(3).zip(rgba.data.chunks(4)) {
        let a = px[3];
        data.extend(n.iter().map(|&v| v * a));
        data.push(a);
    }
    Tensor {
        h: rgba.h,
        w: rgba.w,
        c: 4,
        data,
    }
}

/// Gradient of [`guided_tensor`] w.r.t. the normals.
pub fn guided_backward<T: Real>(dguided: &[T], rgba: &Tensor<T>) -> Vec<T> {
    let mut dn = Vec::with_capacity(rgba.h * rgba.w * 3);
    for (d, px) in dguided.chunks(4).zip(rgba.data.chunks(4)) {
        dn.extend(d[..3].iter().map(|&g| g * px[3]));
    }
    dn
}

/// Unit normals stored in an image's `normal` channel, as a tensor.
pub fn normal_tensor<T: Real>(img: &MultiChannelImage) -> Result<Tensor<T>> {
    let n = img.require("normal")?;
    Tensor::new(img.height(), img.width(), 3, n.iter().map(|&v| T::c(v as f64)).collect())
}
