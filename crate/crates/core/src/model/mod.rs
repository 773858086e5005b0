//! The parallel-then-fuse segmentation model at toy scale.
//!
//! A frozen convolutional encoder produces the image embedding. Route 1
//! passes it through R-SAMPC (training only); route 2 runs the T-visioner.
//! The routes are concatenated, mixed by a grouped dilated 3×3 convolution
//! and projected back to the embedding width. This dense prompt, together
//! with the box prompt, drives a two-stage upsampling decoder that emits a
//! single-channel logit map at image resolution.
//!
//! Gradients of the trainable head are derived by hand in [`Model::backward`].

mod loss;
mod optim;
mod params;
mod train;

pub use loss::{bce_iou_loss, LossOutput};
pub use optim::{Optimizer, OptimizerKind};
pub use params::ParamTable;
pub use train::{train_step, Batch, FrozenFeatures, TrainLog};

use crate::error::{config_err, shape_err, Error, Result};
use crate::params::{Gradients, NamedParam};
use crate::rng::Prng;
use crate::rsampc::{Mode, RsampcConfig, RsampcStack};
use crate::tensor::{
    conv2d, conv2d_backward, prng_fill, resize_bilinear, resize_bilinear_backward, ConvSpec, Init, Real, Tensor,
};
use crate::ttt::TttConfig;
use crate::tvm::{Subbands, TvmRoute};

/// Ablation variant: which route modules are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// Baseline, no route modules.
    M1,
    /// Baseline + R-SAMPC.
    M2,
    /// Baseline + R-SAMPC + T-visioner.
    M3,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::M1, Variant::M2, Variant::M3];

    pub fn has_rsampc(self) -> bool {
        self >= Variant::M2
    }

    pub fn has_tvm(self) -> bool {
        self == Variant::M3
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "M1" => Ok(Self::M1),
            "M2" => Ok(Self::M2),
            "M3" => Ok(Self::M3),
            _ => Err(config_err!("unknown variant {s:?} (expected M1, M2 or M3)")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Normalised box prompt `(x0, y0, x1, y1)`, `x` along columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxPrompt {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoxPrompt {
    pub const FULL: BoxPrompt = BoxPrompt { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 };

    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let b = Self { x0, y0, x1, y1 };
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(x0) && unit(y0) && unit(x1) && unit(y1) && x0 < x1 && y0 < y1) {
            return Err(config_err!("invalid box {b:?}"));
        }
        Ok(b)
    }

    /// Tight bounding box of the pixels `> 0.5` of a `rows × cols` plane.
    /// Returns `None` for an empty mask.
    pub fn from_mask<F: Real>(plane: &[F], rows: usize, cols: usize) -> Option<Self> {
        let half = F::from_f64(0.5);
        let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
        for (i, _) in plane.iter().enumerate().filter(|(_, &v)| v > half) {
            let (r, c) = (i / cols, i % cols);
            r0 = r0.min(r);
            r1 = r1.max(r);
            c0 = c0.min(c);
            c1 = c1.max(c);
        }
        (r0 != usize::MAX).then(|| Self {
            x0: c0 as f64 / cols as f64,
            y0: r0 as f64 / rows as f64,
            x1: (c1 + 1) as f64 / cols as f64,
            y1: (r1 + 1) as f64 / rows as f64,
        })
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    /// Indicator of the pixels whose centres fall inside the box.
    pub fn raster<F: Real>(&self, rows: usize, cols: usize) -> Vec<F> {
        let mut out = vec![F::zero(); rows * cols];
        for r in 0..rows {
            let y = (r as f64 + 0.5) / rows as f64;
            if y < self.y0 || y >= self.y1 {
                continue;
            }
            for c in 0..cols {
                let x = (c as f64 + 0.5) / cols as f64;
                if x >= self.x0 && x < self.x1 {
                    out[r * cols + c] = F::one();
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Square input side; must be a multiple of 8.
    pub image_size: usize,
    /// Embedding width C; must be a multiple of 4.
    pub channels: usize,
    pub rsampc_depth: usize,
    pub rsampc_scale: Option<f64>,
    pub ttt: TttConfig,
    pub subbands: Subbands,
    pub fusion_groups: usize,
    pub fusion_dilation: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(variant: Variant, image_size: usize, channels: usize) -> Self {
        Self {
            variant,
            image_size,
            channels,
            rsampc_depth: crate::rsampc::DEFAULT_DEPTH,
            rsampc_scale: None,
            ttt: TttConfig::new(channels),
            subbands: Subbands::Diagonal,
            fusion_groups: 4,
            fusion_dilation: 2,
            seed: 0,
        }
    }

    pub fn embed_size(&self) -> usize {
        self.image_size / 4
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || !self.image_size.is_multiple_of(8) {
            return Err(config_err!("image size {} must be a positive multiple of 8", self.image_size));
        }
        if self.channels == 0 || !self.channels.is_multiple_of(4) {
            return Err(config_err!("channels {} must be a positive multiple of 4", self.channels));
        }
        if self.ttt.dim != self.channels {
            return Err(config_err!("TTT dim {} differs from channels {}", self.ttt.dim, self.channels));
        }
        self.ttt.validate()?;
        self.fusion_spec().validate()?;
        self.rsampc_config().validate()
    }

    pub fn rsampc_config(&self) -> RsampcConfig {
        RsampcConfig {
            channels: self.channels,
            depth: self.rsampc_depth,
            channel_scale: self.rsampc_scale,
            seed: Prng::derive_seed(self.seed, "rsampc"),
        }
    }

    fn fusion_width(&self) -> usize {
        if self.variant.has_tvm() {
            2 * self.channels
        } else {
            self.channels
        }
    }

    fn fusion_spec(&self) -> ConvSpec {
        let w = self.fusion_width();
        ConvSpec::new(w, w, 3).groups(self.fusion_groups).dilation(self.fusion_dilation)
    }

    fn proj_spec(&self) -> ConvSpec {
        ConvSpec::new(self.fusion_width(), self.channels, 1)
    }

    fn encoder_specs(&self) -> [ConvSpec; 3] {
        let c = self.channels;
        [
            ConvSpec::new(3, c / 4, 3).stride(2),
            ConvSpec::new(c / 4, c / 2, 3).stride(2),
            ConvSpec::new(c / 2, c, 3),
        ]
    }

    fn dec1_spec(&self) -> ConvSpec {
        ConvSpec::new(self.channels, self.channels / 2, 3)
    }

    fn dec2_spec(&self) -> ConvSpec {
        ConvSpec::new(self.channels / 2, 1, 3)
    }
}

pub const GD_W: &str = "fusion.gd.weight";
pub const GD_B: &str = "fusion.gd.bias";
pub const PROJ_W: &str = "fusion.proj.weight";
pub const PROJ_B: &str = "fusion.proj.bias";
pub const DEC1_W: &str = "decoder.conv1.weight";
pub const DEC1_B: &str = "decoder.conv1.bias";
pub const BOX_GAIN: &str = "decoder.box_gain";
pub const BOX_PROJ: &str = "decoder.box_proj";
pub const DEC2_W: &str = "decoder.conv2.weight";
pub const DEC2_B: &str = "decoder.conv2.bias";

/// Intermediate activations of the trainable head, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct HeadTrace<F: Real> {
    pub route2: Option<Tensor<F>>,
    pub concat: Tensor<F>,
    pub mixed: Tensor<F>,
    pub fused: Tensor<F>,
    pub up1: Tensor<F>,
    pub pre1: Tensor<F>,
    pub up2: Tensor<F>,
    pub logits: Tensor<F>,
    box_maps: Vec<Vec<F>>,
    boxes: Vec<BoxPrompt>,
}

#[derive(Debug, Clone)]
pub struct Model<F: Real> {
    cfg: ModelConfig,
    encoder: ParamTable<F>,
    rsampc: Option<RsampcStack<F>>,
    tvm: Option<TvmRoute<F>>,
    head: ParamTable<F>,
}

impl<F: Real> Model<F> {
    /// Seeded initialisation. Frozen parts and the trainable head draw from
    /// independent streams derived from `cfg.seed`.
    pub fn init(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.seed;
        let kaiming = |name: &str, shape: &[usize]| prng_fill(shape, Prng::derive_seed(seed, name), Init::UniformKaiming);

        let mut encoder = ParamTable::new(true);
        for (i, spec) in cfg.encoder_specs().iter().enumerate() {
            let name = format!("encoder.conv{i}.weight");
            let w = kaiming(&name, &spec.weight_shape());
            encoder.push(name, w);
        }

        let rsampc = cfg.variant.has_rsampc().then(|| RsampcStack::init(cfg.rsampc_config())).transpose()?;
        let tvm = if cfg.variant.has_tvm() {
            let mut route = TvmRoute::init(cfg.ttt, Prng::derive_seed(seed, "tvm"))?;
            route.subbands = cfg.subbands;
            Some(route)
        } else {
            None
        };

        let (c, half) = (cfg.channels, cfg.channels / 2);
        let mut head = ParamTable::new(false);
        let gd = cfg.fusion_spec();
        head.push(GD_W, kaiming(GD_W, &gd.weight_shape()));
        head.push(GD_B, Tensor::zeros([gd.out_channels]));
        head.push(PROJ_W, kaiming(PROJ_W, &cfg.proj_spec().weight_shape()));
        head.push(PROJ_B, Tensor::zeros([c]));
        head.push(DEC1_W, kaiming(DEC1_W, &cfg.dec1_spec().weight_shape()));
        head.push(DEC1_B, Tensor::zeros([half]));
        head.push(BOX_GAIN, Tensor::zeros([half]));
        head.push(BOX_PROJ, Tensor::zeros([half, 4]));
        head.push(DEC2_W, kaiming(DEC2_W, &cfg.dec2_spec().weight_shape()));
        head.push(DEC2_B, Tensor::zeros([1]));

        Ok(Self { cfg, encoder, rsampc, tvm, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn variant(&self) -> Variant {
        self.cfg.variant
    }

    pub fn rsampc(&self) -> Option<&RsampcStack<F>> {
        self.rsampc.as_ref()
    }

    pub fn tvm(&self) -> Option<&TvmRoute<F>> {
        self.tvm.as_ref()
    }

    /// Every parameter in a fixed order: encoder, R-SAMPC, T-visioner, head.
    pub fn params(&self) -> Vec<NamedParam<'_, F>> {
        let mut out: Vec<_> = self.encoder.params().collect();
        if let Some(r) = &self.rsampc {
            out.extend(r.params());
        }
        if let Some(t) = &self.tvm {
            out.extend(t.params());
        }
        out.extend(self.head.params());
        out
    }

    pub fn frozen_params(&self) -> Vec<NamedParam<'_, F>> {
        self.params().into_iter().filter(|p| p.frozen).collect()
    }

    /// Mutable views of the trainable parameters.
    pub fn trainable_mut(&mut self) -> Vec<(&str, &mut Tensor<F>)> {
        let mut out = Vec::new();
        if let Some(t) = &mut self.tvm {
            out.push((crate::tvm::THETA_K, &mut t.proj.theta_k));
            out.push((crate::tvm::THETA_V, &mut t.proj.theta_v));
            out.push((crate::tvm::THETA_Q, &mut t.proj.theta_q));
        }
        out.extend(self.head.entries_mut());
        out
    }

    /// Overwrite a parameter by name; unknown names are an error.
    pub fn set_param(&mut self, name: &str, value: Tensor<F>) -> Result<()> {
        if self.encoder.set(name, value.clone())? || self.head.set(name, value.clone())? {
            return Ok(());
        }
        if let Some(r) = &mut self.rsampc {
            if r.set_param(name, value.clone())? {
                return Ok(());
            }
        }
        if let Some(slot) = self.tvm.as_mut().and_then(|t| t.param_mut(name)) {
            if slot.shape() != value.shape() {
                return Err(shape_err!("{name}: stored {:?}, model expects {:?}", value.shape(), slot.shape()));
            }
            *slot = value;
            return Ok(());
        }
        Err(config_err!("model has no parameter named {name:?}"))
    }

    pub fn head_param(&self, name: &str) -> &Tensor<F> {
        self.head.get(name)
    }

    /// Set the fusion to the pass-through map: the grouped convolution
    /// copies its input through the centre tap and the projection selects
    /// the route-1 channels, so the fused prompt equals route 1.
    pub fn set_passthrough_fusion(&mut self) {
        let spec = self.cfg.fusion_spec();
        let c = self.cfg.channels;
        let cin_g = spec.in_channels / spec.groups;
        let mut gd = Tensor::zeros(spec.weight_shape());
        for o in 0..spec.out_channels {
            // Centre tap of the 3×3 kernel connecting output o to input o.
            let local = o % cin_g;
            gd.data_mut()[(o * cin_g + local) * 9 + 4] = F::one();
        }
        let mut proj = Tensor::zeros(self.cfg.proj_spec().weight_shape());
        for o in 0..c {
            proj.data_mut()[o * spec.in_channels + o] = F::one();
        }
        for (name, value) in [
            (GD_W, gd),
            (GD_B, Tensor::zeros([spec.out_channels])),
            (PROJ_W, proj),
            (PROJ_B, Tensor::zeros([c])),
        ] {
            self.head.set(name, value).expect("fusion shapes are fixed by the config");
        }
    }

    fn check_image(&self, image: &Tensor<F>) -> Result<usize> {
        let (b, c, r, w) = image.dims4()?;
        let s = self.cfg.image_size;
        if c != 3 || r != s || w != s {
            return Err(shape_err!("model expects [B, 3, {s}, {s}] images, got {:?}", image.shape()));
        }
        Ok(b)
    }

    /// Frozen encoder: images in `[0, 1]` are mapped to `[-1, 1]`, then
    /// three conv + ReLU stages produce `[B, C, S/4, S/4]`.
    pub fn embed(&self, image: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_image(image)?;
        let (half, two) = (F::from_f64(0.5), F::from_f64(2.0));
        let mut x = image.map(|v| (v.max(F::zero()).min(F::one()) - half) * two);
        for (i, spec) in self.cfg.encoder_specs().iter().enumerate() {
            x = conv2d(&x, self.encoder.get(&format!("encoder.conv{i}.weight")), None, spec)?.relu();
        }
        Ok(x)
    }

    /// Route 1: R-SAMPC on the embedding (identity for M1 or at inference).
    pub fn route1(&self, em: &Tensor<F>, mode: Mode) -> Result<Tensor<F>> {
        match &self.rsampc {
            Some(stack) => stack.apply(em, mode),
            None => Ok(em.clone()),
        }
    }

    fn check_embedding(&self, em: &Tensor<F>) -> Result<usize> {
        let (b, c, r, w) = em.dims4()?;
        let e = self.cfg.embed_size();
        if c != self.cfg.channels || r != e || w != e {
            return Err(shape_err!(
                "embedding {:?}, expected [B, {}, {e}, {e}]",
                em.shape(),
                self.cfg.channels
            ));
        }
        Ok(b)
    }

    /// Hybrid prompt from route 1 and, for M3, route 2. Returns the channel
    /// concatenation, the mixed prompt and the projected prompt `[B, C, e, e]`.
    pub fn fuse(&self, route1: &Tensor<F>, route2: Option<&Tensor<F>>) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
        self.check_embedding(route1)?;
        let concat = match (route2, self.tvm.is_some()) {
            (Some(r2), true) => {
                route1.expect_same_shape(r2)?;
                Tensor::concat_channels(&[route1, r2])?
            }
            (None, false) => route1.clone(),
            (Some(_), false) => return Err(shape_err!("route 2 given to a {} model", self.cfg.variant)),
            (None, true) => return Err(shape_err!("route 2 missing for a {} model", self.cfg.variant)),
        };
        let (cfg, h) = (&self.cfg, &self.head);
        let mixed = conv2d(&concat, h.get(GD_W), Some(h.get(GD_B)), &cfg.fusion_spec())?;
        let fused = conv2d(&mixed, h.get(PROJ_W), Some(h.get(PROJ_B)), &cfg.proj_spec())?;
        Ok((concat, mixed, fused))
    }

    /// Fusion and decoder given the embedding and a precomputed route 1.
    pub fn head(&self, em: &Tensor<F>, route1: &Tensor<F>, boxes: &[BoxPrompt]) -> Result<HeadTrace<F>> {
        let b = self.check_embedding(em)?;
        em.expect_same_shape(route1)?;
        if boxes.len() != b {
            return Err(shape_err!("{} boxes for a batch of {b}", boxes.len()));
        }
        let cfg = &self.cfg;
        let route2 = self.tvm.as_ref().map(|t| t.apply(em)).transpose()?;
        let (concat, mixed, fused) = self.fuse(route1, route2.as_ref())?;
        let h = &self.head;

        let (s, s2) = (cfg.image_size, cfg.image_size / 2);
        let up1 = resize_bilinear(&fused, (s2, s2))?;
        let mut pre1 = conv2d(&up1, h.get(DEC1_W), Some(h.get(DEC1_B)), &cfg.dec1_spec())?;
        let box_maps: Vec<Vec<F>> = boxes.iter().map(|bx| bx.raster(s2, s2)).collect();
        let (gain, proj) = (h.get(BOX_GAIN).data(), h.get(BOX_PROJ).data());
        for (bi, (bx, map)) in boxes.iter().zip(&box_maps).enumerate() {
            let coords = bx.coords().map(F::from_f64);
            for ci in 0..cfg.channels / 2 {
                let shift = (0..4).fold(F::zero(), |acc, j| acc + proj[ci * 4 + j] * coords[j]);
                for (v, &m) in pre1.plane_mut(bi, ci).iter_mut().zip(map) {
                    *v += gain[ci] * m + shift;
                }
            }
        }
        let up2 = resize_bilinear(&pre1.relu(), (s, s))?;
        let logits = conv2d(&up2, h.get(DEC2_W), Some(h.get(DEC2_B)), &cfg.dec2_spec())?;
        logits.ensure_finite("logits")?;
        Ok(HeadTrace {
            route2,
            concat,
            mixed,
            fused,
            up1,
            pre1,
            up2,
            logits,
            box_maps,
            boxes: boxes.to_vec(),
        })
    }

    pub fn forward_from_embedding(&self, em: &Tensor<F>, boxes: &[BoxPrompt], mode: Mode) -> Result<Tensor<F>> {
        let r1 = self.route1(em, mode)?;
        Ok(self.head(em, &r1, boxes)?.logits)
    }

    /// Mask logits `[B, 1, S, S]` for images `[B, 3, S, S]` in `[0, 1]`.
    pub fn forward(&self, image: &Tensor<F>, boxes: &[BoxPrompt], mode: Mode) -> Result<Tensor<F>> {
        let em = self.embed(image)?;
        self.forward_from_embedding(&em, boxes, mode)
    }

    /// Gradients of every trainable parameter given `dL/d logits`.
    pub fn backward(&self, em: &Tensor<F>, trace: &HeadTrace<F>, grad_logits: &Tensor<F>) -> Result<Gradients<F>> {
        trace.logits.expect_same_shape(grad_logits)?;
        let cfg = &self.cfg;
        let h = &self.head;
        let mut grads = Gradients::new();

        let g2 = conv2d_backward(&trace.up2, h.get(DEC2_W), grad_logits, &cfg.dec2_spec(), true)?;
        grads.insert(DEC2_W.into(), g2.weight);
        grads.insert(DEC2_B.into(), g2.bias);
        let s2 = cfg.image_size / 2;
        let mut d_pre1 = resize_bilinear_backward(&g2.input.expect("requested"), (s2, s2))?;
        for (d, &p) in d_pre1.data_mut().iter_mut().zip(trace.pre1.data()) {
            if p <= F::zero() {
                *d = F::zero();
            }
        }

        let half = cfg.channels / 2;
        let mut d_gain = Tensor::zeros([half]);
        let mut d_boxproj = Tensor::zeros([half, 4]);
        for (bi, (bx, map)) in trace.boxes.iter().zip(&trace.box_maps).enumerate() {
            let coords = bx.coords().map(F::from_f64);
            for ci in 0..half {
                let plane = d_pre1.plane(bi, ci);
                let total: F = plane.iter().copied().sum();
                d_gain.data_mut()[ci] += plane.iter().zip(map).map(|(&d, &m)| d * m).sum::<F>();
                for (d, &x) in d_boxproj.data_mut()[ci * 4..ci * 4 + 4].iter_mut().zip(&coords) {
                    *d += total * x;
                }
            }
        }
        grads.insert(BOX_GAIN.into(), d_gain);
        grads.insert(BOX_PROJ.into(), d_boxproj);

        let g1 = conv2d_backward(&trace.up1, h.get(DEC1_W), &d_pre1, &cfg.dec1_spec(), true)?;
        grads.insert(DEC1_W.into(), g1.weight);
        grads.insert(DEC1_B.into(), g1.bias);
        let e = cfg.embed_size();
        let d_fused = resize_bilinear_backward(&g1.input.expect("requested"), (e, e))?;

        let gp = conv2d_backward(&trace.mixed, h.get(PROJ_W), &d_fused, &cfg.proj_spec(), true)?;
        grads.insert(PROJ_W.into(), gp.weight);
        grads.insert(PROJ_B.into(), gp.bias);
        let want_concat = self.tvm.is_some();
        let gd = conv2d_backward(
            &trace.concat,
            h.get(GD_W),
            &gp.input.expect("requested"),
            &cfg.fusion_spec(),
            want_concat,
        )?;
        grads.insert(GD_W.into(), gd.weight);
        grads.insert(GD_B.into(), gd.bias);

        if let (Some(tvm), Some(d_concat)) = (&self.tvm, gd.input) {
            let c = cfg.channels;
            let parts = d_concat.split_channels(&[c, c])?;
            let tg = tvm.backward(em, &parts[1])?;
            grads.insert(crate::tvm::THETA_K.into(), tg.theta_k);
            grads.insert(crate::tvm::THETA_V.into(), tg.theta_v);
            grads.insert(crate::tvm::THETA_Q.into(), tg.theta_q);
        }
        for (name, g) in &grads {
            g.ensure_finite(name)?;
        }
        Ok(grads)
    }
}
