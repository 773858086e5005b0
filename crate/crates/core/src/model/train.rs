use super::{bce_iou_loss, BoxPrompt, LossOutput, Model, Optimizer};
use crate::error::{shape_err, Error, Result};
use crate::params::Gradients;
use crate::rsampc::Mode;
use crate::tensor::{Real, Tensor};

/// Images `[B, 3, S, S]`, masks `[B, 1, S, S]` and one box per sample.
#[derive(Debug, Clone)]
pub struct Batch<F: Real> {
    pub images: Tensor<F>,
    pub masks: Tensor<F>,
    pub boxes: Vec<BoxPrompt>,
}

impl<F: Real> Batch<F> {
    /// Boxes are derived from the masks; an empty mask gets the full frame.
    pub fn new(images: Tensor<F>, masks: Tensor<F>) -> Result<Self> {
        let (b, _, r, c) = images.dims4()?;
        let (mb, mc, mr, mw) = masks.dims4()?;
        if (mb, mc, mr, mw) != (b, 1, r, c) {
            return Err(shape_err!("masks {:?} for images {:?}", masks.shape(), images.shape()));
        }
        let boxes = (0..b)
            .map(|i| BoxPrompt::from_mask(masks.plane(i, 0), r, c).unwrap_or(BoxPrompt::FULL))
            .collect();
        Ok(Self { images, masks, boxes })
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// Outputs of the frozen part of the graph for one batch. They depend only
/// on the images, so a trainer may compute them once and reuse them.
#[derive(Debug, Clone)]
pub struct FrozenFeatures<F: Real> {
    pub embedding: Tensor<F>,
    pub route1: Tensor<F>,
}

impl<F: Real> FrozenFeatures<F> {
    pub fn compute(model: &Model<F>, images: &Tensor<F>, mode: Mode) -> Result<Self> {
        let embedding = model.embed(images)?;
        let route1 = model.route1(&embedding, mode)?;
        Ok(Self { embedding, route1 })
    }

    pub fn concat(parts: &[&Self]) -> Result<Self> {
        let em: Vec<_> = parts.iter().map(|p| &p.embedding).collect();
        let r1: Vec<_> = parts.iter().map(|p| &p.route1).collect();
        Ok(Self {
            embedding: Tensor::concat_batch(&em)?,
            route1: Tensor::concat_batch(&r1)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLog {
    pub step: usize,
    pub loss: f64,
    pub bce: f64,
    pub iou: f64,
}

impl<F: Real> Model<F> {
    /// Training-mode loss and gradients from precomputed frozen features.
    pub fn loss_and_grads(
        &self,
        feats: &FrozenFeatures<F>,
        masks: &Tensor<F>,
        boxes: &[BoxPrompt],
    ) -> Result<(LossOutput<F>, Gradients<F>)> {
        let trace = self.head(&feats.embedding, &feats.route1, boxes)?;
        let out = bce_iou_loss(&trace.logits, masks)?;
        if !out.loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss is {} (bce {}, iou {})",
                out.loss, out.bce, out.iou
            )));
        }
        let grads = self.backward(&feats.embedding, &trace, &out.grad)?;
        Ok((out, grads))
    }

    /// One optimiser step on the trainable parameters from frozen features.
    pub fn step_frozen(
        &mut self,
        feats: &FrozenFeatures<F>,
        masks: &Tensor<F>,
        boxes: &[BoxPrompt],
        opt: &mut Optimizer,
    ) -> Result<LossOutput<F>> {
        let (out, grads) = self.loss_and_grads(feats, masks, boxes)?;
        opt.step(self.trainable_mut(), &grads)?;
        Ok(out)
    }
}

/// One full training step: frozen forward in training mode, loss, manual
/// backward and an optimiser update. Returns the pre-update loss.
pub fn train_step<F: Real>(model: &mut Model<F>, batch: &Batch<F>, opt: &mut Optimizer) -> Result<F> {
    let feats = FrozenFeatures::compute(model, &batch.images, Mode::Train)?;
    Ok(model.step_frozen(&feats, &batch.masks, &batch.boxes, opt)?.loss)
}
