//! Channel-ablation probes: how much an aggregate metric drops when one
//! embedding channel is zeroed, and how those drops move between models.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{config_err, shape_err, Error, Result};
use crate::harness::dataset::{generate_sample, image_to_tensor, mask_to_tensor, DatasetConfig, Split};
use crate::metrics::{self, MaskPair, MetricReport, S_ALPHA};
use crate::model::{BoxPrompt, Model};
use crate::rsampc::Mode;
use crate::tensor::{Real, Tensor};

/// Images in the default probe set.
pub const PROBE_SIZE: usize = 32;

// Images decoded together; bounds the decoder's working memory.
const CHUNK: usize = 4;

/// Relative gains are undefined when the base delta is below this magnitude.
pub const RELATIVE_GUARD: f64 = 1e-12;

/// Anything with an embedding stage and a decoder that reads it.
pub trait ChannelModel<F: Real>: Sync {
    /// `[B, C, h, w]` features for images `[B, 3, S, S]`.
    fn embed(&self, images: &Tensor<F>) -> Result<Tensor<F>>;
    /// Mask logits `[B, 1, S, S]`.
    fn decode(&self, em: &Tensor<F>, boxes: &[BoxPrompt]) -> Result<Tensor<F>>;
}

impl<F: Real> ChannelModel<F> for Model<F> {
    fn embed(&self, images: &Tensor<F>) -> Result<Tensor<F>> {
        Model::embed(self, images)
    }

    fn decode(&self, em: &Tensor<F>, boxes: &[BoxPrompt]) -> Result<Tensor<F>> {
        self.forward_from_embedding(em, boxes, Mode::Infer)
    }
}

/// Metric averaged over the probe set. Higher is better for every choice
/// except `Mae`, whose deltas therefore carry the opposite sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbeMetric {
    #[default]
    SAlpha,
    FBetaW,
    EPhiMean,
    EPhiMax,
    FMean,
    Mae,
}

impl ProbeMetric {
    pub fn score(self, pair: &MaskPair) -> f64 {
        match self {
            ProbeMetric::SAlpha => metrics::s_measure(pair, S_ALPHA),
            ProbeMetric::FBetaW => metrics::weighted_fbeta(pair),
            ProbeMetric::EPhiMean => metrics::e_measure(pair).0,
            ProbeMetric::EPhiMax => metrics::e_measure(pair).1,
            ProbeMetric::FMean => metrics::f_mean(pair),
            ProbeMetric::Mae => metrics::mae(pair),
        }
    }

    fn column(self) -> &'static str {
        let i = self as usize;
        MetricReport::COLUMNS[i]
    }
}

impl fmt::Display for ProbeMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

impl FromStr for ProbeMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use ProbeMetric::*;
        [SAlpha, FBetaW, EPhiMean, EPhiMax, FMean, Mae]
            .into_iter()
            .find(|m| m.column() == s)
            .ok_or_else(|| config_err!("unknown probe metric {s:?} (expected one of {:?})", MetricReport::COLUMNS))
    }
}

/// Fixed images, binary masks and the box prompts derived from them.
#[derive(Debug, Clone)]
pub struct ProbeSet<F: Real> {
    images: Vec<Tensor<F>>,
    masks: Vec<Tensor<F>>,
    boxes: Vec<BoxPrompt>,
}

impl<F: Real> ProbeSet<F> {
    /// Items are `[1, 3, S, S]` images with `[1, 1, S, S]` masks.
    pub fn new(images: Vec<Tensor<F>>, masks: Vec<Tensor<F>>) -> Result<Self> {
        if images.is_empty() || images.len() != masks.len() {
            return Err(shape_err!("{} images with {} masks", images.len(), masks.len()));
        }
        let mut boxes = Vec::with_capacity(masks.len());
        for (img, mask) in images.iter().zip(&masks) {
            let (b, _, r, c) = img.dims4()?;
            if b != 1 || mask.shape() != [1, 1, r, c] {
                return Err(shape_err!("probe item {:?} with mask {:?}", img.shape(), mask.shape()));
            }
            boxes.push(BoxPrompt::from_mask(mask.data(), r, c).unwrap_or(BoxPrompt::FULL));
        }
        Ok(Self { images, masks, boxes })
    }

    /// `count` synthetic samples drawn from the probe stream of `cfg.seed`.
    pub fn synthetic(cfg: &DatasetConfig, count: usize) -> Result<Self> {
        let samples = (0..count)
            .into_par_iter()
            .map(|i| {
                let s = generate_sample(cfg, Split::Probe, i)?;
                Ok((image_to_tensor(&s.image)?.cast(), mask_to_tensor(&s.mask)?.cast()))
            })
            .collect::<Result<Vec<_>>>()?;
        let (images, masks) = samples.into_iter().unzip();
        Self::new(images, masks)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelDelta {
    pub channel: usize,
    /// Metric of the intact model minus metric with the channel zeroed.
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelClass {
    Advantageous,
    Adverse,
    Neutral,
}

impl ChannelDelta {
    pub fn class(&self) -> ChannelClass {
        if self.delta > 0.0 {
            ChannelClass::Advantageous
        } else if self.delta < 0.0 {
            ChannelClass::Adverse
        } else {
            ChannelClass::Neutral
        }
    }
}

struct Chunk<F: Real> {
    em: Tensor<F>,
    boxes: Vec<BoxPrompt>,
    gts: Vec<Vec<bool>>,
}

struct Embedded<F: Real> {
    chunks: Vec<Chunk<F>>,
    channels: usize,
}

fn embed_probe<F: Real, M: ChannelModel<F>>(model: &M, probe: &ProbeSet<F>) -> Result<Embedded<F>> {
    let mut chunks = Vec::new();
    let mut channels = 0;
    for start in (0..probe.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(probe.len());
        let imgs: Vec<&Tensor<F>> = probe.images[start..end].iter().collect();
        let em = model.embed(&Tensor::concat_batch(&imgs)?)?;
        channels = em.dims4()?.1;
        let gts = probe.masks[start..end]
            .iter()
            .map(|m| m.data().iter().map(|&v| v.as_f64() > 0.5).collect())
            .collect();
        chunks.push(Chunk { em, boxes: probe.boxes[start..end].to_vec(), gts });
    }
    Ok(Embedded { chunks, channels })
}

fn mean_score<F: Real, M: ChannelModel<F>>(
    model: &M,
    emb: &Embedded<F>,
    zeroed: Option<usize>,
    metric: ProbeMetric,
) -> Result<f64> {
    let mut scores = Vec::new();
    for Chunk { em, boxes, gts } in &emb.chunks {
        let logits = match zeroed {
            Some(c) => {
                let mut em = em.clone();
                for b in 0..boxes.len() {
                    em.plane_mut(b, c).fill(F::zero());
                }
                model.decode(&em, boxes)?
            }
            None => model.decode(em, boxes)?,
        };
        let (_, _, r, w) = logits.dims4()?;
        for (b, gt) in gts.iter().enumerate() {
            let pred = logits.plane(b, 0).iter().map(|&z| 1.0 / (1.0 + (-z.as_f64()).exp())).collect();
            scores.push(metric.score(&MaskPair::new(r, w, pred, gt.clone())?));
        }
    }
    Ok(metrics::sorted_sum(&mut scores) / scores.len() as f64)
}

/// For each channel, `metric(intact) − metric(channel zeroed)` averaged over
/// the probe set. Channels are evaluated in parallel and returned in the
/// order given.
pub fn channel_ablation<F: Real, M: ChannelModel<F>>(
    model: &M,
    probe: &ProbeSet<F>,
    channels: &[usize],
    metric: ProbeMetric,
) -> Result<Vec<ChannelDelta>> {
    let emb = embed_probe(model, probe)?;
    if let Some(&bad) = channels.iter().find(|&&c| c >= emb.channels) {
        return Err(Error::Index { index: bad, len: emb.channels });
    }
    let base = mean_score(model, &emb, None, metric)?;
    channels
        .par_iter()
        .map(|&c| {
            let delta = base - mean_score(model, &emb, Some(c), metric)?;
            if !delta.is_finite() {
                return Err(Error::NonFinite(format!("delta of channel {c}")));
            }
            Ok(ChannelDelta { channel: c, delta })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainRow {
    pub channel: usize,
    pub base: f64,
    pub variant: f64,
    pub gain: f64,
    /// `100 · gain / |base|`, `None` when `|base| < 1e-12`.
    pub relative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    pub rows: Vec<GainRow>,
}

fn sorted(deltas: &[ChannelDelta]) -> Vec<ChannelDelta> {
    let mut v = deltas.to_vec();
    v.sort_by_key(|d| d.channel);
    v
}

fn paired(base: &[ChannelDelta], variant: &[ChannelDelta]) -> Result<Vec<(ChannelDelta, ChannelDelta)>> {
    let (b, v) = (sorted(base), sorted(variant));
    let same = b.len() == v.len() && b.iter().zip(&v).all(|(x, y)| x.channel == y.channel);
    let unique = b.windows(2).all(|w| w[0].channel != w[1].channel);
    if !same || !unique {
        let ids = |d: &[ChannelDelta]| d.iter().map(|x| x.channel).collect::<Vec<_>>();
        return Err(config_err!("channel sets differ or repeat: {:?} vs {:?}", ids(&b), ids(&v)));
    }
    Ok(b.into_iter().zip(v).collect())
}

/// Per-channel `variant − base` and the gain relative to `|base|`, sorted by
/// channel.
pub fn gain_table(base: &[ChannelDelta], variant: &[ChannelDelta]) -> Result<GainTable> {
    let rows = paired(base, variant)?
        .into_iter()
        .map(|(b, v)| {
            let gain = v.delta - b.delta;
            GainRow {
                channel: b.channel,
                base: b.delta,
                variant: v.delta,
                gain,
                relative: (b.delta.abs() >= RELATIVE_GUARD).then(|| 100.0 * gain / b.delta.abs()),
            }
        })
        .collect();
    Ok(GainTable { rows })
}

fn mean_or_zero(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    metrics::sorted_sum(&mut v) / n
}

/// Mean delta over advantageous channels minus mean delta over adverse
/// channels, with the classes fixed by `classes` (an empty class contributes 0).
pub fn spread(deltas: &[ChannelDelta], classes: &[ChannelDelta]) -> Result<f64> {
    let pairs = paired(classes, deltas)?;
    let of = |want: ChannelClass| mean_or_zero(pairs.iter().filter(|(c, _)| c.class() == want).map(|(_, d)| d.delta));
    Ok(of(ChannelClass::Advantageous) - of(ChannelClass::Adverse))
}

/// Gains and effect distance of `variant` against `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectDistanceReport {
    pub base: Vec<ChannelDelta>,
    pub variant: Vec<ChannelDelta>,
    pub gains: GainTable,
    pub base_spread: f64,
    pub variant_spread: f64,
    /// `variant_spread − base_spread`, both classified by the base deltas.
    pub effect_distance: f64,
}

pub fn effect_distance(base: &[ChannelDelta], variant: &[ChannelDelta]) -> Result<EffectDistanceReport> {
    let gains = gain_table(base, variant)?;
    let base_spread = spread(base, base)?;
    let variant_spread = spread(variant, base)?;
    Ok(EffectDistanceReport {
        base: sorted(base),
        variant: sorted(variant),
        gains,
        base_spread,
        variant_spread,
        effect_distance: variant_spread - base_spread,
    })
}

/// `channel,delta` CSV with a header line.
pub fn deltas_to_csv(deltas: &[ChannelDelta]) -> String {
    let mut out = String::from("channel,delta\n");
    for d in deltas {
        writeln!(out, "{},{:e}", d.channel, d.delta).expect("writing to a String");
    }
    out
}

/// Parse a `channel,delta` CSV. Errors name the 1-based line.
pub fn deltas_from_csv(text: &str) -> Result<Vec<ChannelDelta>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "channel,delta" => {}
        Some((i, h)) => {
            return Err(Error::Parse { line: i + 1, msg: format!("expected header channel,delta, got {h:?}") });
        }
        None => return Err(Error::Parse { line: 1, msg: "empty deltas file".into() }),
    }
    lines
        .map(|(i, l)| {
            let bad = |msg: String| Error::Parse { line: i + 1, msg };
            let (c, d) = l.split_once(',').ok_or_else(|| bad(format!("expected 2 fields in {l:?}")))?;
            let channel = c.trim().parse().map_err(|e| bad(format!("channel {c:?}: {e}")))?;
            let delta: f64 = d.trim().parse().map_err(|e| bad(format!("delta {d:?}: {e}")))?;
            if !delta.is_finite() {
                return Err(bad(format!("non-finite delta {d:?}")));
            }
            Ok(ChannelDelta { channel, delta })
        })
        .collect()
}

/// Table layout: one column per channel, rows `base`, `variant`, `gain` and
/// `relative_gain_pct` (`undefined` where the base is ~0).
pub fn gain_table_to_csv(table: &GainTable) -> String {
    let mut out = String::from("row");
    for r in &table.rows {
        write!(out, ",{}", r.channel).expect("writing to a String");
    }
    out.push('\n');
    let line = |out: &mut String, name: &str, f: &dyn Fn(&GainRow) -> String| {
        out.push_str(name);
        for r in &table.rows {
            out.push(',');
            out.push_str(&f(r));
        }
        out.push('\n');
    };
    line(&mut out, "base", &|r| format!("{:e}", r.base));
    line(&mut out, "variant", &|r| format!("{:e}", r.variant));
    line(&mut out, "gain", &|r| format!("{:e}", r.gain));
    line(&mut out, "relative_gain_pct", &|r| match r.relative {
        Some(p) => format!("{p:.2}"),
        None => "undefined".into(),
    });
    out
}
