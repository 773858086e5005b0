//! Seeded synthetic camouflage dataset: textured backgrounds with a single
//! interior blob whose texture differs from the background but whose mean
//! intensity is offset by only `delta`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::netpbm::Image8;
use crate::error::{config_err, Error, Result};
use crate::rng::Prng;
use crate::tensor::{resize_bilinear, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub image_size: usize,
    pub train_count: usize,
    pub test_count: usize,
    /// Foreground minus background mean intensity, on a `[0, 1]` scale.
    pub delta: f64,
    pub area_min: f64,
    pub area_max: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            image_size: 256,
            train_count: 200,
            test_count: 50,
            delta: 0.04,
            area_min: 0.05,
            area_max: 0.40,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 8 {
            return Err(config_err!("image size {} too small", self.image_size));
        }
        if !(0.0 < self.area_min && self.area_min < self.area_max && self.area_max <= 0.5) {
            return Err(config_err!("area band [{}, {}] must satisfy 0 < min < max <= 0.5", self.area_min, self.area_max));
        }
        if !(self.delta.is_finite() && self.delta.abs() <= 0.25) {
            return Err(config_err!("delta {} outside [-0.25, 0.25]", self.delta));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
    /// Never written by `gen_data`; drawn on demand for channel probes.
    Probe,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Probe => "probe",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedSample {
    pub image: Image8,
    pub mask: Image8,
    pub area_fraction: f64,
    /// Measured mean intensities after quantisation.
    pub fg_mean: f64,
    pub bg_mean: f64,
}

// Smooth value noise: a random lattice upsampled bilinearly, summed over octaves.
fn value_noise(rng: &mut Prng, size: usize, octaves: &[(usize, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; size * size];
    for &(cells, amp) in octaves {
        let cells = cells.min(size).max(2);
        let lattice: Vec<f64> = (0..cells * cells).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let t = Tensor::<f64>::new([1, 1, cells, cells], lattice).expect("lattice shape");
        let up = resize_bilinear(&t, (size, size)).expect("positive target");
        for (o, &v) in out.iter_mut().zip(up.data()) {
            *o += amp * v;
        }
    }
    out
}

struct Blob {
    cx: f64,
    cy: f64,
    radius: f64,
    harmonics: [(f64, f64); 3],
}

impl Blob {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let theta = dy.atan2(dx);
        let wobble: f64 = self
            .harmonics
            .iter()
            .enumerate()
            .map(|(k, &(a, phi))| a * ((k + 2) as f64 * theta + phi).cos())
            .sum();
        dx.hypot(dy) <= self.radius * (1.0 + wobble)
    }
}

fn blob_mask(rng: &mut Prng, cfg: &DatasetConfig) -> Result<(Vec<bool>, f64)> {
    let s = cfg.image_size;
    let n = (s * s) as f64;
    for _ in 0..256 {
        let frac = rng.uniform(cfg.area_min, cfg.area_max);
        let harmonics = [(); 3].map(|_| (rng.uniform(-0.15, 0.15), rng.uniform(0.0, std::f64::consts::TAU)));
        // Polar area of r(θ) = R (1 + Σ a_k cos(kθ + φ_k)) is π R² (1 + Σ a_k² / 2).
        let shape_area = std::f64::consts::PI * (1.0 + harmonics.iter().map(|(a, _)| a * a / 2.0).sum::<f64>());
        let radius = (frac * n / shape_area).sqrt();
        let reach = radius * (1.0 + harmonics.iter().map(|(a, _)| a.abs()).sum::<f64>()) + 2.0;
        if 2.0 * reach >= s as f64 {
            continue;
        }
        let blob = Blob {
            cx: rng.uniform(reach, s as f64 - reach),
            cy: rng.uniform(reach, s as f64 - reach),
            radius,
            harmonics,
        };
        let mask: Vec<bool> = (0..s * s)
            .map(|i| blob.contains((i % s) as f64 + 0.5, (i / s) as f64 + 0.5))
            .collect();
        let area = mask.iter().filter(|&&m| m).count() as f64 / n;
        let touches_border = (0..s).any(|k| mask[k] || mask[(s - 1) * s + k] || mask[k * s] || mask[k * s + s - 1]);
        if (cfg.area_min..=cfg.area_max).contains(&area) && !touches_border {
            return Ok((mask, area));
        }
    }
    Err(config_err!("could not place a blob in the [{}, {}] area band at size {s}", cfg.area_min, cfg.area_max))
}

/// Generate one sample deterministically from `(cfg.seed, split, index)`.
pub fn generate_sample(cfg: &DatasetConfig, split: Split, index: usize) -> Result<GeneratedSample> {
    cfg.validate()?;
    let s = cfg.image_size;
    let mut rng = Prng::derive(cfg.seed, &format!("{}/{index}", split.name()));
    let (mask, area_fraction) = blob_mask(&mut rng, cfg)?;

    let base: [f64; 3] = [(); 3].map(|_| rng.uniform(0.35, 0.65));
    let bg_oct = [(4, 0.10), (16, 0.05)];
    let fg_oct = [(10, 0.07), (40, 0.06)];
    let mut planes = [(); 3].map(|_| Vec::new());
    for (c, plane) in planes.iter_mut().enumerate() {
        let bg = value_noise(&mut rng, s, &bg_oct);
        let fg = value_noise(&mut rng, s, &fg_oct);
        *plane = (0..s * s)
            .map(|i| base[c] + if mask[i] { fg[i] } else { bg[i] })
            .collect::<Vec<_>>();
    }
    let mean_over = |want: bool| {
        let (mut sum, mut count) = (0.0, 0usize);
        for i in (0..s * s).filter(|&i| mask[i] == want) {
            sum += planes.iter().map(|p| p[i]).sum::<f64>() / 3.0;
            count += 1;
        }
        sum / count as f64
    };
    let shift = mean_over(false) + cfg.delta - mean_over(true);
    for plane in planes.iter_mut() {
        for (v, &m) in plane.iter_mut().zip(&mask) {
            if m {
                *v += shift;
            }
        }
    }

    let mut rgb = Vec::with_capacity(3 * s * s);
    for i in 0..s * s {
        for plane in &planes {
            rgb.push((plane[i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    let measured = |want: bool| {
        let (mut sum, mut count) = (0u64, 0u64);
        for i in (0..s * s).filter(|&i| mask[i] == want) {
            sum += rgb[3 * i..3 * i + 3].iter().map(|&v| v as u64).sum::<u64>();
            count += 3;
        }
        sum as f64 / count as f64 / 255.0
    };
    Ok(GeneratedSample {
        fg_mean: measured(true),
        bg_mean: measured(false),
        image: Image8::new(s, s, 3, rgb)?,
        mask: Image8::new(s, s, 1, mask.iter().map(|&m| if m { 255 } else { 0 }).collect())?,
        area_fraction,
    })
}

fn sample_id(index: usize) -> String {
    format!("{index:04}")
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Write `train/` and `test/` splits plus `meta.csv` under `out`.
pub fn gen_data(cfg: &DatasetConfig, out: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let mut meta = String::from("id,split,delta,area_fraction,fg_mean,bg_mean\n");
    for (split, count) in [(Split::Train, cfg.train_count), (Split::Test, cfg.test_count)] {
        let dir = out.join(split.name());
        create_dir(&dir.join("images"))?;
        create_dir(&dir.join("masks"))?;
        let samples: Vec<GeneratedSample> = (0..count)
            .into_par_iter()
            .map(|i| generate_sample(cfg, split, i))
            .collect::<Result<_>>()?;
        for (i, smp) in samples.iter().enumerate() {
            let id = sample_id(i);
            smp.image.save(&dir.join("images").join(format!("{id}.ppm")))?;
            smp.mask.save(&dir.join("masks").join(format!("{id}.pgm")))?;
            writeln!(
                meta,
                "{id},{},{},{:.6},{:.6},{:.6}",
                split.name(),
                cfg.delta,
                smp.area_fraction,
                smp.fg_mean,
                smp.bg_mean
            )
            .expect("writing to a String");
        }
    }
    let meta_path = out.join("meta.csv");
    fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;
    Ok(meta_path)
}

/// One loaded sample: image `[1, 3, S, S]` in `[0, 1]` and binary mask
/// `[1, 1, S, S]` (grey levels `>= 128` are foreground).
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: Tensor<f32>,
    pub mask: Tensor<f32>,
}

pub fn image_to_tensor(img: &Image8) -> Result<Tensor<f32>> {
    let (w, h, c) = (img.width, img.height, img.channels);
    let mut data = vec![0.0f32; c * w * h];
    for (i, px) in img.data.chunks_exact(c).enumerate() {
        for (ch, &v) in px.iter().enumerate() {
            data[ch * w * h + i] = v as f32 / 255.0;
        }
    }
    Tensor::new([1, c, h, w], data)
}

pub fn mask_to_tensor(img: &Image8) -> Result<Tensor<f32>> {
    if img.channels != 1 {
        return Err(Error::Format("mask must be single-channel".into()));
    }
    let data = img.data.iter().map(|&v| if v >= 128 { 1.0 } else { 0.0 }).collect();
    Tensor::new([1, 1, img.height, img.width], data)
}

/// Load a split, sorted by sample id.
pub fn load_split(root: &Path, split: Split) -> Result<Vec<Sample>> {
    let dir = root.join(split.name());
    let images = dir.join("images");
    let mut ids: Vec<String> = fs::read_dir(&images)
        .map_err(|e| Error::io(&images, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            name.strip_suffix(".ppm").map(str::to_string)
        })
        .collect();
    ids.sort();
    if ids.is_empty() {
        return Err(config_err!("no images found in {}", images.display()));
    }
    ids.into_par_iter()
        .map(|id| {
            let image = image_to_tensor(&Image8::load(&images.join(format!("{id}.ppm")))?)?;
            let mask = mask_to_tensor(&Image8::load(&dir.join("masks").join(format!("{id}.pgm")))?)?;
            Ok(Sample { id, image, mask })
        })
        .collect()
}
