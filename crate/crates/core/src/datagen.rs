//! Training-pair generation: morphology oracle targets, noise models,
//! synthetic imagery and quality metrics.
//!
//! Randomness comes from [`ChaCha8Rng`]. Sample `i` of a stream seeded with
//! `s` draws from [`substream`]`(s, i)`, i.e. the generator seeded from `s`
//! with its stream number set to `i`, so any sample can be regenerated in
//! isolation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::imaging::{load_pgm, normalize, Image};
use crate::morphology::{self, StructuringElement};
use crate::scalar::Scalar;
use crate::training::{Sample, SampleStream};

/// Value of a switched-off (or pepper) pixel.
pub const OFF_LEVEL: f64 = 1.0 / 512.0;
/// Value of a salt pixel.
pub const SALT_LEVEL: f64 = 511.0 / 512.0;

/// Generator for sample `index` of the stream seeded with `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("probability {p} outside [0, 1]")))
    }
}

/// Each pixel is switched off to [`OFF_LEVEL`] with probability `p`.
pub fn binomial_noise<T: Scalar>(f: &Image<T>, p: f64, rng: &mut impl Rng) -> Result<Image<T>> {
    check_probability(p)?;
    let off = T::c(OFF_LEVEL);
    Ok(f.map(|v| if rng.random::<f64>() < p { off } else { v }))
}

/// Each pixel is replaced with probability `p`, by salt or pepper with equal odds.
pub fn salt_pepper_noise<T: Scalar>(f: &Image<T>, p: f64, rng: &mut impl Rng) -> Result<Image<T>> {
    check_probability(p)?;
    let (pepper, salt) = (T::c(OFF_LEVEL), T::c(SALT_LEVEL));
    Ok(f.map(|v| {
        if rng.random::<f64>() < p {
            if rng.random::<bool>() {
                salt
            } else {
                pepper
            }
        } else {
            v
        }
    }))
}

/// Additive `N(0, sigma^2)` noise, quantized to 8-bit levels (so clamped to
/// `[OFF_LEVEL, SALT_LEVEL]`).
pub fn gaussian_noise<T: Scalar>(f: &Image<T>, sigma: f64, rng: &mut impl Rng) -> Result<Image<T>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParams(format!("noise sigma {sigma} must be finite and non-negative")));
    }
    if sigma == 0.0 {
        return Ok(f.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParams(e.to_string()))?;
    Ok(f.map(|v| {
        let noisy = v.to_f64_lossy() + normal.sample(rng);
        T::c(quantize(noisy))
    }))
}

/// `(1/N) sum (a - b)^2`
pub fn mse<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<T> {
    a.expect_same_shape(b)?;
    let sum = a
        .data()
        .iter()
        .zip(b.data())
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
    Ok(sum / T::of_usize(a.len().max(1)))
}

/// PSNR in dB for unit peak; infinite when `mse` is zero.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

pub fn psnr<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?.to_f64_lossy()))
}

/// Rounds to the nearest 8-bit level in normalized form.
fn quantize(v: f64) -> f64 {
    let level = (v * 256.0 - 0.5).round().clamp(0.0, 255.0);
    (level + 0.5) / 256.0
}

/// Smooth random field: a sum of `terms` low-frequency cosines with unit
/// total amplitude.
fn smooth_field(width: usize, height: usize, terms: usize, max_freq: f64, rng: &mut impl Rng) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64)> = (0..terms)
        .map(|_| {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let freq = rng.random_range(0.3..max_freq) * std::f64::consts::TAU / width.max(height) as f64;
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            (freq * angle.cos(), freq * angle.sin(), phase)
        })
        .collect();
    let mut out = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let s: f64 = waves
                .iter()
                .map(|&(kx, ky, ph)| (kx * c as f64 + ky * r as f64 + ph).cos())
                .sum();
            out.push(s / terms as f64);
        }
    }
    out
}

/// Shape parameters for [`synth_defects`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectSpec {
    pub n_spots: usize,
    pub spot_radius: f64,
    pub n_lines: usize,
    pub line_len: usize,
    /// Line orientation in degrees: 0, 45, 90 or 135.
    pub orientation: u32,
}

impl Default for DefectSpec {
    fn default() -> Self {
        Self {
            n_spots: 12,
            spot_radius: 1.0,
            n_lines: 3,
            line_len: 24,
            orientation: 90,
        }
    }
}

fn line_direction(degrees: u32) -> Result<(isize, isize)> {
    match degrees {
        0 => Ok((0, 1)),
        45 => Ok((-1, 1)),
        90 => Ok((-1, 0)),
        135 => Ok((-1, -1)),
        d => Err(Error::InvalidParams(format!("line orientation {d} not in {{0, 45, 90, 135}}"))),
    }
}

/// Mid-gray textured background in `[0.3, 0.7]` with bright disks and dark
/// line segments. Values are quantized to 8-bit levels.
pub fn synth_defects<T: Scalar>(width: usize, height: usize, spec: &DefectSpec, rng: &mut impl Rng) -> Result<Image<T>> {
    if width == 0 || height == 0 {
        return Err(Error::BadDimensions { width, height, len: 0 });
    }
    let (dr, dc) = line_direction(spec.orientation)?;
    let reach = spec.spot_radius.ceil() as usize;
    if spec.n_spots > 0 && (2 * reach + 1 > width || 2 * reach + 1 > height) {
        return Err(Error::InvalidParams(format!(
            "spot radius {} does not fit a {width}x{height} image",
            spec.spot_radius
        )));
    }
    let extent = spec.line_len.saturating_sub(1);
    if spec.n_lines > 0 && (extent * dc.unsigned_abs() >= width || extent * dr.unsigned_abs() >= height) {
        return Err(Error::InvalidParams(format!(
            "line length {} does not fit a {width}x{height} image",
            spec.line_len
        )));
    }

    let smooth = smooth_field(width, height, 4, 3.0, rng);
    let mut px: Vec<f64> = smooth
        .iter()
        .map(|s| 0.5 + 0.12 * s + rng.random_range(-0.03..0.03))
        .collect();

    let r2 = spec.spot_radius * spec.spot_radius + spec.spot_radius;
    for _ in 0..spec.n_spots {
        let cr = rng.random_range(reach..height - reach) as isize;
        let cc = rng.random_range(reach..width - reach) as isize;
        let lift = rng.random_range(0.2..0.3);
        let reach = reach as isize;
        for r in -reach..=reach {
            for c in -reach..=reach {
                if (r * r + c * c) as f64 <= r2 {
                    let i = (cr + r) as usize * width + (cc + c) as usize;
                    px[i] += lift;
                }
            }
        }
    }

    for _ in 0..spec.n_lines {
        // Starting point chosen so the whole segment stays inside.
        let (r_lo, r_hi) = if dr < 0 { (extent, height) } else { (0, height) };
        let (c_lo, c_hi) = match dc {
            1 => (0, width - extent),
            -1 => (extent, width),
            _ => (0, width),
        };
        let r0 = rng.random_range(r_lo..r_hi) as isize;
        let c0 = rng.random_range(c_lo..c_hi) as isize;
        let drop = rng.random_range(0.2..0.3);
        for t in 0..spec.line_len as isize {
            let i = (r0 + t * dr) as usize * width + (c0 + t * dc) as usize;
            px[i] -= drop;
        }
    }

    Ok(Image::from_fn(width, height, |r, c| {
        T::c(quantize(px[r * width + c].clamp(OFF_LEVEL, SALT_LEVEL)))
    }))
}

/// Parameters for [`synth_scene`]. Densities are per 1000 pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    /// Rectangles, disks and bars of 3 to 15 pixels.
    pub shape_density: f64,
    /// 1x1 and 2x2 specks.
    pub speck_density: f64,
    /// Intensity range of shapes and specks.
    pub levels: (f64, f64),
    /// Amplitude of the smooth background shading around 0.5.
    pub shading: f64,
    /// Half-width of the uniform per-pixel texture.
    pub texture: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            shape_density: 2.0,
            speck_density: 20.0,
            levels: (0.3, 0.9),
            shading: 0.05,
            texture: 0.01,
        }
    }
}

/// Test scene: smooth shading with random rectangles, disks, thin bars and
/// specks of varying contrast, plus fine texture. Values are quantized to
/// 8-bit levels.
pub fn synth_scene<T: Scalar>(width: usize, height: usize, spec: &SceneSpec, rng: &mut impl Rng) -> Result<Image<T>> {
    if width < 4 || height < 4 {
        return Err(Error::BadDimensions { width, height, len: 0 });
    }
    let (lo, hi) = spec.levels;
    if !(OFF_LEVEL..=SALT_LEVEL).contains(&lo) || !(lo..=SALT_LEVEL).contains(&hi) {
        return Err(Error::InvalidParams(format!("scene levels ({lo}, {hi}) outside (0, 1)")));
    }
    let level = |rng: &mut dyn rand::RngCore| if hi > lo { rng.random_range(lo..hi) } else { lo };
    let count = |density: f64| (density * (width * height) as f64 / 1000.0).round() as usize;
    let smooth = smooth_field(width, height, 5, 4.0, rng);
    let mut px: Vec<f64> = smooth.iter().map(|s| 0.5 + spec.shading * s).collect();
    for _ in 0..count(spec.shape_density) {
        let level = level(rng);
        let cr = rng.random_range(0..height) as isize;
        let cc = rng.random_range(0..width) as isize;
        let mut paint = |r: isize, c: isize| {
            if r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width {
                px[r as usize * width + c as usize] = level;
            }
        };
        match rng.random_range(0..3) {
            0 => {
                let (hh, hw) = (rng.random_range(1..8i32) as isize, rng.random_range(1..8i32) as isize);
                for r in cr - hh..=cr + hh {
                    for c in cc - hw..=cc + hw {
                        paint(r, c);
                    }
                }
            }
            1 => {
                let rad = rng.random_range(1.0..7.0f64);
                let reach = rad.ceil() as isize;
                for r in -reach..=reach {
                    for c in -reach..=reach {
                        if ((r * r + c * c) as f64) <= rad * rad {
                            paint(cr + r, cc + c);
                        }
                    }
                }
            }
            _ => {
                let (dr, dc) = line_direction([0, 45, 90, 135][rng.random_range(0..4)])?;
                let len = rng.random_range(4..20i32) as isize;
                let thick = rng.random_range(1..3i32) as isize;
                for t in 0..len {
                    for s in 0..thick {
                        paint(cr + t * dr + s * dc.abs(), cc + t * dc + s * dr.abs());
                    }
                }
            }
        }
    }
    for _ in 0..count(spec.speck_density) {
        let level = level(rng);
        let side = rng.random_range(1..3usize);
        let r0 = rng.random_range(0..height + 1 - side);
        let c0 = rng.random_range(0..width + 1 - side);
        for r in r0..r0 + side {
            px[r * width + c0..r * width + c0 + side].fill(level);
        }
    }
    let texture = spec.texture;
    Ok(Image::from_fn(width, height, |r, c| {
        let jitter = if texture > 0.0 { rng.random_range(-texture..texture) } else { 0.0 };
        T::c(quantize((px[r * width + c] + jitter).clamp(OFF_LEVEL, SALT_LEVEL)))
    }))
}

/// Textual structuring-element description: `square:N`, `diamond:N`,
/// `disk:N` or `line:LEN:ANGLE`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeSpec {
    Square(usize),
    Diamond(usize),
    Disk(usize),
    Line(usize, u32),
}

impl SeSpec {
    pub fn build(self) -> Result<StructuringElement> {
        match self {
            SeSpec::Square(n) => StructuringElement::square(n),
            SeSpec::Diamond(n) => StructuringElement::diamond(n),
            SeSpec::Disk(n) => StructuringElement::disk(n),
            SeSpec::Line(len, angle) => StructuringElement::line(len, angle),
        }
    }
}

impl fmt::Display for SeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeSpec::Square(n) => write!(f, "square:{n}"),
            SeSpec::Diamond(n) => write!(f, "diamond:{n}"),
            SeSpec::Disk(n) => write!(f, "disk:{n}"),
            SeSpec::Line(len, angle) => write!(f, "line:{len}:{angle}"),
        }
    }
}

impl FromStr for SeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParams(format!("cannot parse structuring element `{s}`"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<usize> { parts.get(i).and_then(|p| p.parse().ok()).ok_or_else(bad) };
        let se = match (parts[0], parts.len()) {
            ("square", 2) => SeSpec::Square(num(1)?),
            ("diamond", 2) => SeSpec::Diamond(num(1)?),
            ("disk", 2) => SeSpec::Disk(num(1)?),
            ("line", 3) => SeSpec::Line(num(1)?, num(2)? as u32),
            _ => return Err(bad()),
        };
        se.build()?;
        Ok(se)
    }
}

/// Target operator applied to the clean image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operator {
    Identity,
    Dilate(SeSpec),
    Erode(SeSpec),
    Open(SeSpec),
    Close(SeSpec),
    WhiteTopHat(SeSpec),
    BlackTopHat(SeSpec),
    /// White top-hat by the first element plus black top-hat by the second,
    /// on their common centered region.
    DualTopHat(SeSpec, SeSpec),
    /// Targets supplied as files.
    External,
}

impl Operator {
    /// Applies the operator; `None` for [`Operator::External`].
    pub fn apply<T: Scalar>(&self, f: &Image<T>) -> Result<Option<Image<T>>> {
        use morphology as m;
        Ok(Some(match self {
            Operator::Identity => f.clone(),
            Operator::Dilate(s) => m::dilate(f, &s.build()?)?,
            Operator::Erode(s) => m::erode(f, &s.build()?)?,
            Operator::Open(s) => m::open(f, &s.build()?)?,
            Operator::Close(s) => m::close(f, &s.build()?)?,
            Operator::WhiteTopHat(s) => m::white_top_hat(f, &s.build()?)?,
            Operator::BlackTopHat(s) => m::black_top_hat(f, &s.build()?)?,
            Operator::DualTopHat(a, b) => {
                let w = m::white_top_hat(f, &a.build()?)?;
                let k = m::black_top_hat(f, &b.build()?)?;
                let (cw, ch) = (w.width().min(k.width()), w.height().min(k.height()));
                w.center_crop(cw, ch)?.zip_map(&k.center_crop(cw, ch)?, |x, y| x + y)?
            }
            Operator::External => return Ok(None),
        }))
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operator::Identity => write!(f, "identity"),
            Operator::Dilate(s) => write!(f, "dilate:{s}"),
            Operator::Erode(s) => write!(f, "erode:{s}"),
            Operator::Open(s) => write!(f, "open:{s}"),
            Operator::Close(s) => write!(f, "close:{s}"),
            Operator::WhiteTopHat(s) => write!(f, "white_top_hat:{s}"),
            Operator::BlackTopHat(s) => write!(f, "black_top_hat:{s}"),
            Operator::DualTopHat(a, b) => write!(f, "dual_top_hat:{a}+{b}"),
            Operator::External => write!(f, "external"),
        }
    }
}

impl FromStr for Operator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let se = || rest.parse::<SeSpec>();
        Ok(match name {
            "identity" if rest.is_empty() => Operator::Identity,
            "external" if rest.is_empty() => Operator::External,
            "dilate" => Operator::Dilate(se()?),
            "erode" => Operator::Erode(se()?),
            "open" => Operator::Open(se()?),
            "close" => Operator::Close(se()?),
            "white_top_hat" | "wth" => Operator::WhiteTopHat(se()?),
            "black_top_hat" | "bth" => Operator::BlackTopHat(se()?),
            "dual_top_hat" => {
                let (a, b) = rest
                    .split_once('+')
                    .ok_or_else(|| Error::InvalidParams(format!("dual_top_hat needs two elements: `{s}`")))?;
                Operator::DualTopHat(a.parse()?, b.parse()?)
            }
            _ => return Err(Error::InvalidParams(format!("unknown operator `{s}`"))),
        })
    }
}

/// Corruption applied to the input side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    None,
    Binomial(f64),
    SaltPepper(f64),
    Gaussian(f64),
}

impl NoiseModel {
    pub fn validate(self) -> Result<()> {
        match self {
            NoiseModel::None => Ok(()),
            NoiseModel::Binomial(p) | NoiseModel::SaltPepper(p) => check_probability(p),
            NoiseModel::Gaussian(s) if s >= 0.0 && s.is_finite() => Ok(()),
            NoiseModel::Gaussian(s) => Err(Error::InvalidParams(format!("noise sigma {s} must be non-negative"))),
        }
    }

    pub fn is_none(self) -> bool {
        self == NoiseModel::None
    }

    pub fn apply<T: Scalar>(self, f: &Image<T>, rng: &mut impl Rng) -> Result<Image<T>> {
        match self {
            NoiseModel::None => Ok(f.clone()),
            NoiseModel::Binomial(p) => binomial_noise(f, p, rng),
            NoiseModel::SaltPepper(p) => salt_pepper_noise(f, p, rng),
            NoiseModel::Gaussian(s) => gaussian_noise(f, s, rng),
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::None => write!(f, "none"),
            NoiseModel::Binomial(p) => write!(f, "binomial:{p}"),
            NoiseModel::SaltPepper(p) => write!(f, "salt_pepper:{p}"),
            NoiseModel::Gaussian(s) => write!(f, "gaussian:{s}"),
        }
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidParams(format!("cannot parse noise model `{s}`"));
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let value = || rest.parse::<f64>().map_err(|_| bad());
        let model = match name {
            "none" if rest.is_empty() => NoiseModel::None,
            "binomial" => NoiseModel::Binomial(value()?),
            "salt_pepper" => NoiseModel::SaltPepper(value()?),
            "gaussian" => NoiseModel::Gaussian(value()?),
            _ => return Err(bad()),
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub operator: Operator,
    pub noise: NoiseModel,
    pub seed: u64,
    /// Side of the random square crops drawn per training sample; `None`
    /// cycles through whole images.
    pub patch: Option<usize>,
}

impl TaskSpec {
    pub fn new(operator: Operator) -> Self {
        Self {
            operator,
            noise: NoiseModel::None,
            seed: 0,
            patch: None,
        }
    }
}

/// Training stream over a fixed image set. Without noise the stream is the
/// dataset repeated; with noise every draw is freshly corrupted.
#[derive(Debug, Clone)]
pub struct PairStream<T> {
    inputs: Vec<Image<T>>,
    /// Targets already cropped to each input's network output geometry.
    targets: Vec<Image<T>>,
    noise: NoiseModel,
    margin: usize,
    patch: Option<usize>,
    seed: u64,
}

/// Builds a pair stream from clean `images`. `margin` is the network's total
/// shrink (input size minus output size).
pub fn gen_pairs<T: Scalar>(images: &[Image<T>], task: &TaskSpec, margin: usize) -> Result<PairStream<T>> {
    let targets = images
        .iter()
        .map(|f| {
            task.operator
                .apply(f)?
                .ok_or_else(|| Error::InvalidConfig("external targets must be supplied with files".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    PairStream::with_targets(images.to_vec(), targets, task, margin)
}

impl<T: Scalar> PairStream<T> {
    /// Uses precomputed (or externally supplied) targets. Each target must be
    /// at least as large as the network output for its input and is
    /// center-cropped to it.
    pub fn with_targets(inputs: Vec<Image<T>>, targets: Vec<Image<T>>, task: &TaskSpec, margin: usize) -> Result<Self> {
        task.noise.validate()?;
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::InvalidConfig(format!(
                "{} inputs and {} targets; need matching non-empty sets",
                inputs.len(),
                targets.len()
            )));
        }
        let mut cropped = Vec::with_capacity(targets.len());
        for (f, t) in inputs.iter().zip(&targets) {
            if f.width() <= margin || f.height() <= margin {
                return Err(Error::CropTooLarge {
                    tw: margin + 1,
                    th: margin + 1,
                    width: f.width(),
                    height: f.height(),
                });
            }
            cropped.push(t.center_crop(f.width() - margin, f.height() - margin)?);
        }
        if let Some(p) = task.patch {
            let smallest = inputs.iter().map(|f| f.width().min(f.height())).min().unwrap_or(0);
            if p <= margin || p > smallest {
                return Err(Error::InvalidConfig(format!(
                    "patch size {p} must exceed the margin {margin} and fit every image (smallest side {smallest})"
                )));
            }
        }
        Ok(Self {
            inputs,
            targets: cropped,
            noise: task.noise,
            margin,
            patch: task.patch,
            seed: task.seed,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    /// Full-size pairs, one per image, with noise drawn from `seed`.
    pub fn full_pairs(&self, seed: u64) -> Result<Vec<Sample<T>>> {
        self.inputs
            .iter()
            .zip(&self.targets)
            .enumerate()
            .map(|(i, (f, t))| {
                let mut rng = substream(seed, i as u64);
                Ok(Sample {
                    input: self.noise.apply(f, &mut rng)?,
                    target: t.clone(),
                })
            })
            .collect()
    }
}

impl<T: Scalar> SampleStream<T> for PairStream<T> {
    fn sample(&mut self, index: u64) -> Result<Sample<T>> {
        let mut rng = substream(self.seed, index);
        let i = (index % self.inputs.len() as u64) as usize;
        let (f, t) = (&self.inputs[i], &self.targets[i]);
        let (input, target) = match self.patch {
            None => (f.clone(), t.clone()),
            Some(p) => {
                let r = rng.random_range(0..=f.height() - p);
                let c = rng.random_range(0..=f.width() - p);
                let out = p - self.margin;
                (f.window(r, c, p, p)?, t.window(r, c, out, out)?)
            }
        };
        Ok(Sample {
            input: self.noise.apply(&input, &mut rng)?,
            target,
        })
    }

    fn dataset_len(&self) -> Option<u64> {
        Some(self.inputs.len() as u64)
    }
}

/// File name, input and target.
pub type NamedPair<T> = (String, Image<T>, Image<T>);

/// Reads every `*.pgm` in `input_dir` together with the same-named file in
/// `target_dir`, normalized. Sorted by file name.
pub fn load_paired_dirs<T: Scalar>(
    input_dir: impl AsRef<Path>,
    target_dir: impl AsRef<Path>,
) -> Result<Vec<NamedPair<T>>> {
    let (input_dir, target_dir) = (input_dir.as_ref(), target_dir.as_ref());
    let mut names = list_pgms(input_dir)?;
    names.sort();
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let target_path = target_dir.join(&name);
        if !target_path.is_file() {
            return Err(Error::InvalidConfig(format!(
                "no target `{}` for input `{}`",
                target_path.display(),
                input_dir.join(&name).display()
            )));
        }
        let f = normalize(&load_pgm::<T>(input_dir.join(&name))?);
        let t = normalize(&load_pgm::<T>(&target_path)?);
        out.push((name, f, t));
    }
    Ok(out)
}

/// File names of the `.pgm` files in `dir`.
pub fn list_pgms(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.to_ascii_lowercase().ends_with(".pgm") && entry.path().is_file() {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}
