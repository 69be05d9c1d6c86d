//! Procedural ground-truth-factor image datasets.
//!
//! A [`GroundTruthDataset`] is the full table of images for every factor
//! configuration of a [`FactorSpace`], stored in row-major factor order. The
//! `toysprites` renderer draws one axis-aligned square or ellipse per image;
//! a pixel is lit when its center falls strictly inside the shape, so
//! rendering is exact and platform independent.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATASET_FORMAT_VERSION: &str = "dava-lab-dataset/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    pub cardinality: usize,
    /// Canonical values in `[0, 1]`, strictly increasing.
    pub values: Vec<f64>,
}

impl FactorSpec {
    /// Evenly spaced grid `i / (cardinality - 1)` (a single factor value maps to 0).
    pub fn uniform_grid(name: impl Into<String>, cardinality: usize) -> Result<Self> {
        let name = name.into();
        if cardinality == 0 {
            return Err(Error::Config(format!("factor `{name}` has cardinality 0")));
        }
        let denom = (cardinality - 1).max(1) as f64;
        let values = (0..cardinality).map(|i| i as f64 / denom).collect();
        Ok(FactorSpec { name, cardinality, values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpace {
    factors: Vec<FactorSpec>,
}

impl FactorSpace {
    pub fn new(factors: Vec<FactorSpec>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Config("factor space needs at least one factor".into()));
        }
        for (i, f) in factors.iter().enumerate() {
            if f.cardinality == 0 || f.values.len() != f.cardinality {
                return Err(Error::Config(format!("factor `{}`: cardinality must equal the number of values", f.name)));
            }
            if f.values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!("factor `{}`: values must be strictly increasing", f.name)));
            }
            if factors[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::Config(format!("duplicate factor name `{}`", f.name)));
            }
        }
        Ok(FactorSpace { factors })
    }

    pub fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.cardinality).collect()
    }

    /// Product of cardinalities.
    pub fn total(&self) -> usize {
        self.factors.iter().map(|f| f.cardinality).product()
    }

    /// Row-major position of a factor tuple (last factor varies fastest).
    pub fn flat_index(&self, tuple: &[usize]) -> Result<usize> {
        if tuple.len() != self.factors.len() {
            return Err(Error::shape(format!("{} factor indices", self.factors.len()), tuple.len()));
        }
        let mut idx = 0;
        for (f, &t) in self.factors.iter().zip(tuple) {
            if t >= f.cardinality {
                return Err(Error::InvalidArgument(format!("index {t} out of range for factor `{}`", f.name)));
            }
            idx = idx * f.cardinality + t;
        }
        Ok(idx)
    }

    pub fn tuple_of(&self, mut flat: usize) -> Vec<usize> {
        let mut tuple = vec![0; self.factors.len()];
        for (slot, f) in tuple.iter_mut().zip(&self.factors).rev() {
            *slot = flat % f.cardinality;
            flat /= f.cardinality;
        }
        tuple
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for ImageShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// Images (NHWC, values in `[0, 1]`) with optional factor indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBatch {
    pub shape: ImageShape,
    pub images: Vec<f32>,
    /// `n x num_factors` factor indices when known.
    pub factors: Option<Vec<usize>>,
}

impl ObservationBatch {
    pub fn new(shape: ImageShape, images: Vec<f32>, factors: Option<Vec<usize>>) -> Result<Self> {
        if shape.is_empty() || images.is_empty() || !images.len().is_multiple_of(shape.len()) {
            return Err(Error::shape(format!("non-empty multiple of {}", shape.len()), images.len()));
        }
        if images.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument("image values must lie in [0, 1]".into()));
        }
        let batch = ObservationBatch { shape, images, factors };
        if let Some(f) = &batch.factors {
            if f.len() % batch.len() != 0 {
                return Err(Error::shape(format!("multiple of {} factor rows", batch.len()), f.len()));
            }
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.images.len() / self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        &self.images[i * self.shape.len()..(i + 1) * self.shape.len()]
    }

    pub fn num_factors(&self) -> Option<usize> {
        self.factors.as_ref().map(|f| f.len() / self.len())
    }

    pub fn factor_row(&self, i: usize) -> Option<&[usize]> {
        let k = self.num_factors()?;
        self.factors.as_ref().map(|f| &f[i * k..(i + 1) * k])
    }
}

/// Every image of a finite factor space, indexed by factor tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthDataset {
    space: FactorSpace,
    shape: ImageShape,
    images: Vec<f32>,
}

impl GroundTruthDataset {
    pub fn from_table(space: FactorSpace, shape: ImageShape, images: Vec<f32>) -> Result<Self> {
        if images.len() != space.total() * shape.len() {
            return Err(Error::shape(space.total() * shape.len(), images.len()));
        }
        if images.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument("image values must lie in [0, 1]".into()));
        }
        Ok(GroundTruthDataset { space, shape, images })
    }

    pub fn space(&self) -> &FactorSpace {
        &self.space
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.space.total()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn render(&self, tuple: &[usize]) -> Result<&[f32]> {
        let i = self.space.flat_index(tuple)?;
        Ok(self.image_at(i))
    }

    pub fn image_at(&self, flat: usize) -> &[f32] {
        &self.images[flat * self.shape.len()..(flat + 1) * self.shape.len()]
    }

    fn batch_from_tuples(&self, tuples: Vec<usize>) -> ObservationBatch {
        let k = self.space.num_factors();
        let mut images = Vec::with_capacity(tuples.len() / k * self.shape.len());
        for t in tuples.chunks_exact(k) {
            let flat = self.space.flat_index(t).expect("sampled indices are in range");
            images.extend_from_slice(self.image_at(flat));
        }
        ObservationBatch { shape: self.shape, images, factors: Some(tuples) }
    }

    /// Writes `images.bin` (little-endian `f32`) and `manifest.txt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let bin = dir.join("images.bin");
        let mut bytes = Vec::with_capacity(self.images.len() * 4);
        for v in &self.images {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
        let factors = self
            .space
            .factors()
            .iter()
            .map(|f| format!("{}:{}", f.name, f.cardinality))
            .collect::<Vec<_>>()
            .join(";");
        let manifest = format!(
            "version={DATASET_FORMAT_VERSION}\nheight={}\nwidth={}\nchannels={}\nfactors={factors}\n",
            self.shape.height, self.shape.width, self.shape.channels
        );
        let path = dir.join("manifest.txt");
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(manifest.as_bytes()).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.txt");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let kv = crate::textkv::parse(&text, &path)?;
        let version = kv.get_str("version")?;
        if version != DATASET_FORMAT_VERSION {
            return Err(Error::format(&path, format!("unsupported version `{version}`")));
        }
        let shape = ImageShape {
            height: kv.get_parsed("height")?,
            width: kv.get_parsed("width")?,
            channels: kv.get_parsed("channels")?,
        };
        let mut factors = Vec::new();
        for item in kv.get_str("factors")?.split(';') {
            let (name, card) = item
                .split_once(':')
                .ok_or_else(|| Error::format(&path, format!("bad factor entry `{item}`")))?;
            let card: usize = card.parse().map_err(|_| Error::format(&path, format!("bad cardinality `{card}`")))?;
            factors.push(FactorSpec::uniform_grid(name, card)?);
        }
        let space = FactorSpace::new(factors)?;
        let bin = dir.join("images.bin");
        let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        if bytes.len() != space.total() * shape.len() * 4 {
            return Err(Error::format(&bin, format!("expected {} bytes, found {}", space.total() * shape.len() * 4, bytes.len())));
        }
        let images = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Self::from_table(space, shape, images)
    }
}

/// Draws `n` observations with every factor sampled independently and uniformly.
pub fn sample_random<R: Rng + ?Sized>(dataset: &GroundTruthDataset, n: usize, rng: &mut R) -> Result<ObservationBatch> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let cards = dataset.space.cardinalities();
    let mut tuples = Vec::with_capacity(n * cards.len());
    for _ in 0..n {
        tuples.extend(cards.iter().map(|&c| rng.random_range(0..c)));
    }
    Ok(dataset.batch_from_tuples(tuples))
}

/// Draws `n` observations sharing one uniformly drawn value of factor `k`.
pub fn sample_fixed_factor<R: Rng + ?Sized>(
    dataset: &GroundTruthDataset,
    k: usize,
    n: usize,
    rng: &mut R,
) -> Result<ObservationBatch> {
    let cards = dataset.space.cardinalities();
    if k >= cards.len() {
        return Err(Error::InvalidArgument(format!("factor index {k} out of range (have {})", cards.len())));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let fixed = rng.random_range(0..cards[k]);
    let mut tuples = Vec::with_capacity(n * cards.len());
    for _ in 0..n {
        for (j, &c) in cards.iter().enumerate() {
            tuples.push(if j == k { fixed } else { rng.random_range(0..c) });
        }
    }
    Ok(dataset.batch_from_tuples(tuples))
}

/// Options of the `toysprites` renderer. Extents are fractions of the side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToySpritesConfig {
    pub side: usize,
    pub channels: usize,
    pub shapes: usize,
    pub scales: usize,
    pub x_positions: usize,
    pub y_positions: usize,
    pub colors: usize,
    pub min_half_extent: f64,
    pub max_half_extent: f64,
}

impl Default for ToySpritesConfig {
    fn default() -> Self {
        ToySpritesConfig {
            side: 64,
            channels: 1,
            shapes: 2,
            scales: 3,
            x_positions: 8,
            y_positions: 8,
            colors: 3,
            min_half_extent: 1.0 / 16.0,
            max_half_extent: 1.0 / 8.0,
        }
    }
}

impl ToySpritesConfig {
    /// 32x32 variant used by the desk profile and CI.
    pub fn fast() -> Self {
        ToySpritesConfig { side: 32, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpriteShape {
    Square,
    Ellipse,
}

/// Pixel geometry of the `toysprites` renderer.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySprites {
    config: ToySpritesConfig,
    half_extents: Vec<f64>,
    x_centers: Vec<f64>,
    y_centers: Vec<f64>,
    intensities: Vec<f32>,
    space: FactorSpace,
}

/// Minor-to-major axis ratio of the ellipse sprite.
const ELLIPSE_ASPECT: f64 = 0.625;

fn grid_centers(count: usize, side: usize, max_half: f64, axis: &str) -> Result<(Vec<f64>, usize)> {
    let room = side as f64 - 2.0 * max_half;
    if count == 1 {
        return Ok((vec![side as f64 / 2.0], 0));
    }
    let stride = (room / (count - 1) as f64).floor() as usize;
    if stride == 0 {
        return Err(Error::Config(format!("{count} {axis} positions do not fit on a {side}px canvas")));
    }
    let slack = ((room - (stride * (count - 1)) as f64) / 2.0).floor();
    let first = max_half + slack;
    Ok(((0..count).map(|i| first + (i * stride) as f64).collect(), stride))
}

impl ToySprites {
    pub fn new(config: ToySpritesConfig) -> Result<Self> {
        let c = &config;
        for (name, v) in [
            ("side", c.side),
            ("channels", c.channels),
            ("shapes", c.shapes),
            ("scales", c.scales),
            ("x_positions", c.x_positions),
            ("y_positions", c.y_positions),
            ("colors", c.colors),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("toysprites: `{name}` must be at least 1")));
            }
        }
        if c.shapes > 2 {
            return Err(Error::Config("toysprites: at most 2 shapes (square, ellipse)".into()));
        }
        if !(c.min_half_extent > 0.0 && c.min_half_extent <= c.max_half_extent) {
            return Err(Error::Config("toysprites: need 0 < min_half_extent <= max_half_extent".into()));
        }
        let side = c.side as f64;
        let (lo, hi) = (c.min_half_extent * side, c.max_half_extent * side);
        if 2.0 * hi > side {
            return Err(Error::Config(format!("toysprites: sprite extent {} exceeds the {}px canvas", 2.0 * hi, c.side)));
        }
        let half_extents = if c.scales == 1 {
            vec![hi]
        } else {
            (0..c.scales).map(|s| lo + (hi - lo) * s as f64 / (c.scales - 1) as f64).collect()
        };
        let (x_centers, _) = grid_centers(c.x_positions, c.side, hi, "x")?;
        let (y_centers, _) = grid_centers(c.y_positions, c.side, hi, "y")?;
        let intensities = (0..c.colors).map(|i| (i + 1) as f32 / c.colors as f32).collect();
        let space = FactorSpace::new(vec![
            FactorSpec::uniform_grid("shape", c.shapes)?,
            FactorSpec::uniform_grid("scale", c.scales)?,
            FactorSpec::uniform_grid("x_position", c.x_positions)?,
            FactorSpec::uniform_grid("y_position", c.y_positions)?,
            FactorSpec::uniform_grid("color", c.colors)?,
        ])?;
        Ok(ToySprites { config, half_extents, x_centers, y_centers, intensities, space })
    }

    pub fn space(&self) -> &FactorSpace {
        &self.space
    }

    pub fn shape(&self) -> ImageShape {
        ImageShape { height: self.config.side, width: self.config.side, channels: self.config.channels }
    }

    /// Pixel distance between neighbouring x positions (0 with one position).
    pub fn x_stride(&self) -> f64 {
        self.x_centers.get(1).map_or(0.0, |c| c - self.x_centers[0])
    }

    /// Adds the sprite for `tuple` into `out`, keeping the brighter value per pixel.
    pub fn draw_into(&self, tuple: &[usize], out: &mut [f32]) -> Result<()> {
        self.space.flat_index(tuple)?;
        let shape = if tuple[0] == 0 { SpriteShape::Square } else { SpriteShape::Ellipse };
        let half = self.half_extents[tuple[1]];
        let (cx, cy) = (self.x_centers[tuple[2]], self.y_centers[tuple[3]]);
        let value = self.intensities[tuple[4]];
        let (hx, hy) = match shape {
            SpriteShape::Square => (half, half),
            SpriteShape::Ellipse => (half, half * ELLIPSE_ASPECT),
        };
        let side = self.config.side;
        let ch = self.config.channels;
        for py in 0..side {
            let dy = py as f64 + 0.5 - cy;
            if dy.abs() >= hy {
                continue;
            }
            for px in 0..side {
                let dx = px as f64 + 0.5 - cx;
                let inside = match shape {
                    SpriteShape::Square => dx.abs() < hx,
                    SpriteShape::Ellipse => (dx / hx).powi(2) + (dy / hy).powi(2) < 1.0,
                };
                if inside {
                    for p in &mut out[(py * side + px) * ch..(py * side + px + 1) * ch] {
                        *p = p.max(value);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn render(&self, tuple: &[usize]) -> Result<Vec<f32>> {
        let mut img = vec![0.0; self.shape().len()];
        self.draw_into(tuple, &mut img)?;
        Ok(img)
    }

    pub fn into_dataset(self) -> Result<GroundTruthDataset> {
        let len = self.shape().len();
        let mut images = vec![0.0; self.space.total() * len];
        for (flat, img) in images.chunks_exact_mut(len).enumerate() {
            self.draw_into(&self.space.tuple_of(flat), img)?;
        }
        GroundTruthDataset::from_table(self.space.clone(), self.shape(), images)
    }
}

/// Renders every configuration of a `toysprites` dataset.
pub fn build_toysprites(config: &ToySpritesConfig) -> Result<GroundTruthDataset> {
    ToySprites::new(config.clone())?.into_dataset()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    use super::*;

    fn centroid_x(img: &[f32], side: usize) -> f64 {
        let mut mass = 0.0;
        let mut acc = 0.0;
        for py in 0..side {
            for px in 0..side {
                let v = img[py * side + px] as f64;
                mass += v;
                acc += v * (px as f64 + 0.5);
            }
        }
        acc / mass
    }

    #[test]
    fn default_grid_has_1152_configurations() {
        let ds = build_toysprites(&ToySpritesConfig::default()).unwrap();
        assert_eq!(ds.len(), 2 * 3 * 8 * 8 * 3);
        assert_eq!(ds.shape(), ImageShape { height: 64, width: 64, channels: 1 });
    }

    #[test]
    fn rendering_is_deterministic_and_in_range() {
        let sprites = ToySprites::new(ToySpritesConfig::fast()).unwrap();
        let a = sprites.render(&[1, 2, 3, 4, 1]).unwrap();
        let b = sprites.render(&[1, 2, 3, 4, 1]).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn x_step_shifts_centroid_by_exactly_the_stride() {
        for cfg in [ToySpritesConfig::default(), ToySpritesConfig::fast()] {
            let sprites = ToySprites::new(cfg.clone()).unwrap();
            let stride = sprites.x_stride();
            assert!(stride >= 1.0);
            for shape in 0..2 {
                for scale in 0..3 {
                    for x in 0..7 {
                        let a = sprites.render(&[shape, scale, x, 3, 2]).unwrap();
                        let b = sprites.render(&[shape, scale, x + 1, 3, 2]).unwrap();
                        let shift = centroid_x(&b, cfg.side) - centroid_x(&a, cfg.side);
                        assert!((shift - stride).abs() < 1e-9, "shift {shift} vs stride {stride}");
                        let (ma, mb): (f32, f32) = (a.iter().sum(), b.iter().sum());
                        assert_eq!(ma, mb, "mass changes under translation");
                    }
                }
            }
        }
    }

    #[test]
    fn all_default_images_are_distinct() {
        let ds = build_toysprites(&ToySpritesConfig::default()).unwrap();
        let mut seen = std::collections::HashSet::new();
        for i in 0..ds.len() {
            let key: Vec<u32> = ds.image_at(i).iter().map(|v| v.to_bits()).collect();
            assert!(seen.insert(key), "duplicate image at {i}");
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let zero = ToySpritesConfig { scales: 0, ..ToySpritesConfig::fast() };
        assert!(matches!(ToySprites::new(zero), Err(Error::Config(_))));
        let huge = ToySpritesConfig { max_half_extent: 0.6, ..ToySpritesConfig::fast() };
        assert!(matches!(ToySprites::new(huge), Err(Error::Config(_))));
        let crowded = ToySpritesConfig { side: 8, x_positions: 20, ..ToySpritesConfig::fast() };
        assert!(ToySprites::new(crowded).is_err());
    }

    #[test]
    fn flat_index_round_trips() {
        let space = ToySprites::new(ToySpritesConfig::fast()).unwrap().space().clone();
        for flat in [0, 1, 17, 500, space.total() - 1] {
            assert_eq!(space.flat_index(&space.tuple_of(flat)).unwrap(), flat);
        }
        assert!(space.flat_index(&[2, 0, 0, 0, 0]).is_err());
    }

    #[test]
    fn sampling_rejects_empty_and_is_reproducible() {
        let ds = build_toysprites(&ToySpritesConfig::fast()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_random(&ds, 0, &mut rng).is_err());
        let a = sample_random(&ds, 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_random(&ds, 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    fn chi_square_uniform_p(counts: &[usize]) -> f64 {
        let n: usize = counts.iter().sum();
        let expected = n as f64 / counts.len() as f64;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
    }

    #[test]
    fn random_marginals_are_uniform() {
        let ds = build_toysprites(&ToySpritesConfig::fast()).unwrap();
        let batch = sample_random(&ds, 10_000, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for (k, card) in ds.space().cardinalities().into_iter().enumerate() {
            let mut counts = vec![0; card];
            for i in 0..batch.len() {
                counts[batch.factor_row(i).unwrap()[k]] += 1;
            }
            let expected = 10_000.0 / card as f64;
            let sigma = (10_000.0 * (1.0 / card as f64) * (1.0 - 1.0 / card as f64)).sqrt();
            for c in &counts {
                assert!((*c as f64 - expected).abs() < 3.0 * sigma + 1.0, "factor {k}: {counts:?}");
            }
            assert!(chi_square_uniform_p(&counts) > 1e-3);
        }
    }

    #[test]
    fn fixed_factor_batches_hold_one_value() {
        let ds = build_toysprites(&ToySpritesConfig::fast()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let batch = sample_fixed_factor(&ds, 0, 16, &mut rng).unwrap();
        let first = batch.factor_row(0).unwrap()[0];
        assert!((0..16).all(|i| batch.factor_row(i).unwrap()[0] == first));
        assert!(sample_fixed_factor(&ds, 5, 16, &mut rng).is_err());

        let big = sample_fixed_factor(&ds, 2, 10_000, &mut rng).unwrap();
        for k in [0, 1, 3, 4] {
            let card = ds.space().cardinalities()[k];
            let mut counts = vec![0; card];
            for i in 0..big.len() {
                counts[big.factor_row(i).unwrap()[k]] += 1;
            }
            assert!(chi_square_uniform_p(&counts) > 1e-3, "factor {k}: {counts:?}");
        }
    }

    #[test]
    fn cache_round_trip_preserves_table() {
        let ds = build_toysprites(&ToySpritesConfig { x_positions: 3, y_positions: 3, ..ToySpritesConfig::fast() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert!(manifest.contains("factors=shape:2;scale:3;x_position:3;y_position:3;color:3"));
        assert_eq!(GroundTruthDataset::load(dir.path()).unwrap(), ds);
    }
}
