//! Seeded image perturbations: the evaluation attack suite and the surrogate
//! editor used to build ground-truth pairs.
//!
//! Every output is clipped to `[0, 1]` and keeps the input dimensions.
//! Stochastic attacks draw from a ChaCha8 stream seeded by the attack's own
//! seed, so the same image and attack always give the same pixels.

use std::fmt;
use std::io::Cursor;
use std::str::FromStr;

use image::codecs::jpeg::JpegEncoder;
use image::{ExtendedColorType, ImageFormat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::imaging::{lerp, resize_bilinear, ImageBuffer};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Attack {
    /// Black rectangle covering `area` of the image.
    Cropout { area: f64, seed: u64 },
    /// Bilinear down to `factor` of the size and back up.
    Rescale { factor: f64 },
    /// `(v - 0.5) * factor + 0.5`.
    Contrast { factor: f64 },
    /// `v * factor`.
    Brightness { factor: f64 },
    GaussianNoise { std: f64, seed: u64 },
    /// Each pixel becomes black or white with probability `prob`.
    SaltPepper { prob: f64, seed: u64 },
    Jpeg { quality: u8 },
    /// Rotation about the center, black fill, canvas preserved.
    Rotation { degrees: f64 },
    /// Blur, local recolor and light noise standing in for a generative
    /// round trip.
    SurrogateEdit { seed: u64 },
}

pub const SURROGATE_BLUR_SIGMA: f64 = 1.0;
pub const SURROGATE_NOISE_STD: f64 = 0.02;
pub const SURROGATE_REGION_AREA: (f64, f64) = (0.10, 0.30);
pub const SURROGATE_COLOR_SHIFT: f64 = 0.3;

impl Attack {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidAttack(msg));
        match *self {
            Attack::Cropout { area, .. } if !(area > 0.0 && area <= 1.0) => bad(format!("cropout area {area} not in (0, 1]")),
            Attack::Rescale { factor } if !(factor > 0.0 && factor <= 1.0) => {
                bad(format!("rescale factor {factor} not in (0, 1]"))
            }
            Attack::Contrast { factor } if !(0.5..=2.0).contains(&factor) => {
                bad(format!("contrast factor {factor} not in [0.5, 2.0]"))
            }
            Attack::Brightness { factor } if !(0.5..=2.0).contains(&factor) => {
                bad(format!("brightness factor {factor} not in [0.5, 2.0]"))
            }
            Attack::GaussianNoise { std, .. } if !(0.0..=1.0).contains(&std) => bad(format!("noise std {std} not in [0, 1]")),
            Attack::SaltPepper { prob, .. } if !(0.0..=1.0).contains(&prob) => {
                bad(format!("salt & pepper probability {prob} not in [0, 1]"))
            }
            Attack::Jpeg { quality } if !(1..=100).contains(&quality) => bad(format!("jpeg quality {quality} not in 1..=100")),
            Attack::Rotation { degrees } if !(-180.0..=180.0).contains(&degrees) => {
                bad(format!("rotation {degrees} not in [-180, 180]"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            Attack::Cropout { .. } | Attack::GaussianNoise { .. } | Attack::SaltPepper { .. } | Attack::SurrogateEdit { .. }
        )
    }

    /// Same attack with a different seed; deterministic kinds are unchanged.
    pub fn with_seed(self, new_seed: u64) -> Self {
        match self {
            Attack::Cropout { area, .. } => Attack::Cropout { area, seed: new_seed },
            Attack::GaussianNoise { std, .. } => Attack::GaussianNoise { std, seed: new_seed },
            Attack::SaltPepper { prob, .. } => Attack::SaltPepper { prob, seed: new_seed },
            Attack::SurrogateEdit { .. } => Attack::SurrogateEdit { seed: new_seed },
            other => other,
        }
    }

    /// Short label without the seed, e.g. `contrast:2`.
    pub fn label(&self) -> String {
        match *self {
            Attack::Cropout { area, .. } => format!("cropout:{area}"),
            Attack::Rescale { factor } => format!("rescale:{factor}"),
            Attack::Contrast { factor } => format!("contrast:{factor}"),
            Attack::Brightness { factor } => format!("brightness:{factor}"),
            Attack::GaussianNoise { std, .. } => format!("gaussian:{std}"),
            Attack::SaltPepper { prob, .. } => format!("sp:{prob}"),
            Attack::Jpeg { quality } => format!("jpeg:{quality}"),
            Attack::Rotation { degrees } => format!("rot:{degrees}"),
            Attack::SurrogateEdit { .. } => "surrogate".to_string(),
        }
    }

    /// Parses `kind:param[:seed]`. A missing seed falls back to `default_seed`.
    pub fn parse_with_seed(spec: &str, default_seed: u64) -> Result<Self> {
        let parts: Vec<&str> = spec.trim().split(':').collect();
        let kind = parts[0].to_ascii_lowercase();
        let num = |idx: usize, name: &str| -> Result<f64> {
            let s = parts
                .get(idx)
                .ok_or_else(|| Error::InvalidAttack(format!("{spec:?}: missing {name}")))?;
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidAttack(format!("{spec:?}: bad {name} {s:?}")))
        };
        let num_or = |idx: usize, name: &str, default: f64| -> Result<f64> {
            if parts.len() > idx {
                num(idx, name)
            } else {
                Ok(default)
            }
        };
        let seed_at = |idx: usize| -> Result<u64> {
            match parts.get(idx) {
                None => Ok(default_seed),
                Some(s) => s
                    .parse()
                    .map_err(|_| Error::InvalidAttack(format!("{spec:?}: bad seed {s:?}"))),
            }
        };
        let max_parts = |n: usize| -> Result<()> {
            if parts.len() > n {
                Err(Error::InvalidAttack(format!("{spec:?}: too many parameters")))
            } else {
                Ok(())
            }
        };
        let attack = match kind.as_str() {
            "cropout" | "crop" => {
                max_parts(3)?;
                Attack::Cropout {
                    area: num_or(1, "area", 0.5)?,
                    seed: seed_at(2)?,
                }
            }
            "rescale" | "scale" | "resize" => {
                max_parts(2)?;
                Attack::Rescale {
                    factor: num_or(1, "factor", 0.5)?,
                }
            }
            "contrast" => {
                max_parts(2)?;
                Attack::Contrast { factor: num(1, "factor")? }
            }
            "brightness" | "bright" => {
                max_parts(2)?;
                Attack::Brightness { factor: num(1, "factor")? }
            }
            "gaussian" | "noise" | "gaussian_noise" => {
                max_parts(3)?;
                Attack::GaussianNoise {
                    std: num_or(1, "std", 0.10)?,
                    seed: seed_at(2)?,
                }
            }
            "sp" | "salt_pepper" | "saltpepper" => {
                max_parts(3)?;
                Attack::SaltPepper {
                    prob: num(1, "probability")?,
                    seed: seed_at(2)?,
                }
            }
            "jpeg" | "jpg" => {
                max_parts(2)?;
                let q = num(1, "quality")?;
                if q.fract() != 0.0 || !(1.0..=100.0).contains(&q) {
                    return Err(Error::InvalidAttack(format!("{spec:?}: jpeg quality must be an integer in 1..=100")));
                }
                Attack::Jpeg { quality: q as u8 }
            }
            "rot" | "rotation" | "rotate" => {
                max_parts(2)?;
                Attack::Rotation {
                    degrees: num(1, "angle")?,
                }
            }
            "surrogate" | "surrogate_edit" | "edit" => {
                max_parts(2)?;
                Attack::SurrogateEdit { seed: seed_at(1)? }
            }
            _ => return Err(Error::InvalidAttack(format!("unknown attack kind {:?}", parts[0]))),
        };
        attack.validate()?;
        Ok(attack)
    }
}

impl fmt::Display for Attack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Attack::Cropout { seed, .. } | Attack::GaussianNoise { seed, .. } | Attack::SaltPepper { seed, .. } => {
                write!(f, "{}:{seed}", self.label())
            }
            Attack::SurrogateEdit { seed } => write!(f, "surrogate:{seed}"),
            _ => f.write_str(&self.label()),
        }
    }
}

impl FromStr for Attack {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Attack::parse_with_seed(s, 0)
    }
}

/// The evaluation grid of common distortions (thirteen settings).
pub fn attack_matrix() -> Vec<Attack> {
    vec![
        Attack::Cropout { area: 0.5, seed: 0 },
        Attack::Rescale { factor: 0.5 },
        Attack::Contrast { factor: 0.5 },
        Attack::Contrast { factor: 2.0 },
        Attack::Brightness { factor: 0.5 },
        Attack::Brightness { factor: 2.0 },
        Attack::GaussianNoise { std: 0.10, seed: 0 },
        Attack::SaltPepper { prob: 0.01, seed: 0 },
        Attack::SaltPepper { prob: 0.03, seed: 0 },
        Attack::Jpeg { quality: 90 },
        Attack::Jpeg { quality: 50 },
        Attack::Rotation { degrees: 3.0 },
        Attack::Rotation { degrees: 5.0 },
    ]
}

pub fn apply_attack(img: &ImageBuffer, attack: &Attack) -> Result<ImageBuffer> {
    attack.validate()?;
    Ok(match *attack {
        Attack::Cropout { area, seed } => cropout(img, area, seed),
        Attack::Rescale { factor } => rescale(img, factor),
        Attack::Contrast { factor } => map_pixels(img, |v| (v - 0.5) * factor + 0.5),
        Attack::Brightness { factor } => map_pixels(img, |v| v * factor),
        Attack::GaussianNoise { std, seed } => add_noise(img, std, &mut ChaCha8Rng::seed_from_u64(seed)),
        Attack::SaltPepper { prob, seed } => salt_pepper(img, prob, seed),
        Attack::Jpeg { quality } => jpeg_round_trip(img, quality)?,
        Attack::Rotation { degrees } => rotate(img, degrees),
        Attack::SurrogateEdit { seed } => surrogate_edit(img, seed),
    })
}

fn map_pixels(img: &ImageBuffer, f: impl Fn(f64) -> f64) -> ImageBuffer {
    ImageBuffer::from_raw_clipped(img.width(), img.height(), img.data().iter().map(|v| f(*v)).collect())
}

/// A `w × h` rectangle with `w * h >= area * W * H`, overshooting by less
/// than one row.
fn rect_for_area(width: usize, height: usize, area: f64, aspect: f64) -> (usize, usize) {
    let target = (area * (width * height) as f64).ceil().max(1.0);
    let w = ((target * aspect).sqrt().ceil() as usize).clamp(1, width);
    let h = ((target / w as f64).ceil() as usize).clamp(1, height);
    // A clamped height can leave the rectangle short; widen it back.
    let w = if ((w * h) as f64) < target {
        ((target / h as f64).ceil() as usize).min(width)
    } else {
        w
    };
    (w, h)
}

fn cropout(img: &ImageBuffer, area: f64, seed: u64) -> ImageBuffer {
    let (width, height) = (img.width(), img.height());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = rect_for_area(width, height, area, 1.0);
    let x0 = rng.random_range(0..=width - w);
    let y0 = rng.random_range(0..=height - h);
    let mut data = img.data().to_vec();
    for y in y0..y0 + h {
        let row = (y * width + x0) * 3;
        data[row..row + w * 3].fill(0.0);
    }
    ImageBuffer::from_raw_clipped(width, height, data)
}

fn rescale(img: &ImageBuffer, factor: f64) -> ImageBuffer {
    let w = ((img.width() as f64 * factor).round() as usize).max(1);
    let h = ((img.height() as f64 * factor).round() as usize).max(1);
    let small = resize_bilinear(img, w, h);
    resize_bilinear(&small, img.width(), img.height())
}

fn add_noise(img: &ImageBuffer, std: f64, rng: &mut ChaCha8Rng) -> ImageBuffer {
    if std == 0.0 {
        return img.clone();
    }
    let normal = Normal::new(0.0, std).expect("std validated");
    map_pixels_mut(img, |v| v + normal.sample(rng))
}

fn map_pixels_mut(img: &ImageBuffer, mut f: impl FnMut(f64) -> f64) -> ImageBuffer {
    ImageBuffer::from_raw_clipped(img.width(), img.height(), img.data().iter().map(|v| f(*v)).collect())
}

fn salt_pepper(img: &ImageBuffer, prob: f64, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = img.data().to_vec();
    for px in data.chunks_exact_mut(3) {
        if rng.random_bool(prob) {
            let v = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            px.fill(v);
        }
    }
    ImageBuffer::from_raw_clipped(img.width(), img.height(), data)
}

fn jpeg_round_trip(img: &ImageBuffer, quality: u8) -> Result<ImageBuffer> {
    let rgb = img.to_rgb8();
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality)
        .encode(rgb.as_raw(), rgb.width(), rgb.height(), ExtendedColorType::Rgb8)
        .map_err(|e| Error::Encode(e.to_string()))?;
    let decoded = image::load(Cursor::new(&buf), ImageFormat::Jpeg).map_err(|e| Error::Decode(e.to_string()))?;
    ImageBuffer::from_rgb8(&decoded.to_rgb8())
}

fn rotate(img: &ImageBuffer, degrees: f64) -> ImageBuffer {
    let (width, height) = (img.width(), img.height());
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let fetch = |x: isize, y: isize, c: usize| -> f64 {
        if x < 0 || y < 0 || x >= width as isize || y >= height as isize {
            0.0
        } else {
            img.get(x as usize, y as usize, c)
        }
    };
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            // Inverse mapping: rotate the destination coordinate back by -theta.
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            let outside = sx < -0.5 || sy < -0.5 || sx > width as f64 - 0.5 || sy > height as f64 - 0.5;
            if outside {
                data.extend_from_slice(&[0.0; 3]);
                continue;
            }
            let x0 = sx.floor();
            let y0 = sy.floor();
            let (tx, ty) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            for c in 0..3 {
                let top = lerp(fetch(x0, y0, c), fetch(x0 + 1, y0, c), tx);
                let bottom = lerp(fetch(x0, y0 + 1, c), fetch(x0 + 1, y0 + 1, c), tx);
                data.push(lerp(top, bottom, ty));
            }
        }
    }
    ImageBuffer::from_raw_clipped(width, height, data)
}

/// Separable 3×3 Gaussian blur with clamped edges.
pub fn gaussian_blur3(img: &ImageBuffer, sigma: f64) -> ImageBuffer {
    let side = (-1.0 / (2.0 * sigma * sigma)).exp();
    let norm = 1.0 + 2.0 * side;
    let k = [side / norm, 1.0 / norm, side / norm];
    let (width, height) = (img.width(), img.height());
    let mut tmp = vec![0.0; width * height * 3];
    for y in 0..height {
        for x in 0..width {
            let xs = [x.saturating_sub(1), x, (x + 1).min(width - 1)];
            for c in 0..3 {
                tmp[(y * width + x) * 3 + c] = (0..3).map(|t| k[t] * img.get(xs[t], y, c)).sum();
            }
        }
    }
    let mut out = vec![0.0; width * height * 3];
    for y in 0..height {
        let ys = [y.saturating_sub(1), y, (y + 1).min(height - 1)];
        for x in 0..width {
            for c in 0..3 {
                out[(y * width + x) * 3 + c] = (0..3).map(|t| k[t] * tmp[(ys[t] * width + x) * 3 + c]).sum();
            }
        }
    }
    ImageBuffer::from_raw_clipped(width, height, out)
}

fn surrogate_edit(img: &ImageBuffer, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (width, height) = (img.width(), img.height());
    let smoothed = gaussian_blur3(img, SURROGATE_BLUR_SIGMA);
    let region_src = gaussian_blur3(&smoothed, SURROGATE_BLUR_SIGMA);

    let area = rng.random_range(SURROGATE_REGION_AREA.0..=SURROGATE_REGION_AREA.1);
    let aspect = rng.random_range(0.5..=2.0);
    let (w, h) = rect_for_area(width, height, area, aspect);
    let x0 = rng.random_range(0..=width - w);
    let y0 = rng.random_range(0..=height - h);
    let shift: [f64; 3] = std::array::from_fn(|_| rng.random_range(-SURROGATE_COLOR_SHIFT..=SURROGATE_COLOR_SHIFT));

    let mut data = smoothed.data().to_vec();
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            let i = (y * width + x) * 3;
            for c in 0..3 {
                data[i + c] = region_src.data()[i + c] + shift[c];
            }
        }
    }
    let rewritten = ImageBuffer::from_raw_clipped(width, height, data);
    add_noise(&rewritten, SURROGATE_NOISE_STD, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(w: usize, h: usize, seed: u64) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap()
    }

    #[test]
    fn neutral_brightness_and_contrast_are_identity() {
        let img = random_image(32, 24, 1);
        assert_eq!(apply_attack(&img, &Attack::Brightness { factor: 1.0 }).unwrap(), img);
        assert_eq!(apply_attack(&img, &Attack::Contrast { factor: 1.0 }).unwrap(), img);
    }

    #[test]
    fn contrast_fixes_mid_gray() {
        let img = ImageBuffer::filled(16, 16, [0.5; 3]).unwrap();
        for c in [0.5, 0.8, 1.3, 2.0] {
            assert_eq!(apply_attack(&img, &Attack::Contrast { factor: c }).unwrap(), img);
        }
    }

    #[test]
    fn cropout_blackens_the_requested_area() {
        let img = ImageBuffer::filled(224, 224, [1.0; 3]).unwrap();
        for seed in 0..5 {
            let out = apply_attack(&img, &Attack::Cropout { area: 0.5, seed }).unwrap();
            let black = out.data().chunks(3).filter(|p| *p == [0.0, 0.0, 0.0]).count();
            let target = (0.5f64 * 224.0 * 224.0).ceil() as usize;
            assert!(black >= target && black < target + 224, "{black}");
            let white = out.data().chunks(3).filter(|p| *p == [1.0, 1.0, 1.0]).count();
            assert_eq!(black + white, 224 * 224);
        }
    }

    #[test]
    fn stochastic_attacks_are_reproducible() {
        let img = random_image(48, 48, 2);
        for a in [
            Attack::GaussianNoise { std: 0.1, seed: 9 },
            Attack::SaltPepper { prob: 0.03, seed: 9 },
            Attack::Cropout { area: 0.3, seed: 9 },
            Attack::SurrogateEdit { seed: 9 },
        ] {
            let x = apply_attack(&img, &a).unwrap();
            let y = apply_attack(&img, &a).unwrap();
            assert_eq!(x, y);
            assert_ne!(x, apply_attack(&img, &a.with_seed(10)).unwrap(), "{a}");
        }
    }

    #[test]
    fn gaussian_noise_keeps_the_mean() {
        let img = ImageBuffer::filled(224, 224, [0.5; 3]).unwrap();
        let std = 0.10;
        let out = apply_attack(&img, &Attack::GaussianNoise { std, seed: 4 }).unwrap();
        let mean = out.data().iter().sum::<f64>() / out.data().len() as f64;
        let tol = 3.0 * std / ((3 * 224 * 224) as f64).sqrt();
        assert!((mean - 0.5).abs() < tol, "{mean}");
    }

    #[test]
    fn salt_pepper_rate() {
        let img = ImageBuffer::filled(224, 224, [0.5; 3]).unwrap();
        let out = apply_attack(&img, &Attack::SaltPepper { prob: 0.03, seed: 1 }).unwrap();
        let hit = out.data().chunks(3).filter(|p| p[0] != 0.5).count() as f64;
        let n: f64 = 224.0 * 224.0;
        let sd = (n * 0.03 * 0.97).sqrt();
        assert!((hit - 0.03 * n).abs() < 4.0 * sd);
    }

    #[test]
    fn rescale_of_constant_image_is_exact() {
        let img = ImageBuffer::filled(224, 224, [0.25, 0.5, 0.75]).unwrap();
        assert_eq!(apply_attack(&img, &Attack::Rescale { factor: 0.5 }).unwrap(), img);
    }

    #[test]
    fn zero_rotation_is_identity_and_rotation_fills_corners_black() {
        let img = random_image(40, 40, 3);
        assert_eq!(apply_attack(&img, &Attack::Rotation { degrees: 0.0 }).unwrap(), img);
        let white = ImageBuffer::filled(64, 64, [1.0; 3]).unwrap();
        let out = apply_attack(&white, &Attack::Rotation { degrees: 5.0 }).unwrap();
        assert_eq!(out.pixel(0, 0), [0.0; 3]);
        assert_eq!(out.pixel(32, 32), [1.0; 3]);
        assert_eq!((out.width(), out.height()), (64, 64));
    }

    #[test]
    fn jpeg_round_trip_stays_close() {
        let img = crate::synth::synthetic_image(64, 3);
        let out = apply_attack(&img, &Attack::Jpeg { quality: 90 }).unwrap();
        assert_eq!((out.width(), out.height()), (64, 64));
        let mae = img.data().iter().zip(out.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / img.data().len() as f64;
        assert!(mae > 0.0 && mae < 0.05, "{mae}");
    }

    #[test]
    fn surrogate_edit_changes_image_moderately() {
        let img = crate::synth::synthetic_image(224, 5);
        let out = apply_attack(&img, &Attack::SurrogateEdit { seed: 5 }).unwrap();
        let mae = img.data().iter().zip(out.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / img.data().len() as f64;
        assert!(mae > 0.005 && mae < 0.2, "{mae}");
    }

    #[test]
    fn blur_preserves_constant_images() {
        let img = ImageBuffer::filled(10, 10, [0.3, 0.6, 0.9]).unwrap();
        let out = gaussian_blur3(&img, 1.0);
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn parameter_ranges_are_enforced() {
        let img = random_image(8, 8, 0);
        assert!(apply_attack(&img, &Attack::Brightness { factor: 2.5 }).is_err());
        assert!(apply_attack(&img, &Attack::Contrast { factor: 0.1 }).is_err());
        assert!(apply_attack(&img, &Attack::Cropout { area: 0.0, seed: 0 }).is_err());
        assert!(apply_attack(&img, &Attack::Jpeg { quality: 0 }).is_err());
        assert!(apply_attack(&img, &Attack::SaltPepper { prob: 1.5, seed: 0 }).is_err());
    }

    #[test]
    fn attack_matrix_shape() {
        let grid = attack_matrix();
        assert_eq!(grid.len(), 13);
        assert!(grid.iter().all(|a| a.validate().is_ok()));
        assert_eq!(grid, attack_matrix());
    }

    #[test]
    fn spec_strings_parse() {
        assert_eq!("contrast:2.0".parse::<Attack>().unwrap(), Attack::Contrast { factor: 2.0 });
        assert_eq!(
            Attack::parse_with_seed("sp:0.03", 7).unwrap(),
            Attack::SaltPepper { prob: 0.03, seed: 7 }
        );
        assert_eq!("rot:5".parse::<Attack>().unwrap(), Attack::Rotation { degrees: 5.0 });
        assert_eq!("jpeg:50".parse::<Attack>().unwrap(), Attack::Jpeg { quality: 50 });
        assert_eq!(
            "gaussian:0.1:3".parse::<Attack>().unwrap(),
            Attack::GaussianNoise { std: 0.1, seed: 3 }
        );
        assert_eq!("cropout".parse::<Attack>().unwrap(), Attack::Cropout { area: 0.5, seed: 0 });
        for bad in ["", "blur:1", "contrast", "contrast:x", "jpeg:50.5", "rot:5:1", "brightness:3"] {
            assert!(bad.parse::<Attack>().is_err(), "{bad}");
        }
        for a in attack_matrix() {
            assert_eq!(a.to_string().parse::<Attack>().unwrap(), a);
        }
    }
}
