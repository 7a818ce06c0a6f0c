//! Seeded synthetic images.
//!
//! A low-frequency color field for the background, a few shaded rectangles
//! and ellipses, and two octaves of value-noise texture on top. No region is
//! exactly flat.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imaging::ImageBuffer;

/// Smooth noise in `[-1, 1]`: random values on a `(cells+1)²` lattice,
/// smoothstep-interpolated over a `side × side` raster.
fn value_noise(rng: &mut ChaCha8Rng, side: usize, cells: usize) -> Vec<f64> {
    let stride = cells + 1;
    let lattice: Vec<f64> = (0..stride * stride).map(|_| rng.random_range(-1.0..1.0)).collect();
    let at = |x: usize, y: usize| lattice[y * stride + x];
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let scale = cells as f64 / side as f64;
    let mut out = Vec::with_capacity(side * side);
    for y in 0..side {
        let fy = (y as f64 + 0.5) * scale;
        let y0 = fy.floor() as usize;
        let ty = smooth(fy - y0 as f64);
        for x in 0..side {
            let fx = (x as f64 + 0.5) * scale;
            let x0 = fx.floor() as usize;
            let tx = smooth(fx - x0 as f64);
            let top = at(x0, y0) + (at(x0 + 1, y0) - at(x0, y0)) * tx;
            let bottom = at(x0, y0 + 1) + (at(x0 + 1, y0 + 1) - at(x0, y0 + 1)) * tx;
            out.push(top + (bottom - top) * ty);
        }
    }
    out
}

struct Shape {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    rect: bool,
    color: [f64; 3],
    shade: [f64; 2],
}

const TEXTURE_AMPLITUDE: f64 = 0.06;

/// A `side` × `side` synthetic image determined entirely by `seed`.
pub fn synthetic_image(side: usize, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_1A9E_0000_0000);
    let s = side as f64;

    let background: Vec<Vec<f64>> = (0..3).map(|_| value_noise(&mut rng, side, 3)).collect();
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.2..0.8));
    let amplitude = rng.random_range(0.2..0.45);
    let texture: Vec<Vec<f64>> = (0..3)
        .map(|_| {
            let coarse = value_noise(&mut rng, side, 14);
            let fine = value_noise(&mut rng, side, 28);
            coarse.iter().zip(&fine).map(|(a, b)| 0.6 * a + 0.4 * b).collect()
        })
        .collect();

    let n_shapes = rng.random_range(3..=7);
    let shapes: Vec<Shape> = (0..n_shapes)
        .map(|_| Shape {
            cx: rng.random_range(0.0..1.0) * s,
            cy: rng.random_range(0.0..1.0) * s,
            rx: rng.random_range(0.08..0.3) * s,
            ry: rng.random_range(0.08..0.3) * s,
            rect: rng.random_bool(0.5),
            color: std::array::from_fn(|_| rng.random::<f64>()),
            shade: [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)],
        })
        .collect();

    ImageBuffer::from_fn(side, side, |x, y| {
        let i = y * side + x;
        let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
        let mut px: [f64; 3] = std::array::from_fn(|c| base[c] + amplitude * background[c][i]);
        for sh in &shapes {
            let (dx, dy) = ((fx - sh.cx) / sh.rx, (fy - sh.cy) / sh.ry);
            let inside = if sh.rect {
                dx.abs() <= 1.0 && dy.abs() <= 1.0
            } else {
                dx * dx + dy * dy <= 1.0
            };
            if inside {
                let shade = 0.5 * (sh.shade[0] * dx + sh.shade[1] * dy);
                px = sh.color.map(|v| v + shade);
            }
        }
        std::array::from_fn(|c| px[c] + TEXTURE_AMPLITUDE * texture[c][i])
    })
    .expect("synthetic image is valid")
}

/// `count` images with seeds `base_seed, base_seed + 1, ...`.
pub fn synthetic_corpus(side: usize, count: usize, base_seed: u64) -> Vec<ImageBuffer> {
    (0..count as u64).map(|i| synthetic_image(side, base_seed + i)).collect()
}
