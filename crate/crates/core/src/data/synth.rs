use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

const BLOB_NOISE: f64 = 0.15;

/// Gaussian blobs, one per class. Class `c` is centred at
/// `separation * u_c`, where `u_c` is the unit vector spread evenly over the
/// feature indices `j` with `j % classes == c`; noise has std 0.15 and the
/// result is clipped to `[0, 1]`. Labels cycle `0, 1, ..., L-1, 0, ...`.
pub fn gen_synthetic(
    classes: usize,
    dim: usize,
    n: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes == 0 || n < classes {
        return Err(Error::precondition(format!("need n >= L >= 1, got n={n}, L={classes}")));
    }
    if dim < classes {
        return Err(Error::precondition(format!("need dim >= L, got dim={dim}, L={classes}")));
    }
    if !(separation > 0.0) {
        return Err(Error::precondition("separation must be > 0"));
    }
    let mut r = rng::stream(seed, "blobs", &[]);
    let noise = Normal::new(0.0, BLOB_NOISE).expect("valid std");
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let block = |c: usize| (0..dim).filter(|j| j % classes == c).count() as f64;
    let heights: Vec<f64> = (0..classes).map(|c| separation / block(c).sqrt()).collect();
    let features = Array2::from_shape_fn((n, dim), |(i, j)| {
        let c = labels[i];
        let centre = if j % classes == c { heights[c] } else { 0.0 };
        (centre + noise.sample(&mut r)).clamp(0.0, 1.0)
    });
    Dataset::new(features, labels, classes)
}

pub const GLYPH_SIDE: usize = 28;

// Seven-segment geometry in a unit-wide, two-unit-tall box.
const SEGMENTS: [((f64, f64), (f64, f64)); 7] = [
    ((0.0, 0.0), (1.0, 0.0)), // a: top
    ((1.0, 0.0), (1.0, 1.0)), // b: upper right
    ((1.0, 1.0), (1.0, 2.0)), // c: lower right
    ((0.0, 2.0), (1.0, 2.0)), // d: bottom
    ((0.0, 1.0), (0.0, 2.0)), // e: lower left
    ((0.0, 0.0), (0.0, 1.0)), // f: upper left
    ((0.0, 1.0), (1.0, 1.0)), // g: middle
];

const DIGITS: [u8; 10] = [
    0b0111111, // 0: abcdef
    0b0000110, // 1: bc
    0b1011011, // 2: abdeg
    0b1001111, // 3: abcdg
    0b1100110, // 4: bcfg
    0b1101101, // 5: acdfg
    0b1111101, // 6: acdefg
    0b0000111, // 7: abc
    0b1111111, // 8
    0b1101111, // 9: abcdfg
];

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// MNIST-like 28x28 digit images: seven-segment glyphs under a random affine
/// warp (scale, slant, rotation, shift), endpoint jitter, varying stroke width
/// and intensity, occasional dropped or spurious strokes, and faint pixel noise.
pub fn gen_glyphs(n: usize, seed: u64) -> Dataset {
    let mut r = rng::stream(seed, "glyphs", &[]);
    let pixel_noise = Normal::new(0.0, 0.04).expect("valid std");
    let side = GLYPH_SIDE;
    let mut features = Array2::zeros((n, side * side));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let digit = r.random_range(0..10usize);
        labels.push(digit);
        let mut mask = DIGITS[digit];
        if r.random::<f64>() < 0.10 {
            let on: Vec<usize> = (0..7).filter(|s| mask & (1 << s) != 0).collect();
            if on.len() > 2 {
                mask &= !(1 << on[r.random_range(0..on.len())]);
            }
        }
        let spurious = if r.random::<f64>() < 0.08 {
            Some(r.random_range(0..7usize))
        } else {
            None
        };
        let sx = r.random_range(6.5..9.5);
        let sy = r.random_range(6.0..8.0);
        let slant = r.random_range(-0.35..0.35);
        let rot: f64 = r.random_range(-0.18..0.18);
        let (tx, ty) = (r.random_range(-2.5..2.5), r.random_range(-2.0..2.0));
        let half_width = r.random_range(0.9..1.9);
        let ink = r.random_range(0.75..1.0);
        let (cr, sr) = (rot.cos(), rot.sin());
        let place = |x: f64, y: f64| {
            // centre the 1x2 box, slant, scale, rotate, then translate to the canvas centre
            let (u, v) = (x - 0.5, y - 1.0);
            let u = u - slant * v;
            let (u, v) = (u * sx, v * sy);
            (14.0 + tx + cr * u - sr * v, 14.0 + ty + sr * u + cr * v)
        };
        let mut segs = Vec::with_capacity(8);
        for (s, &(a, b)) in SEGMENTS.iter().enumerate() {
            let weight = if mask & (1 << s) != 0 {
                1.0
            } else if spurious == Some(s) {
                0.5
            } else {
                continue;
            };
            let mut pa = place(a.0, a.1);
            let mut pb = place(b.0, b.1);
            pa.0 += r.random_range(-0.7..0.7);
            pa.1 += r.random_range(-0.7..0.7);
            pb.0 += r.random_range(-0.7..0.7);
            pb.1 += r.random_range(-0.7..0.7);
            segs.push((pa, pb, weight));
        }
        let mut row = features.row_mut(i);
        for py in 0..side {
            for px in 0..side {
                let p = (px as f64 + 0.5, py as f64 + 0.5);
                let mut v: f64 = 0.0;
                for &(a, b, w) in &segs {
                    let d = segment_distance(p, a, b);
                    v = v.max(w * (half_width + 0.5 - d).clamp(0.0, 1.0));
                }
                let v = ink * v + pixel_noise.sample(&mut r);
                row[py * side + px] = v.clamp(0.0, 1.0);
            }
        }
    }
    let mut ds = Dataset::new(features, labels, 10).expect("valid by construction");
    ds.image_shape = Some((side, side));
    ds
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_sample_per_class_when_n_equals_l() {
        let ds = gen_synthetic(5, 20, 5, 2.0, 1).unwrap();
        assert_eq!(ds.label_counts(), vec![1; 5]);
    }

    #[test]
    fn same_seed_same_data() {
        assert_eq!(gen_synthetic(3, 12, 30, 1.5, 7).unwrap(), gen_synthetic(3, 12, 30, 1.5, 7).unwrap());
        assert_ne!(gen_synthetic(3, 12, 30, 1.5, 7).unwrap(), gen_synthetic(3, 12, 30, 1.5, 8).unwrap());
        assert_eq!(gen_glyphs(20, 3), gen_glyphs(20, 3));
    }

    #[test]
    fn guards() {
        assert!(gen_synthetic(4, 10, 3, 1.0, 0).is_err());
        assert!(gen_synthetic(2, 10, 3, 0.0, 0).is_err());
    }

    #[test]
    fn glyphs_are_valid_images() {
        let ds = gen_glyphs(200, 11);
        assert_eq!(ds.feature_dim(), 784);
        assert_eq!(ds.image_shape, Some((28, 28)));
        assert!(ds.label_counts().iter().all(|&c| c > 5));
        // strokes cover a minority of the canvas
        let mean = ds.features.mean().unwrap();
        assert!(mean > 0.05 && mean < 0.35, "mean ink {mean}");
    }
}
