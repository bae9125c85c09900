//! Training corpora: PNM directories on disk, or procedurally generated
//! dead-leaves scenes.
//!
//! Dead-leaves images (occluding random shapes with power-law sizes) share
//! the statistics that matter for patch learning with photographs: flat
//! regions of roughly constant color separated by sharp edges at every scale
//! and orientation.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imageio::{load_image, Image};

/// Loads every `.ppm`/`.pgm` file in `dir`, sorted by file name.
pub fn load_corpus_dir(dir: impl AsRef<Path>) -> Result<Vec<Image>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|source| Error::Read {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|source| Error::Read {
                path: dir.to_path_buf(),
                source,
            })?
            .path();
        let is_pnm = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "ppm" | "pgm"));
        if is_pnm {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no .ppm or .pgm files in {}",
            dir.display()
        )));
    }
    paths.iter().map(load_image).collect()
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Disk,
    Rect { cos: f64, sin: f64, aspect: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Leaf {
    cx: f64,
    cy: f64,
    radius: f64,
    shape: Shape,
    color: [f64; 3],
    // linear shading across the leaf
    shade: [f64; 2],
}

impl Leaf {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        match self.shape {
            Shape::Disk => dx * dx + dy * dy <= self.radius * self.radius,
            Shape::Rect { cos, sin, aspect } => {
                let u = dx * cos + dy * sin;
                let v = -dx * sin + dy * cos;
                u.abs() <= self.radius && v.abs() <= self.radius * aspect
            }
        }
    }

    fn color_at(&self, x: f64, y: f64) -> [f64; 3] {
        let t = ((x - self.cx) * self.shade[0] + (y - self.cy) * self.shade[1]) / self.radius;
        self.color.map(|c| c * (1.0 + 0.15 * t))
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as u32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn random_leaf(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Leaf {
    let r_min = 1.5;
    let r_max = width.min(height) as f64 / 3.0;
    // density ~ r^-3, sampled by inverting the CDF of 1/r^2
    let u: f64 = rng.random();
    let inv = 1.0 / (r_min * r_min) - u * (1.0 / (r_min * r_min) - 1.0 / (r_max * r_max));
    let radius = 1.0 / inv.sqrt();
    let shape = if rng.random_bool(0.5) {
        Shape::Disk
    } else {
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        Shape::Rect {
            cos: theta.cos(),
            sin: theta.sin(),
            aspect: rng.random_range(0.3..1.0),
        }
    };
    let color = hsv_to_rgb(
        rng.random(),
        rng.random_range(0.1..0.9),
        rng.random_range(0.15..0.95),
    );
    Leaf {
        cx: rng.random_range(-r_max..width as f64 + r_max),
        cy: rng.random_range(-r_max..height as f64 + r_max),
        radius,
        shape,
        color,
        shade: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
    }
}

/// Renders one dead-leaves scene with 2x2 supersampling and mild sensor noise.
pub fn dead_leaves(width: usize, height: usize, seed: u64) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("scene size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let leaf_count = (width * height / 12).max(64);
    // painted back to front, so later leaves occlude earlier ones
    let leaves: Vec<Leaf> = (0..leaf_count)
        .map(|_| random_leaf(&mut rng, width, height))
        .collect();
    let background = hsv_to_rgb(rng.random(), 0.3, 0.5);

    let sample = |x: f64, y: f64| -> [f64; 3] {
        leaves
            .iter()
            .rev()
            .find(|leaf| leaf.contains(x, y))
            .map_or(background, |leaf| leaf.color_at(x, y))
    };

    let offsets = [0.25, 0.75];
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let mut acc = [0.0; 3];
            for oy in offsets {
                for ox in offsets {
                    let c = sample(x as f64 + ox, y as f64 + oy);
                    for k in 0..3 {
                        acc[k] += c[k] / 4.0;
                    }
                }
            }
            for a in acc {
                let noise: f64 = rng.random_range(-0.01..0.01);
                data.push((a + noise).clamp(0.0, 1.0));
            }
        }
    }
    Image::new(width, height, data)
}

/// `count` dead-leaves scenes of `side x side` pixels; scene `i` uses seed `seed + i`.
pub fn natural_corpus(count: usize, side: usize, seed: u64) -> Result<Vec<Image>> {
    (0..count)
        .map(|i| dead_leaves(side, side, seed.wrapping_add(i as u64)))
        .collect()
}
