//! Synthetic traffic-sign images: one colored geometric template per class,
//! rendered with jittered position, scale and background.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imageio::{load_image, save_image, Image};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    images: Vec<Image>,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledImageSet {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} labels", images.len()),
                found: labels.len().to_string(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside 0..{class_count}"
            )));
        }
        Ok(Self {
            images,
            labels,
            class_count,
        })
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Writes `NNNNN.ppm` files plus `labels.csv` (`file,label`, with a
    /// `# classes=k` comment line) into `dir`, which must exist.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let mut csv = format!("# classes={}\nfile,label\n", self.class_count);
        for (i, (img, label)) in self.images.iter().zip(&self.labels).enumerate() {
            let name = format!("{i:05}.ppm");
            save_image(img, dir.join(&name))?;
            csv.push_str(&format!("{name},{label}\n"));
        }
        let path = dir.join("labels.csv");
        fs::write(&path, csv).map_err(|source| Error::Write { path, source })
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("labels.csv");
        let text = fs::read_to_string(&path).map_err(|source| Error::Read {
            path: path.clone(),
            source,
        })?;
        let mut class_count = None;
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("# classes=") {
                class_count = Some(rest.trim().parse().map_err(|_| {
                    Error::Malformed(format!("labels.csv line {}: bad class count", no + 1))
                })?);
                continue;
            }
            if line.is_empty() || line.starts_with('#') || line == "file,label" {
                continue;
            }
            let (file, label) = line
                .split_once(',')
                .ok_or_else(|| Error::Malformed(format!("labels.csv line {}", no + 1)))?;
            let label: usize = label
                .trim()
                .parse()
                .map_err(|_| Error::Malformed(format!("labels.csv line {}: bad label", no + 1)))?;
            images.push(load_image(dir.join(file.trim()))?);
            labels.push(label);
        }
        let k = class_count.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        Self::new(images, labels, k)
    }
}

#[derive(Debug, Clone, Copy)]
enum Template {
    Triangle,
    Circle,
    Diamond,
    Square,
    Octagon,
    InvertedTriangle,
    Bar,
    Cross,
}

/// Class templates in class-index order.
const TEMPLATES: [(Template, [f64; 3]); 8] = [
    (Template::Triangle, [0.85, 0.1, 0.1]),
    (Template::Circle, [0.1, 0.25, 0.85]),
    (Template::Diamond, [0.95, 0.85, 0.1]),
    (Template::Square, [0.1, 0.7, 0.2]),
    (Template::Octagon, [0.8, 0.05, 0.2]),
    (Template::InvertedTriangle, [0.95, 0.55, 0.1]),
    (Template::Bar, [0.1, 0.75, 0.8]),
    (Template::Cross, [0.75, 0.2, 0.75]),
];

pub const MAX_CLASSES: usize = TEMPLATES.len();

impl Template {
    /// Point test in template coordinates, where the sign spans `[-1, 1]^2`.
    fn contains(self, u: f64, v: f64) -> bool {
        match self {
            // apex up; v grows downward
            Template::Triangle => (-1.0..=0.8).contains(&v) && u.abs() <= (v + 1.0) * 0.5 * 1.1,
            Template::InvertedTriangle => {
                (-0.8..=1.0).contains(&v) && u.abs() <= (1.0 - v) * 0.5 * 1.1
            }
            Template::Circle => u * u + v * v <= 1.0,
            Template::Diamond => u.abs() + v.abs() <= 1.0,
            Template::Square => u.abs() <= 0.8 && v.abs() <= 0.8,
            Template::Octagon => u.abs() <= 0.92 && v.abs() <= 0.92 && u.abs() + v.abs() <= 1.3,
            Template::Bar => u.abs() <= 1.0 && v.abs() <= 0.35,
            Template::Cross => {
                (u.abs() <= 0.3 && v.abs() <= 1.0) || (u.abs() <= 1.0 && v.abs() <= 0.3)
            }
        }
    }
}

fn render_sign(class: usize, side: usize, rng: &mut ChaCha8Rng) -> Result<Image> {
    let (template, fill) = TEMPLATES[class];
    let s = side as f64;
    let cx = s / 2.0 + rng.random_range(-0.1..=0.1) * s;
    let cy = s / 2.0 + rng.random_range(-0.1..=0.1) * s;
    let radius = 0.36 * s * rng.random_range(0.9..=1.1);
    let background = [
        rng.random_range(0.2..0.8),
        rng.random_range(0.2..0.8),
        rng.random_range(0.2..0.8),
    ];
    let fill = fill.map(|c: f64| (c + rng.random_range(-0.05..=0.05)).clamp(0.0, 1.0));

    let offsets = [0.25, 0.75];
    Image::from_fn(side, side, |x, y| {
        let mut acc = [0.0; 3];
        for oy in offsets {
            for ox in offsets {
                let u = (x as f64 + ox - cx) / radius;
                let v = (y as f64 + oy - cy) / radius;
                let c = if template.contains(u, v) {
                    fill
                } else {
                    background
                };
                for k in 0..3 {
                    acc[k] += c[k] / 4.0;
                }
            }
        }
        acc
    })
}

/// Renders `per_class` images for each of the first `k` templates, classes
/// interleaved (`0, 1, .., k-1, 0, 1, ..`). Image `i` uses ChaCha stream `i`.
pub fn gen_synthetic_signs(
    per_class: usize,
    image_side: usize,
    k: usize,
    seed: u64,
) -> Result<LabeledImageSet> {
    if !(2..=MAX_CLASSES).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "class count {k} unsupported (2..={MAX_CLASSES})"
        )));
    }
    if image_side < 24 {
        return Err(Error::InvalidArgument(format!(
            "sign images must be at least 24 pixels, got {image_side}"
        )));
    }
    if per_class == 0 {
        return Err(Error::InvalidArgument("per_class must be positive".into()));
    }
    let total = per_class * k;
    let mut images = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for i in 0..total {
        let class = i % k;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        images.push(render_sign(class, image_side, &mut rng)?);
        labels.push(class);
    }
    LabeledImageSet::new(images, labels, k)
}
