//! Patch sampling, vectorization and ZCA whitening.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imageio::{Image, CHANNELS};

pub const DEFAULT_PATCH_SIDE: usize = 8;
pub const DEFAULT_ZCA_EPSILON: f64 = 0.01;

/// Column-per-patch matrix (`d` rows, `n` columns).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    data: DMatrix<f64>,
    whitened: bool,
}

impl PatchMatrix {
    /// Wraps a `d x n` matrix. Unwhitened data must lie in `[0, 1]`.
    pub fn new(data: DMatrix<f64>, whitened: bool) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::InvalidArgument("patch dimension is zero".into()));
        }
        if !whitened && data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(
                "unwhitened patch values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { data, whitened })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn count(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_whitened(&self) -> bool {
        self.whitened
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Keeps the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> PatchMatrix {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, cols.len());
        for (k, &c) in cols.iter().enumerate() {
            out.set_column(k, &self.data.column(c));
        }
        PatchMatrix {
            data: out,
            whitened: self.whitened,
        }
    }
}

/// Copies the `side x side` window at `(x0, y0)` as a row-major,
/// channel-interleaved vector.
pub fn extract_patch(img: &Image, x0: usize, y0: usize, side: usize, out: &mut [f64]) {
    let row = side * CHANNELS;
    for y in 0..side {
        let src = ((y0 + y) * img.width() + x0) * CHANNELS;
        out[y * row..(y + 1) * row].copy_from_slice(&img.data()[src..src + row]);
    }
}

/// Draws `per_image` random patch locations from every image.
///
/// Image `i` draws from its own ChaCha stream `i` under `seed`, so the result
/// does not depend on how the work is scheduled.
pub fn sample_patches(
    images: &[Image],
    per_image: usize,
    patch_side: usize,
    seed: u64,
) -> Result<PatchMatrix> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("no images to sample from".into()));
    }
    if per_image == 0 || patch_side == 0 {
        return Err(Error::InvalidArgument(
            "per_image and patch_side must be positive".into(),
        ));
    }
    for (index, img) in images.iter().enumerate() {
        if img.width() < patch_side || img.height() < patch_side {
            return Err(Error::ImageTooSmall {
                index,
                width: img.width(),
                height: img.height(),
                side: patch_side,
            });
        }
    }

    let d = patch_side * patch_side * CHANNELS;
    let mut data = DMatrix::zeros(d, per_image * images.len());
    for (i, img) in images.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        for k in 0..per_image {
            let x0 = rng.random_range(0..=img.width() - patch_side);
            let y0 = rng.random_range(0..=img.height() - patch_side);
            let col = i * per_image + k;
            extract_patch(img, x0, y0, patch_side, data.column_mut(col).as_mut_slice());
        }
    }
    PatchMatrix::new(data, false)
}

/// Geometry of a non-overlapping patch tiling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGrid {
    pub rows: usize,
    pub cols: usize,
}

impl TileGrid {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Tiles the image into non-overlapping patches, dropping remainder rows and
/// columns. Columns are ordered row-major over the tiles.
pub fn grid_patches(img: &Image, patch_side: usize) -> Result<(PatchMatrix, TileGrid)> {
    if patch_side == 0 {
        return Err(Error::InvalidArgument("patch_side must be positive".into()));
    }
    if img.width() < patch_side || img.height() < patch_side {
        return Err(Error::ImageTooSmall {
            index: 0,
            width: img.width(),
            height: img.height(),
            side: patch_side,
        });
    }
    let grid = TileGrid {
        rows: img.height() / patch_side,
        cols: img.width() / patch_side,
    };
    let d = patch_side * patch_side * CHANNELS;
    let mut data = DMatrix::zeros(d, grid.len());
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let col = r * grid.cols + c;
            extract_patch(
                img,
                c * patch_side,
                r * patch_side,
                patch_side,
                data.column_mut(col).as_mut_slice(),
            );
        }
    }
    Ok((PatchMatrix::new(data, false)?, grid))
}

/// Per-dimension mean and symmetric whitening matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ZcaTransform {
    mean: DVector<f64>,
    whitener: DMatrix<f64>,
    epsilon: f64,
}

impl ZcaTransform {
    pub fn from_parts(mean: DVector<f64>, whitener: DMatrix<f64>, epsilon: f64) -> Result<Self> {
        let d = mean.len();
        if whitener.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: format!("{d}x{d} whitener"),
                found: format!("{}x{}", whitener.nrows(), whitener.ncols()),
            });
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("ZCA epsilon {epsilon}")));
        }
        Ok(Self {
            mean,
            whitener,
            epsilon,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: DVector::zeros(d),
            whitener: DMatrix::identity(d, d),
            epsilon: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn whitener(&self) -> &DMatrix<f64> {
        &self.whitener
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Population covariance (normalized by `n`) of the columns around their mean.
pub fn covariance(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.ncols() as f64;
    let mean = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let cov = (&centered * centered.transpose()) / n;
    (mean, cov)
}

/// Fits `U diag(1 / sqrt(lambda + epsilon)) U^T` to unwhitened patches.
pub fn fit_zca(patches: &PatchMatrix, epsilon: f64) -> Result<ZcaTransform> {
    if patches.is_whitened() {
        return Err(Error::InvalidArgument(
            "ZCA must be fitted to unwhitened patches".into(),
        ));
    }
    if patches.count() < 2 {
        return Err(Error::InvalidArgument(format!(
            "ZCA needs at least 2 patches, got {}",
            patches.count()
        )));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("ZCA epsilon {epsilon}")));
    }

    let (mean, cov) = covariance(patches.matrix());
    zca_from_covariance(mean, cov, epsilon)
}

/// Builds the whitening transform from an already computed mean and covariance.
pub fn zca_from_covariance(
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    epsilon: f64,
) -> Result<ZcaTransform> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("ZCA epsilon {epsilon}")));
    }
    let eig = SymmetricEigen::try_new(cov, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;

    let mut scales = DVector::zeros(eig.eigenvalues.len());
    for (s, &lambda) in scales.iter_mut().zip(eig.eigenvalues.iter()) {
        // round-off can push null directions slightly negative
        let v = lambda.max(0.0) + epsilon;
        if v <= 0.0 {
            return Err(Error::Eigen(
                "covariance is singular and epsilon is zero".into(),
            ));
        }
        *s = 1.0 / v.sqrt();
    }
    let u = &eig.eigenvectors;
    let scaled = u * DMatrix::from_diagonal(&scales);
    let w = scaled * u.transpose();
    let whitener = (&w + w.transpose()) * 0.5;
    if whitener.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("whitener has non-finite entries".into()));
    }
    ZcaTransform::from_parts(mean, whitener, epsilon)
}

/// `whitener * (P - mean)`.
pub fn apply_zca(t: &ZcaTransform, patches: &PatchMatrix) -> Result<PatchMatrix> {
    if patches.dim() != t.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("patch dimension {}", t.dim()),
            found: patches.dim().to_string(),
        });
    }
    let mut centered = patches.matrix().clone();
    for mut col in centered.column_iter_mut() {
        col -= &t.mean;
    }
    PatchMatrix::new(&t.whitener * centered, true)
}

/// Inverse of [`apply_zca`] on a raw `d x n` matrix: `whitener^-1 * X + mean`.
pub fn unwhiten(t: &ZcaTransform, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != t.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("patch dimension {}", t.dim()),
            found: x.nrows().to_string(),
        });
    }
    let chol = t
        .whitener
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Eigen("whitener is not positive definite".into()))?;
    let mut out = chol.solve(x);
    for mut col in out.column_iter_mut() {
        col += &t.mean;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            let v = ((x * 7 + y * 13) % 17) as f64 / 16.0;
            [v, 1.0 - v, (x % 3) as f64 / 2.0]
        })
        .unwrap()
    }

    #[test]
    fn sample_shape_and_determinism() {
        let imgs: Vec<Image> = (0..10).map(|i| checker(20 + i, 24)).collect();
        let p = sample_patches(&imgs, 100, 8, 7).unwrap();
        assert_eq!((p.dim(), p.count()), (192, 1000));
        assert!(!p.is_whitened());
        let q = sample_patches(&imgs, 100, 8, 7).unwrap();
        assert_eq!(p, q);
        let r = sample_patches(&imgs, 100, 8, 8).unwrap();
        assert_ne!(p, r);
    }

    #[test]
    fn single_placement_is_whole_image() {
        let img = checker(8, 8);
        let p = sample_patches(std::slice::from_ref(&img), 1, 8, 0).unwrap();
        assert_eq!(p.matrix().as_slice(), img.data());
    }

    #[test]
    fn sampling_errors() {
        assert!(matches!(
            sample_patches(&[], 1, 8, 0),
            Err(Error::InvalidArgument(_))
        ));
        let small = checker(7, 9);
        assert!(matches!(
            sample_patches(&[checker(8, 8), small], 1, 8, 0),
            Err(Error::ImageTooSmall { index: 1, .. })
        ));
    }

    #[test]
    fn grid_drops_remainder() {
        let img = checker(19, 17);
        let (p, grid) = grid_patches(&img, 8).unwrap();
        assert_eq!(grid, TileGrid { rows: 2, cols: 2 });
        assert_eq!(p.count(), 4);
        // second tile starts at x = 8
        assert_eq!(p.matrix()[(0, 1)], img.pixel(8, 0)[0]);
        assert_eq!(p.matrix()[(0, 2)], img.pixel(0, 8)[0]);
    }

    #[test]
    fn diagonal_covariance_closed_form() {
        // (+-2, +-1) in all sign combinations, scaled and shifted into [0, 1]
        let cols = [[2.0, 1.0], [2.0, -1.0], [-2.0, 1.0], [-2.0, -1.0]];
        let scale = 0.1;
        let data: Vec<f64> = cols
            .iter()
            .flat_map(|c| [0.5 + scale * c[0], 0.5 + scale * c[1]])
            .collect();
        let p = PatchMatrix::new(DMatrix::from_column_slice(2, 4, &data), false).unwrap();
        let t = fit_zca(&p, 0.0).unwrap();
        // covariance is scale^2 * diag(4, 1)
        let expect = [0.5 / scale, 1.0 / scale];
        assert!((t.whitener()[(0, 0)] - expect[0]).abs() < 1e-8);
        assert!((t.whitener()[(1, 1)] - expect[1]).abs() < 1e-8);
        assert!(t.whitener()[(0, 1)].abs() < 1e-8);
    }

    #[test]
    fn epsilon_guards_null_direction() {
        // second dimension is constant, so its variance is zero
        let data = [0.2, 0.5, 0.8, 0.5, 0.2, 0.5, 0.8, 0.5];
        let p = PatchMatrix::new(DMatrix::from_column_slice(2, 4, &data), false).unwrap();
        let t = fit_zca(&p, 0.01).unwrap();
        assert!((t.whitener()[(1, 1)] - 10.0).abs() < 1e-9);
        assert!(matches!(fit_zca(&p, 0.0), Err(Error::Eigen(_))));
    }

    #[test]
    fn identity_transform_is_noop() {
        let img = checker(16, 16);
        let (p, _) = grid_patches(&img, 8).unwrap();
        let out = apply_zca(&ZcaTransform::identity(192), &p).unwrap();
        assert!(out.is_whitened());
        assert_eq!(out.matrix(), p.matrix());
    }

    #[test]
    fn fit_errors() {
        let one = PatchMatrix::new(DMatrix::from_element(3, 1, 0.5), false).unwrap();
        assert!(matches!(fit_zca(&one, 0.0), Err(Error::InvalidArgument(_))));
        let p = PatchMatrix::new(DMatrix::from_element(3, 4, 0.5), false).unwrap();
        let w = PatchMatrix::new(DMatrix::from_element(3, 4, 0.5), true).unwrap();
        assert!(fit_zca(&w, 0.1).is_err());
        let t = fit_zca(&p, 0.1).unwrap();
        let q = PatchMatrix::new(DMatrix::from_element(4, 4, 0.5), false).unwrap();
        assert!(matches!(
            apply_zca(&t, &q),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
