//! Periodic-box discretization for complex fields in `d = 1..4`.
//!
//! Fields live on a cubic grid of `n^d` points with spacing `dx = L/n`,
//! sample `j` of axis `a` at `x_a = j*dx`. Spectral coefficients follow the
//! convention `v_j = sum_m c_m exp(i k_m . x_j)` with `k_a = 2*pi*m_a/L` and
//! mode indices `m_a` in `{-n/2, ..., n/2 - 1}`, so Parseval reads
//! `sum |v|^2 dx^d = L^d sum |c|^2`.
//!
//! The Nyquist mode `m = -n/2` keeps its `|k|^2` weight in the Laplacian and
//! in the quadratic Sobolev sums; odd-order derivative weights at Nyquist
//! would be zeroed, but no odd-order operator is exposed here.

use std::f64::consts::PI;

use thiserror::Error;

pub use rustfft::num_complex::Complex64;

use crate::fft;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("dimension {0} out of range 1..=4")]
    DimensionOutOfRange(usize),
    #[error("points per axis {0} must be a power of two >= 8")]
    InvalidPointCount(usize),
    #[error("box length {0} must be positive and finite")]
    InvalidLength(f64),
    #[error("field contains non-finite entries")]
    NonFinite,
    #[error("value count {got} does not match grid ({expected})")]
    LengthMismatch { got: usize, expected: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("L^p exponent {0} must be >= 1")]
    InvalidExponent(f64),
}

/// Cubic periodic box: `d` axes, `n` points per axis, edge length `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub d: usize,
    pub n: usize,
    pub length: f64,
}

impl GridSpec {
    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Cell volume `dx^d`.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    /// Box volume `L^d`.
    pub fn volume(&self) -> f64 {
        self.length.powi(self.d as i32)
    }

    pub fn total_points(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Coordinates of the sample with row-major flat index `idx`.
    pub fn coords(&self, mut idx: usize) -> Vec<f64> {
        let dx = self.dx();
        let mut x = vec![0.0; self.d];
        for a in (0..self.d).rev() {
            x[a] = (idx % self.n) as f64 * dx;
            idx /= self.n;
        }
        x
    }

    /// Box center `(L/2, ..., L/2)`.
    pub fn center(&self) -> Vec<f64> {
        vec![self.length / 2.0; self.d]
    }
}

pub fn make_grid(d: usize, n: usize, length: f64) -> Result<GridSpec, GridError> {
    if !(1..=4).contains(&d) {
        return Err(GridError::DimensionOutOfRange(d));
    }
    if n < 8 || !n.is_power_of_two() {
        return Err(GridError::InvalidPointCount(n));
    }
    if !(length > 0.0) || !length.is_finite() {
        return Err(GridError::InvalidLength(length));
    }
    Ok(GridSpec { d, n, length })
}

/// Complex samples on a [`GridSpec`], row-major, axis `d-1` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self, GridError> {
        if values.len() != grid.total_points() {
            return Err(GridError::LengthMismatch {
                got: values.len(),
                expected: grid.total_points(),
            });
        }
        if !values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(GridError::NonFinite);
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Field {
            grid,
            values: vec![Complex64::default(); grid.total_points()],
        }
    }

    /// Sample a function of position on the grid.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = (0..grid.total_points()).map(|i| f(&grid.coords(i))).collect();
        Field { grid, values }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn scale(&self, c: Complex64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn sub(&self, other: &Field) -> Result<Field, GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch);
        }
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field, GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch);
        }
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }
}

/// Fourier coefficients of a [`Field`], same layout, FFT index order per axis
/// (`0..n/2-1` then `-n/2..-1`).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: GridSpec,
    pub coeffs: Vec<Complex64>,
}

pub fn to_spectral(f: &Field) -> Result<SpectralField, GridError> {
    if !f.is_finite() {
        return Err(GridError::NonFinite);
    }
    let mut coeffs = f.values.clone();
    fft::forward(&mut coeffs, &f.grid);
    Ok(SpectralField {
        grid: f.grid,
        coeffs,
    })
}

pub fn from_spectral(g: &SpectralField) -> Result<Field, GridError> {
    if !g.coeffs.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(GridError::NonFinite);
    }
    let mut values = g.coeffs.clone();
    fft::inverse(&mut values, &g.grid);
    Ok(Field {
        grid: g.grid,
        values,
    })
}

/// Wavenumbers `k = 2*pi*m/L` along one axis, FFT index order.
pub(crate) fn axis_wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let m = if i < n / 2 {
                i as f64
            } else {
                i as f64 - n as f64
            };
            2.0 * PI * m / length
        })
        .collect()
}

/// `|k|^2` for every mode, row-major flat order.
pub(crate) fn mode_k2(grid: &GridSpec) -> Vec<f64> {
    let k2_axis: Vec<f64> = axis_wavenumbers(grid.n, grid.length)
        .iter()
        .map(|k| k * k)
        .collect();
    let mut out = vec![0.0f64];
    for _ in 0..grid.d {
        let mut next = Vec::with_capacity(out.len() * grid.n);
        for &base in &out {
            for &k2 in &k2_axis {
                next.push(base + k2);
            }
        }
        out = next;
    }
    out
}

/// Multiply each coefficient by `-|k|^2`.
pub fn apply_laplacian(g: &SpectralField) -> SpectralField {
    let k2 = mode_k2(&g.grid);
    let coeffs = g
        .coeffs
        .iter()
        .zip(&k2)
        .map(|(c, &k2)| c * (-k2))
        .collect();
    SpectralField {
        grid: g.grid,
        coeffs,
    }
}

/// Sobolev norms computed by Parseval on the spectral side.
///
/// `h2`/`h3` combine the homogeneous `|k|^4`/`|k|^6` sums with the `L^2`
/// part, mirroring `h1 = (l2^2 + grad_l2^2)^(1/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevNorms {
    pub l2: f64,
    pub grad_l2: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
}

pub fn sobolev_norms_spectral(g: &SpectralField) -> SobolevNorms {
    sobolev_norms_parts(&g.coeffs, &g.grid)
}

pub(crate) fn sobolev_norms_parts(coeffs: &[Complex64], grid: &GridSpec) -> SobolevNorms {
    let k2 = mode_k2(grid);
    let vol = grid.volume();
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for (c, &k2) in coeffs.iter().zip(&k2) {
        let p = c.norm_sqr();
        s0 += p;
        s1 += k2 * p;
        s2 += k2 * k2 * p;
        s3 += k2 * k2 * k2 * p;
    }
    let l2 = (vol * s0).sqrt();
    let grad_l2 = (vol * s1).sqrt();
    SobolevNorms {
        l2,
        grad_l2,
        h1: (vol * (s0 + s1)).sqrt(),
        h2: (vol * (s0 + s2)).sqrt(),
        h3: (vol * (s0 + s3)).sqrt(),
    }
}

pub fn sobolev_norms(f: &Field) -> Result<SobolevNorms, GridError> {
    Ok(sobolev_norms_spectral(&to_spectral(f)?))
}

/// Rectangle-rule `L^p` norm, `(sum |v|^p dx^d)^(1/p)`.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64, GridError> {
    if !(p >= 1.0) {
        return Err(GridError::InvalidExponent(p));
    }
    let sum: f64 = f.values.iter().map(|v| v.norm().powf(p)).sum();
    Ok((sum * f.grid.cell_volume()).powf(1.0 / p))
}

/// `integral conj(a) * b dx` by the rectangle rule.
pub fn l2_inner(a: &Field, b: &Field) -> Result<Complex64, GridError> {
    if a.grid != b.grid {
        return Err(GridError::GridMismatch);
    }
    let sum: Complex64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| x.conj() * y)
        .sum();
    Ok(sum * a.grid.cell_volume())
}

/// Embed coefficients of an `n`-grid into a finer `np`-grid (zero padding in
/// the high-frequency band). `np >= n`, both powers of two not required for
/// `np`, only divisibility of layout.
pub(crate) fn pad_spectrum(coeffs: &[Complex64], d: usize, n: usize, np: usize) -> Vec<Complex64> {
    assert!(np >= n);
    let total_fine = np.pow(d as u32);
    let mut out = vec![Complex64::default(); total_fine];
    let total = n.pow(d as u32);
    for idx in 0..total {
        // remap each axis index: low half keeps, high half shifts up
        let mut rem = idx;
        let mut fine = 0usize;
        let mut mult = 1usize;
        let mut fine_digits = [0usize; 4];
        for a in (0..d).rev() {
            let i = rem % n;
            rem /= n;
            fine_digits[a] = if i < n / 2 { i } else { i + np - n };
        }
        for a in (0..d).rev() {
            fine += fine_digits[a] * mult;
            mult *= np;
        }
        out[fine] = coeffs[idx];
    }
    out
}

/// Inverse of [`pad_spectrum`]: keep only the modes representable on the
/// coarse `n`-grid.
pub(crate) fn truncate_spectrum(fine: &[Complex64], d: usize, n: usize, np: usize) -> Vec<Complex64> {
    assert!(np >= n);
    let total = n.pow(d as u32);
    let mut out = vec![Complex64::default(); total];
    for idx in 0..total {
        let mut rem = idx;
        let mut fine_idx = 0usize;
        let mut mult = 1usize;
        let mut fine_digits = [0usize; 4];
        for a in (0..d).rev() {
            let i = rem % n;
            rem /= n;
            fine_digits[a] = if i < n / 2 { i } else { i + np - n };
        }
        for a in (0..d).rev() {
            fine_idx += fine_digits[a] * mult;
            mult *= np;
        }
        out[idx] = fine[fine_idx];
    }
    out
}

/// Minimum-image signed displacement on a periodic axis of length `L`.
pub fn min_image(delta: f64, length: f64) -> f64 {
    let mut r = delta % length;
    if r < -length / 2.0 {
        r += length;
    } else if r >= length / 2.0 {
        r -= length;
    }
    r
}

/// Squared minimum-image distance between a grid point and `center`.
pub fn min_image_dist_sq(x: &[f64], center: &[f64], length: f64) -> f64 {
    x.iter()
        .zip(center)
        .map(|(&xi, &ci)| {
            let r = min_image(xi - ci, length);
            r * r
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: GridSpec, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.total_points())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        Field { grid, values }
    }

    #[test]
    fn make_grid_examples() {
        let g = make_grid(1, 8, 2.0 * PI).unwrap();
        assert!((g.dx() - 2.0 * PI / 8.0).abs() < 1e-15);
        let g = make_grid(3, 32, 40.0).unwrap();
        assert_eq!(g.total_points(), 32768);
        assert_eq!(make_grid(5, 8, 1.0), Err(GridError::DimensionOutOfRange(5)));
        assert_eq!(make_grid(2, 12, 1.0), Err(GridError::InvalidPointCount(12)));
        assert_eq!(make_grid(2, 4, 1.0), Err(GridError::InvalidPointCount(4)));
        assert!(matches!(make_grid(2, 8, -1.0), Err(GridError::InvalidLength(_))));
    }

    #[test]
    fn constant_field_transforms_to_zero_mode() {
        let grid = make_grid(2, 8, 5.0).unwrap();
        let a = Complex64::new(0.7, -0.3);
        let f = Field::from_fn(grid, |_| a);
        let g = to_spectral(&f).unwrap();
        assert!((g.coeffs[0] - a).norm() < 1e-14);
        for c in &g.coeffs[1..] {
            assert!(c.norm() < 1e-14);
        }
    }

    #[test]
    fn pure_mode_transforms_to_single_coefficient() {
        let grid = make_grid(1, 16, 3.0).unwrap();
        let m = 3.0;
        let f = Field::from_fn(grid, |x| {
            Complex64::new(0.0, 2.0 * PI * m * x[0] / grid.length).exp()
        });
        let g = to_spectral(&f).unwrap();
        for (i, c) in g.coeffs.iter().enumerate() {
            if i == 3 {
                assert!((c - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            } else {
                assert!(c.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn roundtrip_matches_direct_dft_oracle() {
        // direct O(n^2) DFT on n = 8, d = 1
        let grid = make_grid(1, 8, 2.0).unwrap();
        let f = random_field(grid, 7);
        let g = to_spectral(&f).unwrap();
        for m in 0..8usize {
            let mut acc = Complex64::default();
            for j in 0..8usize {
                let phase = -2.0 * PI * (m as f64) * (j as f64) / 8.0;
                acc += f.values[j] * Complex64::new(0.0, phase).exp();
            }
            acc /= 8.0;
            assert!((acc - g.coeffs[m]).norm() < 1e-13);
        }
        let back = from_spectral(&g).unwrap();
        for (a, b) in f.values.iter().zip(&back.values) {
            assert!((a - b).norm() < 1e-12 * a.norm().max(1.0));
        }
    }

    #[test]
    fn parseval_holds_on_random_fields() {
        for d in 1..=3usize {
            for &n in &[8usize, 16] {
                let grid = make_grid(d, n, 7.5).unwrap();
                let f = random_field(grid, d as u64 * 100 + n as u64);
                let g = to_spectral(&f).unwrap();
                let phys: f64 = f.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
                    * grid.cell_volume();
                let spec: f64 =
                    g.coeffs.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.volume();
                assert!((phys - spec).abs() < 1e-12 * phys);
            }
        }
    }

    #[test]
    fn laplacian_eigenvalue_on_single_mode() {
        let grid = make_grid(3, 8, 2.0 * PI).unwrap();
        let f = Field::from_fn(grid, |x| Complex64::new(0.0, x[0]).exp());
        let g = apply_laplacian(&to_spectral(&f).unwrap());
        let back = from_spectral(&g).unwrap();
        for (v, w) in f.values.iter().zip(&back.values) {
            assert!((w + v).norm() < 1e-12); // eigenvalue -1
        }
        // constant -> zero
        let c = Field::from_fn(grid, |_| Complex64::new(2.0, 0.0));
        let lc = from_spectral(&apply_laplacian(&to_spectral(&c).unwrap())).unwrap();
        for v in &lc.values {
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn laplacian_matches_finite_differences_at_second_order() {
        // smooth periodic profile, compare spectral laplacian against the
        // centered 3-point stencil; error should shrink ~4x as n doubles
        let profile = |x: &[f64], length: f64| {
            Complex64::new(
                (2.0 * PI * x[0] / length).sin() + 0.5 * (4.0 * PI * x[1] / length).cos(),
                (2.0 * PI * (x[0] + x[1]) / length).cos(),
            )
        };
        let mut errs = Vec::new();
        for &n in &[16usize, 32, 64] {
            let grid = make_grid(2, n, 3.0).unwrap();
            let f = Field::from_fn(grid, |x| profile(x, grid.length));
            let lap = from_spectral(&apply_laplacian(&to_spectral(&f).unwrap())).unwrap();
            let dx = grid.dx();
            let mut max_err = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    let at = |a: usize, b: usize| f.values[(a % n) * n + (b % n)];
                    let fd = (at(i + 1, j) + at(i + n - 1, j) + at(i, j + 1) + at(i, j + n - 1)
                        - 4.0 * at(i, j))
                        / (dx * dx);
                    max_err = max_err.max((fd - lap.values[i * n + j]).norm());
                }
            }
            errs.push(max_err);
        }
        assert!(errs[0] / errs[1] > 3.5);
        assert!(errs[1] / errs[2] > 3.5);
    }

    #[test]
    fn laplacian_is_linear() {
        let grid = make_grid(2, 16, 4.0).unwrap();
        let f = random_field(grid, 1);
        let g = random_field(grid, 2);
        let (alpha, beta) = (Complex64::new(1.3, -0.2), Complex64::new(-0.4, 0.9));
        let combo = f.scale(alpha).add(&g.scale(beta)).unwrap();
        let lhs = from_spectral(&apply_laplacian(&to_spectral(&combo).unwrap())).unwrap();
        let lf = from_spectral(&apply_laplacian(&to_spectral(&f).unwrap())).unwrap();
        let lg = from_spectral(&apply_laplacian(&to_spectral(&g).unwrap())).unwrap();
        let rhs = lf.scale(alpha).add(&lg.scale(beta)).unwrap();
        let diff = lhs.sub(&rhs).unwrap();
        let scale = sobolev_norms(&lhs).unwrap().l2.max(1.0);
        assert!(sobolev_norms(&diff).unwrap().l2 < 1e-12 * scale);
    }

    #[test]
    fn sobolev_norm_examples() {
        let grid = make_grid(2, 16, 3.0).unwrap();
        let z = Field::zeros(grid);
        let nz = sobolev_norms(&z).unwrap();
        assert_eq!(nz.l2, 0.0);
        assert_eq!(nz.h3, 0.0);

        let a = Complex64::new(1.5, -2.0);
        let c = Field::from_fn(grid, |_| a);
        let nc = sobolev_norms(&c).unwrap();
        let expect = a.norm() * grid.volume().sqrt();
        assert!((nc.l2 - expect).abs() < 1e-12 * expect);
        assert!(nc.grad_l2 < 1e-10 * expect);

        // mode a*exp(i 2 pi m.x / L)
        let m = [2.0f64, 1.0];
        let f = Field::from_fn(grid, |x| {
            a * Complex64::new(
                0.0,
                2.0 * PI * (m[0] * x[0] + m[1] * x[1]) / grid.length,
            )
            .exp()
        });
        let nf = sobolev_norms(&f).unwrap();
        let m_abs = (m[0] * m[0] + m[1] * m[1]).sqrt();
        let expect_grad = a.norm() * grid.volume().sqrt() * 2.0 * PI * m_abs / grid.length;
        assert!((nf.grad_l2 - expect_grad).abs() < 1e-10 * expect_grad);
    }

    #[test]
    fn grad_norm_matches_laplacian_pairing() {
        let grid = make_grid(3, 8, 5.0).unwrap();
        let f = random_field(grid, 11);
        let lap = from_spectral(&apply_laplacian(&to_spectral(&f).unwrap())).unwrap();
        let pairing = -l2_inner(&f, &lap).unwrap().re;
        let grad2 = sobolev_norms(&f).unwrap().grad_l2.powi(2);
        assert!((pairing - grad2).abs() < 1e-12 * grad2);
    }

    #[test]
    fn lp_norm_examples() {
        let grid = make_grid(2, 16, 3.0).unwrap();
        let a = Complex64::new(0.0, -2.5);
        let f = Field::from_fn(grid, |_| a);
        for &p in &[1.0f64, 2.0, 4.0] {
            let expect = a.norm() * grid.length.powf(2.0 / p);
            assert!((lp_norm(&f, p).unwrap() - expect).abs() < 1e-12 * expect);
        }
        assert_eq!(lp_norm(&Field::zeros(grid), 3.0).unwrap(), 0.0);
        assert!(matches!(lp_norm(&f, 0.5), Err(GridError::InvalidExponent(_))));

        // 1-d gaussian exp(-x^2) on L = 40: ||.||_2 = (pi/2)^(1/4)
        let grid = make_grid(1, 512, 40.0).unwrap();
        let g = Field::from_fn(grid, |x| {
            let r = x[0] - 20.0;
            Complex64::new((-r * r).exp(), 0.0)
        });
        let expect = (PI / 2.0).powf(0.25);
        assert!((lp_norm(&g, 2.0).unwrap() - expect).abs() < 1e-10);
        assert!((sobolev_norms(&g).unwrap().l2 - lp_norm(&g, 2.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn pad_truncate_roundtrip() {
        let grid = make_grid(2, 8, 2.0).unwrap();
        let f = random_field(grid, 3);
        let g = to_spectral(&f).unwrap();
        let fine = pad_spectrum(&g.coeffs, 2, 8, 16);
        let back = truncate_spectrum(&fine, 2, 8, 16);
        assert_eq!(g.coeffs, back);
        // padded inverse transform interpolates: coarse samples unchanged
        let mut vals = fine.clone();
        fft::inverse_cube(&mut vals, 2, 16);
        for i in 0..8 {
            for j in 0..8 {
                let coarse = f.values[i * 8 + j];
                let interp = vals[(2 * i) * 16 + 2 * j];
                assert!((coarse - interp).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn min_image_wraps() {
        assert!((min_image(39.0, 40.0) + 1.0).abs() < 1e-12);
        assert!((min_image(-39.0, 40.0) - 1.0).abs() < 1e-12);
        assert!((min_image(3.0, 40.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_rejected() {
        let grid = make_grid(1, 8, 1.0).unwrap();
        let mut vals = vec![Complex64::default(); 8];
        vals[3] = Complex64::new(f64::NAN, 0.0);
        assert_eq!(Field::new(grid, vals.clone()), Err(GridError::NonFinite));
        let f = Field { grid, values: vals };
        assert_eq!(to_spectral(&f).unwrap_err(), GridError::NonFinite);
    }
}
