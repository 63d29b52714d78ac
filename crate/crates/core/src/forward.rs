//! Forward model: free-space Green's functions, the multi-frequency sensing
//! matrix and synthetic array data.
//!
//! Conventions:
//! - Points are 3D; planar setups put everything in `z = 0`.
//! - The image grid lies in the plane `z = origin[2]`. Column index runs along
//!   `x` (cross-range, parallel to the array), row index along `y` (range).
//!   Pixel `k` sits at row `k / cols`, column `k % cols` (row-major).
//! - Data vectors stack receivers fastest and frequencies slowest:
//!   entry `l * N + r` holds receiver `r` at frequency `l`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, CMatrix, C64};
use crate::rng::{complex_gaussian, rng_from_seed};

pub type Point = [f64; 3];

/// Sentinel SNR meaning "leave the data untouched".
pub const NO_NOISE: f64 = f64::INFINITY;

fn dist(x: &Point, y: &Point) -> f64 {
    let dx = x[0] - y[0];
    let dy = x[1] - y[1];
    let dz = x[2] - y[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    pub origin: Point,
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
}

impl ImageGrid {
    /// Grid of `rows x cols` nodes whose center node sits at `center`.
    pub fn centered(center: Point, rows: usize, cols: usize, spacing: f64) -> Self {
        let origin = [
            center[0] - (cols as f64 - 1.0) / 2.0 * spacing,
            center[1] - (rows as f64 - 1.0) / 2.0 * spacing,
            center[2],
        ];
        Self {
            origin,
            rows,
            cols,
            spacing,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn row_col(&self, k: usize) -> (usize, usize) {
        (k / self.cols, k % self.cols)
    }

    pub fn position(&self, k: usize) -> Point {
        let (row, col) = self.row_col(k);
        [
            self.origin[0] + col as f64 * self.spacing,
            self.origin[1] + row as f64 * self.spacing,
            self.origin[2],
        ]
    }

    /// Whether `p` falls inside the window covered by the pixels.
    pub fn contains(&self, p: &Point) -> bool {
        let h = self.spacing / 2.0;
        let x1 = self.origin[0] + (self.cols as f64 - 1.0) * self.spacing;
        let y1 = self.origin[1] + (self.rows as f64 - 1.0) * self.spacing;
        p[0] >= self.origin[0] - h
            && p[0] <= x1 + h
            && p[1] >= self.origin[1] - h
            && p[1] <= y1 + h
            && (p[2] - self.origin[2]).abs() <= h
    }
}

/// Array geometry, frequencies and image window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagingConfig {
    pub receivers: Vec<Point>,
    /// Angular frequencies, increasing.
    pub frequencies: Vec<f64>,
    pub wave_speed: f64,
    pub grid: ImageGrid,
    /// Array size `a`.
    pub aperture: f64,
    /// Distance `L` from the array to the image window center.
    pub range: f64,
}

/// Ratio-based planar setup in units of the central wavelength (`lambda0 =
/// c0 = 1`, so `omega0 = 2 pi`).
///
/// The array is a line of equispaced receivers along `x` centered at the
/// origin; the image window is centered at `(0, range)`. Frequencies are
/// equispaced over `[omega0 - B, omega0 + B]` with `2B = bandwidth_ratio *
/// omega0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarSetup {
    pub receivers: usize,
    pub frequencies: usize,
    pub aperture_ratio: f64,
    pub bandwidth_ratio: f64,
    pub range: f64,
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
}

impl PlanarSetup {
    pub fn build(&self) -> Result<ImagingConfig> {
        if self.receivers == 0 || self.frequencies == 0 {
            return Err(Error::InvalidConfig(
                "need at least one receiver and one frequency".into(),
            ));
        }
        if !(self.bandwidth_ratio >= 0.0 && self.bandwidth_ratio < 2.0) {
            return Err(Error::InvalidConfig(format!(
                "bandwidth ratio {} must lie in [0, 2)",
                self.bandwidth_ratio
            )));
        }
        if !(self.range > 0.0 && self.aperture_ratio >= 0.0) {
            return Err(Error::InvalidConfig("range must be positive".into()));
        }
        let aperture = self.aperture_ratio * self.range;
        let n = self.receivers;
        let receivers = (0..n)
            .map(|r| {
                let x = if n == 1 {
                    0.0
                } else {
                    -aperture / 2.0 + aperture * r as f64 / (n - 1) as f64
                };
                [x, 0.0, 0.0]
            })
            .collect();
        let omega0 = 2.0 * PI;
        let s = self.frequencies;
        let frequencies = (0..s)
            .map(|l| {
                let t = if s == 1 { 0.0 } else { l as f64 / (s - 1) as f64 - 0.5 };
                omega0 * (1.0 + self.bandwidth_ratio * t)
            })
            .collect();
        let config = ImagingConfig {
            receivers,
            frequencies,
            wave_speed: 1.0,
            grid: ImageGrid::centered([0.0, self.range, 0.0], self.rows, self.cols, self.spacing),
            aperture,
            range: self.range,
        };
        config.validate()?;
        Ok(config)
    }
}

impl ImagingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.receivers.is_empty() {
            return bad("no receivers".into());
        }
        if self.frequencies.is_empty() {
            return bad("no frequencies".into());
        }
        if self.grid.is_empty() {
            return bad("empty image grid".into());
        }
        if let Some(w) = self.frequencies.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return bad(format!("frequency {w} is not positive"));
        }
        if !(self.grid.spacing.is_finite() && self.grid.spacing > 0.0) {
            return bad(format!("grid spacing {} is not positive", self.grid.spacing));
        }
        if !(self.wave_speed.is_finite() && self.wave_speed > 0.0) {
            return bad(format!("wave speed {} is not positive", self.wave_speed));
        }
        Ok(())
    }

    pub fn n_receivers(&self) -> usize {
        self.receivers.len()
    }

    pub fn n_frequencies(&self) -> usize {
        self.frequencies.len()
    }

    /// `N * S`.
    pub fn data_len(&self) -> usize {
        self.receivers.len() * self.frequencies.len()
    }
}

/// `exp(i omega |x - y| / c0) / (4 pi |x - y|)`.
pub fn green_function(x: &Point, y: &Point, omega: f64, c0: f64) -> Result<C64> {
    let r = dist(x, y);
    if r == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok(C64::from_polar(1.0 / (4.0 * PI * r), omega * r / c0))
}

/// Array response to a unit point source at `y`, one entry per receiver.
pub fn green_vector(y: &Point, omega: f64, config: &ImagingConfig) -> Result<Vec<C64>> {
    config
        .receivers
        .iter()
        .enumerate()
        .map(|(r, x)| {
            green_function(x, y, omega, config.wave_speed)
                .map_err(|_| Error::OnReceiver { receiver: r })
        })
        .collect()
}

/// Column-normalized sensing matrix with the norms it was scaled by.
#[derive(Clone, Debug)]
pub struct SensingMatrix {
    pub matrix: CMatrix,
    pub column_norms: Vec<f64>,
}

impl SensingMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    /// Maps physical pixel amplitudes to the unknowns of the normalized
    /// system: `rho_k * |unnormalized column k|`.
    pub fn to_normalized(&self, physical: &[C64]) -> Vec<C64> {
        physical
            .iter()
            .zip(&self.column_norms)
            .map(|(a, n)| a * n)
            .collect()
    }

    pub fn to_physical(&self, normalized: &[C64]) -> Vec<C64> {
        normalized
            .iter()
            .zip(&self.column_norms)
            .map(|(a, n)| a / n)
            .collect()
    }
}

/// Column `k` stacks the Green's vectors of pixel `k` over all frequencies and
/// is then scaled to unit l2 norm.
pub fn build_sensing_matrix(config: &ImagingConfig) -> Result<SensingMatrix> {
    config.validate()?;
    let rows = config.data_len();
    let k = config.grid.len();
    let n = config.n_receivers();
    let mut data = vec![C64::new(0.0, 0.0); rows * k];
    let norms: Vec<Result<f64>> = data
        .par_chunks_mut(rows)
        .enumerate()
        .map(|(pixel, col)| {
            let y = config.grid.position(pixel);
            for (l, &omega) in config.frequencies.iter().enumerate() {
                for (r, x) in config.receivers.iter().enumerate() {
                    col[l * n + r] = green_function(x, &y, omega, config.wave_speed)
                        .map_err(|_| Error::PixelOnReceiver { pixel, receiver: r })?;
                }
            }
            let norm = norm2(col);
            col.iter_mut().for_each(|v| *v /= norm);
            Ok(norm)
        })
        .collect();
    let column_norms = norms.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SensingMatrix {
        matrix: CMatrix::from_col_major(rows, k, data)?,
        column_norms,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSource {
    pub position: Point,
    pub amplitude: C64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceScene {
    pub sources: Vec<PointSource>,
}

impl SourceScene {
    pub fn validate(&self, grid: &ImageGrid) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::InvalidConfig("scene has no sources".into()));
        }
        for (j, s) in self.sources.iter().enumerate() {
            if s.amplitude == C64::new(0.0, 0.0) || !s.amplitude.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "source {j} has zero or non-finite amplitude"
                )));
            }
            if !grid.contains(&s.position) {
                return Err(Error::InvalidConfig(format!(
                    "source {j} at {:?} lies outside the image window",
                    s.position
                )));
            }
        }
        Ok(())
    }
}

/// Measurements, receiver index fastest, frequency index slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct DataVector {
    pub values: Vec<C64>,
}

impl DataVector {
    pub fn norm(&self) -> f64 {
        norm2(&self.values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl AsRef<[C64]> for DataVector {
    fn as_ref(&self) -> &[C64] {
        &self.values
    }
}

/// Array data `b(x_r, omega_l) = sum_j alpha_j G(x_r, z_j; omega_l)` at the
/// true source positions. No global prefactor: the normalized matrix absorbs
/// scaling through [`SensingMatrix::to_normalized`].
pub fn synthesize_data(scene: &SourceScene, config: &ImagingConfig) -> Result<DataVector> {
    let n = config.n_receivers();
    let mut values = vec![C64::new(0.0, 0.0); config.data_len()];
    for (j, s) in scene.sources.iter().enumerate() {
        for (l, &omega) in config.frequencies.iter().enumerate() {
            for (r, x) in config.receivers.iter().enumerate() {
                let g = green_function(x, &s.position, omega, config.wave_speed).map_err(|_| {
                    Error::SourceOnReceiver {
                        source_index: j,
                        receiver: r,
                    }
                })?;
                values[l * n + r] += s.amplitude * g;
            }
        }
    }
    Ok(DataVector { values })
}

/// True source vector on the grid: each amplitude goes to the node nearest in
/// the l-infinity metric, ties to the lowest row-major index. Sources sharing
/// a node add up.
pub fn nearest_grid_support(scene: &SourceScene, config: &ImagingConfig) -> Result<Vec<C64>> {
    let grid = &config.grid;
    let mut rho = vec![C64::new(0.0, 0.0); grid.len()];
    for (j, s) in scene.sources.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..grid.len() {
            let p = grid.position(k);
            let d = (0..3).map(|i| (p[i] - s.position[i]).abs()).fold(0.0, f64::max);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
        match best {
            Some((k, d)) if d < grid.spacing => rho[k] += s.amplitude,
            _ => return Err(Error::SourceOffGrid { source_index: j }),
        }
    }
    Ok(rho)
}

/// Adds circular complex Gaussian noise rescaled so that
/// `20 log10(|b| / |noise|) == snr_db`. `snr_db = +inf` returns `b` as is.
pub fn add_noise(b: &DataVector, snr_db: f64, seed: u64) -> Result<DataVector> {
    if snr_db == f64::INFINITY {
        return Ok(b.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidConfig(format!("SNR {snr_db} dB is not finite")));
    }
    let nb = b.norm();
    if nb == 0.0 {
        return Err(Error::Precondition("cannot set an SNR on zero data".into()));
    }
    let mut rng = rng_from_seed(seed);
    let noise = complex_gaussian(&mut rng, b.len(), 1.0);
    let scale = nb * 10f64.powf(-snr_db / 20.0) / norm2(&noise);
    Ok(DataVector {
        values: b
            .values
            .iter()
            .zip(&noise)
            .map(|(x, e)| x + e * scale)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_config(n: usize, omegas: &[f64], rows: usize, cols: usize) -> ImagingConfig {
        ImagingConfig {
            receivers: (0..n).map(|r| [r as f64 - (n as f64 - 1.0) / 2.0, 0.0, 0.0]).collect(),
            frequencies: omegas.to_vec(),
            wave_speed: 1.0,
            grid: ImageGrid::centered([0.0, 10.0, 0.0], rows, cols, 0.5),
            aperture: n as f64 - 1.0,
            range: 10.0,
        }
    }

    #[test]
    fn green_zero_frequency_limit() {
        let g = green_function(&[0.0; 3], &[1.0, 0.0, 0.0], 0.0, 1.0).unwrap();
        assert!((g.re - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert_eq!(g.im, 0.0);
        assert!((g.re - 0.0795775).abs() < 1e-7);
    }

    #[test]
    fn green_full_wavelength_wraps_phase() {
        let lambda = 0.7;
        let g = green_function(&[0.0; 3], &[0.0, lambda, 0.0], 2.0 * PI / lambda, 1.0).unwrap();
        assert!((g.norm() - 1.0 / (4.0 * PI * lambda)).abs() < 1e-14);
        assert!(g.arg().abs() < 1e-12);
    }

    #[test]
    fn green_three_four_five() {
        // |x - y| = 5, omega / c0 = 1: magnitude 1/(20 pi), phase 5 rad
        let g = green_function(&[0.0; 3], &[3.0, 4.0, 0.0], 2.0, 2.0).unwrap();
        let want = C64::from_polar(1.0 / (20.0 * PI), 5.0);
        assert!((g - want).norm() < 1e-16);
        assert!((g.norm() - 0.015915494309189534).abs() < 1e-16);
    }

    #[test]
    fn green_coincident_points_is_an_error() {
        assert!(matches!(
            green_function(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 1.0, 1.0),
            Err(Error::CoincidentPoints)
        ));
    }

    #[test]
    fn green_reciprocity_is_exact() {
        let x = [0.3, -1.7, 0.2];
        let y = [5.1, 20.25, -0.4];
        assert_eq!(
            green_function(&x, &y, 6.1, 1.3).unwrap(),
            green_function(&y, &x, 6.1, 1.3).unwrap()
        );
    }

    #[test]
    fn green_vector_single_receiver_and_symmetry() {
        let cfg = line_config(1, &[3.0], 3, 3);
        let y = [0.2, 9.0, 0.0];
        let g = green_vector(&y, 3.0, &cfg).unwrap();
        assert_eq!(g, vec![green_function(&cfg.receivers[0], &y, 3.0, 1.0).unwrap()]);

        let cfg = line_config(2, &[3.0], 3, 3);
        let g = green_vector(&[0.0, 7.0, 0.0], 3.0, &cfg).unwrap();
        assert!((g[0].norm() - g[1].norm()).abs() < 1e-16);
    }

    #[test]
    fn green_vector_three_receivers_matches_elementwise() {
        let cfg = line_config(3, &[4.0], 3, 3);
        let y = [0.7, 8.2, 0.0];
        let g = green_vector(&y, 4.0, &cfg).unwrap();
        for (r, x) in cfg.receivers.iter().enumerate() {
            let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
            let want = C64::new((4.0 * d).cos(), (4.0 * d).sin()) / (4.0 * PI * d);
            assert!((g[r] - want).norm() < 1e-15);
        }
    }

    #[test]
    fn green_vector_reports_receiver() {
        let cfg = line_config(3, &[4.0], 3, 3);
        let on = cfg.receivers[2];
        assert!(matches!(
            green_vector(&on, 4.0, &cfg),
            Err(Error::OnReceiver { receiver: 2 })
        ));
    }

    #[test]
    fn sensing_matrix_has_unit_columns_and_block_layout() {
        let cfg = line_config(4, &[5.0, 6.0, 7.0], 5, 6);
        let a = build_sensing_matrix(&cfg).unwrap();
        assert_eq!((a.rows(), a.cols()), (12, 30));
        for n in a.matrix.column_norms() {
            assert!((n - 1.0).abs() <= 1e-12);
        }
        let k = 17;
        let y = cfg.grid.position(k);
        for (l, &w) in cfg.frequencies.iter().enumerate() {
            let g = green_vector(&y, w, &cfg).unwrap();
            for r in 0..4 {
                let got = a.matrix.get(l * 4 + r, k) * a.column_norms[k];
                assert!((got - g[r]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn single_pixel_matrix_is_normalized_green_vector() {
        let mut cfg = line_config(3, &[5.0, 6.0], 1, 1);
        cfg.grid = ImageGrid::centered([0.1, 4.0, 0.0], 1, 1, 1.0);
        let a = build_sensing_matrix(&cfg).unwrap();
        let mut stacked = green_vector(&[0.1, 4.0, 0.0], 5.0, &cfg).unwrap();
        stacked.extend(green_vector(&[0.1, 4.0, 0.0], 6.0, &cfg).unwrap());
        let n = norm2(&stacked);
        for (got, want) in a.matrix.column(0).iter().zip(&stacked) {
            assert!((got - want / n).norm() < 1e-15);
        }
    }

    #[test]
    fn pixel_on_receiver_is_reported() {
        let mut cfg = line_config(2, &[5.0], 2, 2);
        cfg.grid = ImageGrid {
            origin: [0.0, 0.0, 0.0],
            rows: 2,
            cols: 2,
            spacing: 0.5,
        };
        cfg.receivers = vec![[0.0, 5.0, 0.0], [0.5, 0.5, 0.0]];
        assert!(matches!(
            build_sensing_matrix(&cfg),
            Err(Error::PixelOnReceiver { pixel: 3, receiver: 1 })
        ));
    }

    #[test]
    fn high_resolution_shape() {
        let cfg = PlanarSetup {
            receivers: 25,
            frequencies: 25,
            aperture_ratio: 0.5,
            bandwidth_ratio: 0.5,
            range: 60.0,
            rows: 61,
            cols: 61,
            spacing: 0.5,
        }
        .build()
        .unwrap();
        assert_eq!(cfg.data_len(), 625);
        assert_eq!(cfg.grid.len(), 3721);
        let a = build_sensing_matrix(&cfg).unwrap();
        assert_eq!((a.rows(), a.cols()), (625, 3721));
        let worst = a
            .matrix
            .column_norms()
            .into_iter()
            .map(|n| (n - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-12);
    }

    #[test]
    fn on_grid_source_data_is_scaled_column() {
        let cfg = line_config(3, &[5.0, 6.5], 4, 4);
        let a = build_sensing_matrix(&cfg).unwrap();
        let k = 9;
        let alpha = C64::new(0.4, -1.3);
        let scene = SourceScene {
            sources: vec![PointSource {
                position: cfg.grid.position(k),
                amplitude: alpha,
            }],
        };
        let b = synthesize_data(&scene, &cfg).unwrap();
        for (i, v) in b.values.iter().enumerate() {
            let want = alpha * a.column_norms[k] * a.matrix.get(i, k);
            assert!((v - want).norm() < 1e-15 * (1.0 + want.norm()));
        }
    }

    #[test]
    fn opposite_sources_cancel() {
        let cfg = line_config(3, &[5.0], 4, 4);
        let p = [0.13, 10.2, 0.0];
        let scene = SourceScene {
            sources: vec![
                PointSource {
                    position: p,
                    amplitude: C64::new(1.5, 0.5),
                },
                PointSource {
                    position: p,
                    amplitude: C64::new(-1.5, -0.5),
                },
            ],
        };
        let b = synthesize_data(&scene, &cfg).unwrap();
        assert!(b.values.iter().all(|v| *v == C64::new(0.0, 0.0)));
    }

    #[test]
    fn off_grid_data_matches_double_loop() {
        let cfg = line_config(3, &[5.0, 7.0], 4, 4);
        let scene = SourceScene {
            sources: vec![
                PointSource {
                    position: [0.11, 9.63, 0.0],
                    amplitude: C64::new(1.0, 0.5),
                },
                PointSource {
                    position: [-0.47, 10.31, 0.0],
                    amplitude: C64::new(-0.3, 2.0),
                },
            ],
        };
        let b = synthesize_data(&scene, &cfg).unwrap();
        for (l, &w) in cfg.frequencies.iter().enumerate() {
            for (r, x) in cfg.receivers.iter().enumerate() {
                let mut want = C64::new(0.0, 0.0);
                for s in &scene.sources {
                    let d = ((x[0] - s.position[0]).powi(2) + (x[1] - s.position[1]).powi(2)).sqrt();
                    want += s.amplitude * C64::new((w * d).cos(), (w * d).sin()) / (4.0 * PI * d);
                }
                assert!((b.values[l * 3 + r] - want).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn source_on_receiver_is_reported() {
        let cfg = line_config(3, &[5.0], 4, 4);
        let scene = SourceScene {
            sources: vec![PointSource {
                position: cfg.receivers[1],
                amplitude: C64::new(1.0, 0.0),
            }],
        };
        assert!(matches!(
            synthesize_data(&scene, &cfg),
            Err(Error::SourceOnReceiver { source_index: 0, receiver: 1 })
        ));
    }

    #[test]
    fn nearest_support_on_node_and_tie_break() {
        let mut cfg = line_config(1, &[5.0], 4, 4);
        cfg.grid = ImageGrid {
            origin: [0.0, 8.0, 0.0],
            rows: 4,
            cols: 4,
            spacing: 0.5,
        };
        let alpha = C64::new(2.0, -1.0);
        let on_node = SourceScene {
            sources: vec![PointSource {
                position: cfg.grid.position(6),
                amplitude: alpha,
            }],
        };
        let rho = nearest_grid_support(&on_node, &cfg).unwrap();
        assert_eq!(rho[6], alpha);
        assert_eq!(rho.iter().filter(|v| **v != C64::new(0.0, 0.0)).count(), 1);

        // center of the cell spanned by nodes 5, 6, 9, 10
        let center = SourceScene {
            sources: vec![PointSource {
                position: [0.75, 8.75, 0.0],
                amplitude: alpha,
            }],
        };
        let rho = nearest_grid_support(&center, &cfg).unwrap();
        assert_eq!(rho[5], alpha);
        assert_eq!(rho.iter().filter(|v| **v != C64::new(0.0, 0.0)).count(), 1);
    }

    #[test]
    fn nearest_support_rejects_far_sources() {
        let cfg = line_config(1, &[5.0], 4, 4);
        let scene = SourceScene {
            sources: vec![PointSource {
                position: [30.0, 10.0, 0.0],
                amplitude: C64::new(1.0, 0.0),
            }],
        };
        assert!(matches!(
            nearest_grid_support(&scene, &cfg),
            Err(Error::SourceOffGrid { source_index: 0 })
        ));
    }

    #[test]
    fn noise_sentinel_snr_zero_and_determinism() {
        let b = DataVector {
            values: (0..40).map(|i| C64::new(i as f64, 1.0 - i as f64 * 0.5)).collect(),
        };
        assert_eq!(add_noise(&b, NO_NOISE, 5).unwrap(), b);

        let noisy = add_noise(&b, 0.0, 5).unwrap();
        let dn = norm2(&crate::linalg::sub(&noisy.values, &b.values));
        assert!((dn - b.norm()).abs() <= 1e-12 * b.norm());

        let snr4 = add_noise(&b, 4.0, 5).unwrap();
        let dn = norm2(&crate::linalg::sub(&snr4.values, &b.values));
        assert!((20.0 * (b.norm() / dn).log10() - 4.0).abs() < 1e-12);

        assert_eq!(add_noise(&b, 4.0, 9).unwrap(), add_noise(&b, 4.0, 9).unwrap());
        assert_ne!(add_noise(&b, 4.0, 9).unwrap(), add_noise(&b, 4.0, 10).unwrap());
    }

    #[test]
    fn noise_rejects_bad_snr() {
        let b = DataVector {
            values: vec![C64::new(1.0, 0.0)],
        };
        assert!(add_noise(&b, f64::NAN, 1).is_err());
        assert!(add_noise(&b, f64::NEG_INFINITY, 1).is_err());
    }
}
