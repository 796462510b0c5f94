use super::Constraint;
use crate::num::{dft2_complex, fold_wavenumber, Direction};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Floor inside the spectrum logarithm; avoids -inf while the state is still
/// near-noise early in sampling.
pub const LOG_FLOOR: f64 = 1e-30;

/// How per-mode energy is read off the vorticity spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyConvention {
    /// Kinetic energy of the induced velocity: `|w_hat|^2 / |k|^2`.
    Velocity,
    /// Raw enstrophy-style binning: `|w_hat|^2`.
    Vorticity,
}

/// Scalar residual penalizing deviation from a power-law energy spectrum
/// slope over an inertial wavenumber band.
///
/// The residual is the variance of the compensated log-spectrum,
/// `h = (1/|B|) sum_k ((log E(k) + slope * log k) - mean)^2`, which pins the
/// slope while staying invariant to the total energy magnitude. The terminal
/// cost is `H = 0.5 h^2`.
#[derive(Debug, Clone)]
pub struct SpectrumConstraint {
    n: usize,
    band_lo: usize,
    band_hi: usize,
    slope: f64,
    convention: EnergyConvention,
}

impl SpectrumConstraint {
    /// Kolmogorov slope 5/3 on the inertial band `2 <= k <= 9`.
    pub fn kolmogorov(n: usize) -> Self {
        assert!(n.is_power_of_two(), "spectrum grid must be a power of two");
        assert!(n / 2 > 9, "band 2..=9 needs shells up to 9, so n >= 32");
        SpectrumConstraint {
            n,
            band_lo: 2,
            band_hi: 9,
            slope: 5.0 / 3.0,
            convention: EnergyConvention::Velocity,
        }
    }

    pub fn with_convention(mut self, convention: EnergyConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn band(&self) -> (usize, usize) {
        (self.band_lo, self.band_hi)
    }

    pub fn grid_side(&self) -> usize {
        self.n
    }

    /// Number of radial shells `[1, n/2)`.
    pub fn shell_count(&self) -> usize {
        self.n / 2 - 1
    }

    /// Shell index for a grid position, or None for the zero mode and modes at
    /// or beyond the Nyquist radius. Shell `k` collects `k <= |k'| < k + 1`.
    fn shell_of(&self, row: usize, col: usize) -> Option<(usize, f64)> {
        let kx = fold_wavenumber(row, self.n) as f64;
        let ky = fold_wavenumber(col, self.n) as f64;
        let mag = (kx * kx + ky * ky).sqrt();
        let shell = mag.floor() as usize;
        if shell >= 1 && shell < self.n / 2 {
            Some((shell, mag))
        } else {
            None
        }
    }

    fn mode_weight(&self, mag: f64) -> f64 {
        match self.convention {
            EnergyConvention::Velocity => 0.5 / (mag * mag),
            EnergyConvention::Vorticity => 0.5,
        }
    }

    /// Radially binned energy spectrum `E(k)` for shells `k = 1 .. n/2 - 1`
    /// (index 0 of the output is shell 1).
    pub fn energy_spectrum(&self, omega: &[f64]) -> Vec<f64> {
        let spectrum: Vec<Complex64> =
            omega.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let spectrum = dft2_complex(&spectrum, self.n, self.n, Direction::Forward)
            .expect("power-of-two grid");
        self.bin_energy(&spectrum)
    }

    /// Shell binning of an explicit spectrum; exposed so synthetic spectra can
    /// be checked without a transform.
    pub fn bin_energy(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut shells = vec![0.0; self.shell_count()];
        for row in 0..self.n {
            for col in 0..self.n {
                if let Some((shell, mag)) = self.shell_of(row, col) {
                    let e = spectrum[row * self.n + col].norm_sqr();
                    shells[shell - 1] += self.mode_weight(mag) * e;
                }
            }
        }
        shells
    }

    /// Compensated log-spectrum entries `log E(k) + slope * log k` over the
    /// band, with the log floored at `LOG_FLOOR`.
    fn compensated(&self, shells: &[f64]) -> Vec<f64> {
        (self.band_lo..=self.band_hi)
            .map(|k| shells[k - 1].max(LOG_FLOOR).ln() + self.slope * (k as f64).ln())
            .collect()
    }

    fn residual_scalar(&self, omega: &[f64]) -> f64 {
        let shells = self.energy_spectrum(omega);
        let comp = self.compensated(&shells);
        let m = comp.len() as f64;
        let mean = comp.iter().sum::<f64>() / m;
        comp.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / m
    }

    /// Gradient of the scalar residual with respect to the field, chained
    /// through the variance, the log, the shell binning and the transform
    /// (the adjoint of the unnormalized forward DFT is the unnormalized
    /// inverse transform).
    fn residual_grad(&self, omega: &[f64]) -> Vec<f64> {
        let spectrum: Vec<Complex64> =
            omega.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let spectrum = dft2_complex(&spectrum, self.n, self.n, Direction::Forward)
            .expect("power-of-two grid");
        let shells = self.bin_energy(&spectrum);
        let comp = self.compensated(&shells);
        let m = comp.len() as f64;
        let mean = comp.iter().sum::<f64>() / m;
        // dh/dE(k) = (2/m)(c_k - mean) / E(k) on the band (0 where floored).
        let mut shell_grad = vec![0.0; shells.len()];
        for (offset, k) in (self.band_lo..=self.band_hi).enumerate() {
            let e = shells[k - 1];
            if e > LOG_FLOOR {
                shell_grad[k - 1] = (2.0 / m) * (comp[offset] - mean) / e;
            }
        }
        // Cotangent in spectral space: dE/d + conj structure gives
        // 2 w(k) * shell_grad * spectrum entry.
        let mut cotangent = vec![Complex64::new(0.0, 0.0); self.n * self.n];
        for row in 0..self.n {
            for col in 0..self.n {
                if let Some((shell, mag)) = self.shell_of(row, col) {
                    let g = shell_grad[shell - 1];
                    if g != 0.0 {
                        cotangent[row * self.n + col] =
                            spectrum[row * self.n + col] * (2.0 * self.mode_weight(mag) * g);
                    }
                }
            }
        }
        let back = dft2_complex(&cotangent, self.n, self.n, Direction::Inverse)
            .expect("power-of-two grid");
        back.into_iter().map(|c| c.re).collect()
    }
}

impl Constraint for SpectrumConstraint {
    fn dim_in(&self) -> usize {
        self.n * self.n
    }

    fn dim_out(&self) -> usize {
        1
    }

    fn residual(&self, omega: &[f64]) -> Vec<f64> {
        vec![self.residual_scalar(omega)]
    }

    fn jvp(&self, omega: &[f64], v: &[f64]) -> Vec<f64> {
        // Scalar output: J v = <grad h, v>.
        let g = self.residual_grad(omega);
        vec![crate::num::dot(&g, v)]
    }

    fn vjp(&self, omega: &[f64], u: &[f64]) -> Vec<f64> {
        let mut g = self.residual_grad(omega);
        for gi in g.iter_mut() {
            *gi *= u[0];
        }
        g
    }
}
