use crate::error::NumError;
use crate::num::Matrix;
use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Unnormalized 2-D discrete Fourier transform of a real field via radix-2
/// Cooley-Tukey along rows then columns. Both directions are unnormalized, so
/// `inverse(forward(x)) = x * rows * cols`. Dimensions must be powers of two.
pub fn dft2(field: &Matrix, direction: Direction) -> Result<Vec<Complex64>, NumError> {
    let spectrum: Vec<Complex64> =
        field.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft2_complex(&spectrum, field.rows(), field.cols(), direction)
}

/// Unnormalized 2-D DFT of a complex row-major buffer.
pub fn dft2_complex(
    data: &[Complex64],
    rows: usize,
    cols: usize,
    direction: Direction,
) -> Result<Vec<Complex64>, NumError> {
    if data.len() != rows * cols {
        return Err(NumError::Shape(format!(
            "{} entries cannot fill a {rows}x{cols} field",
            data.len()
        )));
    }
    if !rows.is_power_of_two() || !cols.is_power_of_two() {
        return Err(NumError::Shape(format!(
            "dft2 requires power-of-two dimensions, got {rows}x{cols}"
        )));
    }
    let mut out = data.to_vec();
    let mut scratch = vec![Complex64::new(0.0, 0.0); rows.max(cols)];
    // Rows.
    for r in 0..rows {
        scratch[..cols].copy_from_slice(&out[r * cols..(r + 1) * cols]);
        fft_in_place(&mut scratch[..cols], direction);
        out[r * cols..(r + 1) * cols].copy_from_slice(&scratch[..cols]);
    }
    // Columns.
    for c in 0..cols {
        for r in 0..rows {
            scratch[r] = out[r * cols + c];
        }
        fft_in_place(&mut scratch[..rows], direction);
        for r in 0..rows {
            out[r * cols + c] = scratch[r];
        }
    }
    Ok(out)
}

fn fft_in_place(buf: &mut [Complex64], direction: Direction) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    let mut len = 2;
    while len <= n {
        let angle = sign * 2.0 * PI / len as f64;
        let wlen = Complex64::from_polar(1.0, angle);
        let mut start = 0;
        while start < n {
            let mut w = Complex64::new(1.0, 0.0);
            for off in 0..len / 2 {
                let even = buf[start + off];
                let odd = buf[start + off + len / 2] * w;
                buf[start + off] = even + odd;
                buf[start + off + len / 2] = even - odd;
                w *= wlen;
            }
            start += len;
        }
        len <<= 1;
    }
}

/// Folded integer wavenumber for index `i` on a length-`n` axis:
/// `0, 1, ..., n/2, -(n/2 - 1), ..., -1`.
pub fn fold_wavenumber(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Oracle: direct O(n^4) evaluation of the transform definition.
    fn naive_dft2(field: &Matrix) -> Vec<Complex64> {
        let (rows, cols) = (field.rows(), field.cols());
        let mut out = vec![Complex64::new(0.0, 0.0); rows * cols];
        for a in 0..rows {
            for b in 0..cols {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..rows {
                    for j in 0..cols {
                        let phase = -2.0 * PI
                            * ((a * i) as f64 / rows as f64 + (b * j) as f64 / cols as f64);
                        acc += field[(i, j)] * Complex64::from_polar(1.0, phase);
                    }
                }
                out[a * cols + b] = acc;
            }
        }
        out
    }

    #[test]
    fn zero_field_has_zero_spectrum() {
        let spec = dft2(&Matrix::zeros(4, 4), Direction::Forward).unwrap();
        assert!(spec.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn constant_field_is_pure_dc() {
        let n = 8;
        let c = 0.37;
        let mut field = Matrix::zeros(n, n);
        for v in field.data_mut().iter_mut() {
            *v = c;
        }
        let spec = dft2(&field, Direction::Forward).unwrap();
        assert!((spec[0].re - c * (n * n) as f64).abs() < 1e-9);
        assert!(spec[0].im.abs() < 1e-9);
        for entry in &spec[1..] {
            assert!(entry.norm() < 1e-9);
        }
    }

    #[test]
    fn matches_naive_dft_on_random_field() {
        let mut rng = crate::num::RngStream::new(3, 0);
        let mut field = Matrix::zeros(8, 8);
        for v in field.data_mut().iter_mut() {
            *v = rng.standard_normal();
        }
        let fast = dft2(&field, Direction::Forward).unwrap();
        let slow = naive_dft2(&field);
        for (f, s) in fast.iter().zip(&slow) {
            assert!((f - s).norm() < 1e-10, "fast {f} vs naive {s}");
        }
    }

    #[test]
    fn inverse_of_forward_scales_by_size() {
        let mut rng = crate::num::RngStream::new(4, 0);
        let (rows, cols) = (8, 16);
        let mut field = Matrix::zeros(rows, cols);
        for v in field.data_mut().iter_mut() {
            *v = rng.standard_normal();
        }
        let spec = dft2(&field, Direction::Forward).unwrap();
        let back = dft2_complex(&spec, rows, cols, Direction::Inverse).unwrap();
        let scale = (rows * cols) as f64;
        for (b, orig) in back.iter().zip(field.data()) {
            assert!((b.re - orig * scale).abs() < 1e-9);
            assert!(b.im.abs() < 1e-9);
        }
    }

    #[test]
    fn parseval_identity() {
        let mut rng = crate::num::RngStream::new(5, 0);
        let n = 16;
        let mut field = Matrix::zeros(n, n);
        for v in field.data_mut().iter_mut() {
            *v = rng.standard_normal();
        }
        let spec = dft2(&field, Direction::Forward).unwrap();
        let spatial: f64 = field.data().iter().map(|v| v * v).sum();
        let spectral: f64 =
            spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / (n * n) as f64;
        assert!((spatial - spectral).abs() <= 1e-9 * spatial);
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(dft2(&Matrix::zeros(6, 8), Direction::Forward).is_err());
    }

    #[test]
    fn wavenumber_folding() {
        let n = 8;
        let folded: Vec<i64> = (0..n).map(|i| fold_wavenumber(i, n)).collect();
        assert_eq!(folded, vec![0, 1, 2, 3, 4, -3, -2, -1]);
    }
}
