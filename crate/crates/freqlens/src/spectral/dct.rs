//! Orthonormal 2D DCT-II, applied per channel.

use crate::error::{Error, Result};
use crate::image::Image;

/// Per-channel 2D DCT coefficients of an image, same C×H×W layout.
///
/// Entry (u,v) of a channel is the coefficient of the u-th vertical and
/// v-th horizontal cosine basis function; (0,0) is the DC component.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2D {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Spectrum2D {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape_mismatch(
                format!("{} coefficients", channels * height * width),
                format!("{}", data.len()),
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, u: usize, v: usize) -> f64 {
        self.data[(c * self.height + u) * self.width + v]
    }

    #[inline]
    pub fn set(&mut self, c: usize, u: usize, v: usize, value: f64) {
        self.data[(c * self.height + u) * self.width + v] = value;
    }

    /// Sum of squared coefficients (spectral energy).
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Row k of the orthonormal DCT-II matrix for size n:
/// T[k][i] = s_k · cos(π (2i+1) k / 2n), s_0 = √(1/n), s_k = √(2/n).
fn dct_matrix(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * n];
    for k in 0..n {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            t[k * n + i] =
                scale * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    t
}

/// out = T · plane (apply along columns): out[u][x] = Σ_y T[u][y] plane[y][x]
fn apply_rows(t: &[f64], n_out: usize, plane: &[f64], h: usize, w: usize, out: &mut [f64]) {
    debug_assert_eq!(n_out, h);
    for u in 0..n_out {
        for x in 0..w {
            let mut acc = 0.0;
            for y in 0..h {
                acc += t[u * h + y] * plane[y * w + x];
            }
            out[u * w + x] = acc;
        }
    }
}

/// out = plane · Tᵀ (apply along rows): out[y][v] = Σ_x plane[y][x] T[v][x]
fn apply_cols(t: &[f64], plane: &[f64], h: usize, w: usize, out: &mut [f64]) {
    for y in 0..h {
        for v in 0..w {
            let mut acc = 0.0;
            for x in 0..w {
                acc += plane[y * w + x] * t[v * w + x];
            }
            out[y * w + v] = acc;
        }
    }
}

/// out = Tᵀ · plane: out[y][x] = Σ_u T[u][y] plane[u][x]
fn apply_rows_transposed(t: &[f64], plane: &[f64], h: usize, w: usize, out: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for u in 0..h {
                acc += t[u * h + y] * plane[u * w + x];
            }
            out[y * w + x] = acc;
        }
    }
}

/// out = plane · T: out[y][x] = Σ_v plane[y][v] T[v][x]
fn apply_cols_transposed(t: &[f64], plane: &[f64], h: usize, w: usize, out: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for v in 0..w {
                acc += plane[y * w + v] * t[v * w + x];
            }
            out[y * w + x] = acc;
        }
    }
}

/// Orthonormal separable 2D DCT-II of every channel: S = T_H · X · T_Wᵀ.
pub fn dct2_forward(img: &Image) -> Result<Spectrum2D> {
    let (c, h, w) = img.dims();
    let t_h = dct_matrix(h);
    let t_w = dct_matrix(w);
    let plane = h * w;
    let mut data = vec![0.0; c * plane];
    let mut tmp = vec![0.0; plane];
    for ch in 0..c {
        apply_rows(&t_h, h, img.channel(ch), h, w, &mut tmp);
        apply_cols(&t_w, &tmp, h, w, &mut data[ch * plane..(ch + 1) * plane]);
    }
    Spectrum2D::new(c, h, w, data)
}

/// Inverse of [`dct2_forward`]: X = T_Hᵀ · S · T_W (the exact adjoint).
pub fn dct2_inverse(spectrum: &Spectrum2D) -> Result<Image> {
    let (c, h, w) = spectrum.dims();
    if c == 0 || h == 0 || w == 0 {
        return Err(Error::EmptyInput("dct2_inverse"));
    }
    let t_h = dct_matrix(h);
    let t_w = dct_matrix(w);
    let plane = h * w;
    let mut data = vec![0.0; c * plane];
    let mut tmp = vec![0.0; plane];
    for ch in 0..c {
        let src = &spectrum.data()[ch * plane..(ch + 1) * plane];
        apply_rows_transposed(&t_h, src, h, w, &mut tmp);
        apply_cols_transposed(&t_w, &tmp, h, w, &mut data[ch * plane..(ch + 1) * plane]);
    }
    Image::new(c, h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_is_pure_dc() {
        // Orthonormal DC = Σ / √(H·W) = 16 / 4 = 4 for a 1×4×4 image of ones.
        let img = Image::constant(1, 4, 4, 1.0);
        let spec = dct2_forward(&img).unwrap();
        assert!((spec.get(0, 0, 0) - 4.0).abs() < 1e-12);
        for u in 0..4 {
            for v in 0..4 {
                if (u, v) != (0, 0) {
                    assert!(spec.get(0, u, v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_image_has_zero_spectrum() {
        let img = Image::zeros(2, 3, 5);
        let spec = dct2_forward(&img).unwrap();
        assert!(spec.data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn round_trip_recovers_input() {
        let mut state = 0x12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let data: Vec<f64> = (0..3 * 8 * 8).map(|_| next()).collect();
        let img = Image::new(3, 8, 8, data).unwrap();
        let back = dct2_inverse(&dct2_forward(&img).unwrap()).unwrap();
        let max_err = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-10, "max abs error {max_err}");
    }

    #[test]
    fn parseval_energy_is_preserved() {
        let data: Vec<f64> = (0..2 * 6 * 7).map(|i| ((i * 37 % 101) as f64) / 101.0).collect();
        let img = Image::new(2, 6, 7, data).unwrap();
        let pixel_energy: f64 = img.data().iter().map(|v| v * v).sum();
        let spec_energy = dct2_forward(&img).unwrap().energy();
        assert!((pixel_energy - spec_energy).abs() / pixel_energy < 1e-8);
    }

    #[test]
    fn transform_is_linear() {
        let a: Vec<f64> = (0..16).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).cos()).collect();
        let img_a = Image::new(1, 4, 4, a.clone()).unwrap();
        let img_b = Image::new(1, 4, 4, b.clone()).unwrap();
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.5 * x - 0.3 * y).collect();
        let img_c = Image::new(1, 4, 4, combo).unwrap();

        let sa = dct2_forward(&img_a).unwrap();
        let sb = dct2_forward(&img_b).unwrap();
        let sc = dct2_forward(&img_c).unwrap();
        for i in 0..16 {
            let expect = 2.5 * sa.data()[i] - 0.3 * sb.data()[i];
            assert!((sc.data()[i] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn single_pixel_image_is_identity() {
        let img = Image::constant(1, 1, 1, 0.42);
        let spec = dct2_forward(&img).unwrap();
        assert!((spec.get(0, 0, 0) - 0.42).abs() < 1e-15);
        let back = dct2_inverse(&spec).unwrap();
        assert!((back.get(0, 0, 0) - 0.42).abs() < 1e-15);
    }
}
