//! Complex FFT used by the spectrum analysis.
//!
//! Power-of-two lengths run through an iterative radix-2 Cooley-Tukey
//! transform; every other length is handled by Bluestein's chirp-z
//! algorithm, which re-expresses the DFT as a circular convolution of
//! power-of-two size. The transform is unnormalized and forward-only.

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    pub fn mul(self, other: Complex) -> Complex {
        Complex {
            re: self.re * other.re - self.im * other.im,
            im: self.re * other.im + self.im * other.re,
        }
    }

    pub fn conj(self) -> Complex {
        Complex {
            re: self.re,
            im: -self.im,
        }
    }

    pub fn add(self, other: Complex) -> Complex {
        Complex {
            re: self.re + other.re,
            im: self.im + other.im,
        }
    }

    pub fn sub(self, other: Complex) -> Complex {
        Complex {
            re: self.re - other.re,
            im: self.im - other.im,
        }
    }

    pub fn scale(self, s: f64) -> Complex {
        Complex {
            re: self.re * s,
            im: self.im * s,
        }
    }

    pub fn norm(self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Forward DFT of `input`, any length >= 1. Unnormalized.
pub fn fft(input: &[Complex]) -> Vec<Complex> {
    let n = input.len();
    if n <= 1 {
        return input.to_vec();
    }
    if n.is_power_of_two() {
        let mut buf = input.to_vec();
        radix2_in_place(&mut buf, false);
        buf
    } else {
        bluestein(input)
    }
}

/// Inverse DFT (unnormalized forward convention: includes the 1/N factor).
fn ifft(input: &[Complex]) -> Vec<Complex> {
    let n = input.len();
    let mut buf = input.to_vec();
    if n > 1 {
        radix2_in_place(&mut buf, true);
    }
    let inv = 1.0 / n as f64;
    for v in &mut buf {
        *v = v.scale(inv);
    }
    buf
}

fn radix2_in_place(buf: &mut [Complex], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());

    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }

    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let wlen = Complex::new(ang.cos(), ang.sin());
        let mut start = 0;
        while start < n {
            let mut w = Complex::new(1.0, 0.0);
            for k in 0..len / 2 {
                let even = buf[start + k];
                let odd = buf[start + k + len / 2].mul(w);
                buf[start + k] = even.add(odd);
                buf[start + k + len / 2] = even.sub(odd);
                w = w.mul(wlen);
            }
            start += len;
        }
        len <<= 1;
    }
}

/// Chirp-z: X[k] = conj(w[k]) * sum_j x[j] w[j] * w*[k-j] with
/// w[m] = exp(-i pi m^2 / n), evaluated as a circular convolution.
fn bluestein(input: &[Complex]) -> Vec<Complex> {
    let n = input.len();
    let m = (2 * n - 1).next_power_of_two();

    // Chirp table; m^2 mod 2n keeps the angle argument small and exact.
    let chirp: Vec<Complex> = (0..n)
        .map(|i| {
            let j = (i * i) % (2 * n);
            let ang = -PI * j as f64 / n as f64;
            Complex::new(ang.cos(), ang.sin())
        })
        .collect();

    let mut a = vec![Complex::ZERO; m];
    for i in 0..n {
        a[i] = input[i].mul(chirp[i]);
    }
    let mut b = vec![Complex::ZERO; m];
    b[0] = chirp[0].conj();
    for i in 1..n {
        let v = chirp[i].conj();
        b[i] = v;
        b[m - i] = v;
    }

    let fa = {
        let mut buf = a;
        radix2_in_place(&mut buf, false);
        buf
    };
    let fb = {
        let mut buf = b;
        radix2_in_place(&mut buf, false);
        buf
    };
    let prod: Vec<Complex> = fa.iter().zip(fb.iter()).map(|(x, y)| x.mul(*y)).collect();
    let conv = ifft(&prod);

    (0..n).map(|i| conv[i].mul(chirp[i])).collect()
}
