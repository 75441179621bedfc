//! Iterative radix-2 Cooley-Tukey FFT over split real/imaginary buffers.

use std::f64::consts::PI;

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// In-place forward (`inverse = false`) or unnormalised inverse transform.
/// Buffer lengths must be equal powers of two.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    assert_eq!(n, im.len());
    assert!(n.is_power_of_two(), "fft length {n} is not a power of two");
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        for k in 0..half {
            let (wi, wr) = (step * k as f64).sin_cos();
            let mut start = 0;
            while start < n {
                let a = start + k;
                let b = a + half;
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                start += len;
            }
        }
        len <<= 1;
    }
}

/// One-sided magnitudes `|X_k|`, `k = 0..=n/2`, of a real frame zero-padded
/// to `n` (a power of two).
pub fn rfft_magnitude(frame: &[f64], n: usize) -> Vec<f64> {
    let (re, im) = rfft(frame, n);
    re.iter()
        .zip(&im)
        .take(n / 2 + 1)
        .map(|(r, i)| r.hypot(*i))
        .collect()
}

pub fn rfft(frame: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut re = vec![0.0; n];
    re[..frame.len()].copy_from_slice(frame);
    let mut im = vec![0.0; n];
    fft_in_place(&mut re, &mut im, false);
    (re, im)
}
