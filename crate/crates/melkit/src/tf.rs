//! Discrete time-frequency primitives on a finite cyclic signal model of
//! length N: DFT, lattice STFT, spectrogram, ambiguity function, cyclic
//! convolution and time/frequency shifts.
//!
//! Conventions (pinned by the test suite):
//! - forward DFT is unnormalized, `X(k) = sum_t x(t) e^{-2pi i k t / N}`;
//!   the inverse carries the `1/N` factor,
//! - frequency bins are indexed `0..N-1` with negative frequencies
//!   addressed modulo N (no fftshift),
//! - lattice steps must divide N so every sum closes cyclically.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Finite real-valued discrete time series with sample rate.
#[derive(Debug, Clone)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(idx) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite sample at index {idx}"
            )));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidParameter("sample_rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.samples.iter().map(|&s| Complex64::new(s, 0.0)).collect()
    }
}

/// Analysis window of length N in zero-centered, cyclically wrapped
/// representation: index 0 is the window center, negative times wrap to
/// the top of the buffer.
#[derive(Debug, Clone)]
pub struct Window {
    samples: Vec<f64>,
    support_length: usize,
}

impl Window {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        if samples.iter().all(|&s| s == 0.0) {
            return Err(Error::ZeroWindow);
        }
        let support_length = samples.iter().filter(|&&s| s != 0.0).count().max(1);
        Ok(Self {
            samples,
            support_length,
        })
    }

    /// Hann window of the given support, centered at time 0 inside a
    /// length-n cyclic buffer.
    pub fn hann(support: usize, n: usize) -> Result<Self> {
        if support == 0 || support > n {
            return Err(Error::InvalidParameter(format!(
                "hann support {support} invalid for length {n}"
            )));
        }
        let mut samples = vec![0.0; n];
        let half = (support / 2) as isize;
        for m in -half..=half {
            let w = 0.5 * (1.0 + (2.0 * std::f64::consts::PI * m as f64 / support as f64).cos());
            if w > 0.0 {
                samples[(m.rem_euclid(n as isize)) as usize] = w;
            }
        }
        let mut win = Self::new(samples)?;
        win.support_length = support;
        Ok(win)
    }

    /// Unit impulse at time 0.
    pub fn delta(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let mut samples = vec![0.0; n];
        samples[0] = 1.0;
        Self::new(samples)
    }

    /// Periodized dilated Gaussian `phi_sigma(t) = (2/sigma)^(1/4) e^(-pi t^2/sigma)`
    /// sampled at `t = m / sqrt(n)` and normalized to unit l2 norm.
    pub fn gaussian(sigma: f64, n: usize) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        let samples = sampled_gaussian(sigma, n);
        let mut win = Self::new(samples)?;
        win.support_length = n;
        Ok(win)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn support_length(&self) -> usize {
        self.support_length
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.samples.iter().map(|&s| Complex64::new(s, 0.0)).collect()
    }
}

/// Periodized unit-norm samples of the dilated Gaussian at `t = m / sqrt(n)`.
pub(crate) fn sampled_gaussian(sigma: f64, n: usize) -> Vec<f64> {
    let scale = (n as f64).sqrt();
    let mut samples = vec![0.0; n];
    for (i, s) in samples.iter_mut().enumerate() {
        // periodize over a few wraps; the Gaussian tail beyond that is
        // below double precision
        for wrap in -2..=2i64 {
            let t = (i as f64 + wrap as f64 * n as f64) / scale;
            *s += (-std::f64::consts::PI * t * t / sigma).exp();
        }
    }
    let norm = samples.iter().map(|s| s * s).sum::<f64>().sqrt();
    for s in &mut samples {
        *s /= norm;
    }
    samples
}

/// Time/frequency sampling lattice `alpha Z x beta Z` inside `Z_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice {
    n: usize,
    alpha: usize,
    beta: usize,
}

impl Lattice {
    pub fn new(n: usize, alpha: usize, beta: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if alpha == 0 || n % alpha != 0 {
            return Err(Error::BadLattice {
                param: "alpha",
                value: alpha,
                n,
            });
        }
        if beta == 0 || n % beta != 0 {
            return Err(Error::BadLattice {
                param: "beta",
                value: beta,
                n,
            });
        }
        Ok(Self { n, alpha, beta })
    }

    /// Critically sampled lattice alpha = beta = 1.
    pub fn full(n: usize) -> Self {
        Self {
            n,
            alpha: 1,
            beta: 1,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    /// Number of time frames N / alpha.
    pub fn frames(&self) -> usize {
        self.n / self.alpha
    }

    /// Number of frequency bins N / beta.
    pub fn bins(&self) -> usize {
        self.n / self.beta
    }
}

/// Complex 2-D array over a (frequency, time) lattice. Row k is frequency
/// bin `beta k`, column l is time frame `alpha l`.
#[derive(Debug, Clone)]
pub struct ComplexTFMap {
    pub values: Array2<Complex64>,
    pub lattice: Lattice,
}

/// Real 2-D array over a (channel/frequency, time) lattice. For
/// mel/filter-bank maps the rows index the channel nu rather than a DFT bin.
#[derive(Debug, Clone)]
pub struct RealTFMap {
    pub values: Array2<f64>,
    pub lattice: Lattice,
    pub channel_count: usize,
}

pub fn fft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    FftPlanner::new().plan_fft_forward(x.len()).process(&mut buf);
    buf
}

pub fn ifft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    FftPlanner::new().plan_fft_inverse(x.len()).process(&mut buf);
    let scale = 1.0 / x.len() as f64;
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// Unnormalized forward DFT, `X(k) = sum_t x(t) e^{-2pi i k t / N}`.
pub fn dft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(fft(x))
}

/// Inverse DFT with the 1/N factor; `inverse_dft(dft(x)) == x`.
pub fn inverse_dft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(ifft(x))
}

/// STFT of complex data against a complex window on a lattice.
///
/// Entry (k, l) is `<f, M_{beta k} T_{alpha l} g> = F(f . conj(T_{alpha l} g))(beta k)`.
pub fn stft_complex(f: &[Complex64], g: &[Complex64], lattice: Lattice) -> Result<ComplexTFMap> {
    let n = lattice.n();
    if f.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: f.len(),
        });
    }
    if g.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: g.len(),
        });
    }
    let mut planner = FftPlanner::new();
    let plan = planner.plan_fft_forward(n);
    let mut values = Array2::zeros((lattice.bins(), lattice.frames()));
    let mut buf = vec![Complex64::default(); n];
    for l in 0..lattice.frames() {
        let shift = l * lattice.alpha();
        for t in 0..n {
            buf[t] = f[t] * g[(t + n - shift) % n].conj();
        }
        plan.process(&mut buf);
        for k in 0..lattice.bins() {
            values[(k, l)] = buf[k * lattice.beta()];
        }
    }
    Ok(ComplexTFMap { values, lattice })
}

/// STFT of a real signal with respect to a real window.
pub fn stft(f: &Signal, g: &Window, lattice: Lattice) -> Result<ComplexTFMap> {
    stft_complex(&f.to_complex(), &g.to_complex(), lattice)
}

/// Squared modulus of the STFT.
pub fn spectrogram(f: &Signal, g: &Window, lattice: Lattice) -> Result<RealTFMap> {
    let map = stft(f, g, lattice)?;
    Ok(RealTFMap {
        channel_count: map.values.nrows(),
        values: map.values.mapv(|v| v.norm_sqr()),
        lattice: map.lattice,
    })
}

/// Power spectrogram of complex data against a complex window.
pub fn spectrogram_complex(
    f: &[Complex64],
    g: &[Complex64],
    lattice: Lattice,
) -> Result<RealTFMap> {
    let map = stft_complex(f, g, lattice)?;
    Ok(RealTFMap {
        channel_count: map.values.nrows(),
        values: map.values.mapv(|v| v.norm_sqr()),
        lattice: map.lattice,
    })
}

/// Ambiguity function `V_g g` of a window on the full lattice. Row xi is
/// the frequency lag, column x the time lag.
pub fn ambiguity(g: &Window) -> Result<ComplexTFMap> {
    let gc = g.to_complex();
    ambiguity_complex(&gc)
}

/// Ambiguity function of a complex sequence on the full lattice.
pub fn ambiguity_complex(g: &[Complex64]) -> Result<ComplexTFMap> {
    if g.is_empty() {
        return Err(Error::EmptyInput);
    }
    if g.iter().all(|v| *v == Complex64::default()) {
        return Err(Error::ZeroWindow);
    }
    stft_complex(g, g, Lattice::full(g.len()))
}

/// Strided cyclic convolution: `out(l) = sum_n f(n) h(stride*l - n)` with
/// indices modulo N. Output length N / stride.
pub fn cyclic_convolve(f: &[Complex64], h: &[Complex64], stride: usize) -> Result<Vec<Complex64>> {
    let n = f.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if h.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: h.len(),
        });
    }
    if stride == 0 || n % stride != 0 {
        return Err(Error::BadStride { stride, n });
    }
    let ff = fft(f);
    let fh = fft(h);
    let prod: Vec<Complex64> = ff.iter().zip(&fh).map(|(a, b)| a * b).collect();
    let full = ifft(&prod);
    Ok((0..n / stride).map(|l| full[l * stride]).collect())
}

/// Cyclic time shift `T_m f(t) = f(t - m)`.
pub fn time_shift(f: &[Complex64], m: usize) -> Vec<Complex64> {
    let n = f.len();
    (0..n).map(|t| f[(t + n - m % n) % n]).collect()
}

/// Frequency shift `M_w f(t) = e^{2pi i w t / N} f(t)`.
pub fn freq_shift(f: &[Complex64], w: usize) -> Vec<Complex64> {
    let n = f.len();
    f.iter()
        .enumerate()
        .map(|(t, &v)| {
            v * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (w * t) as f64 / n as f64)
        })
        .collect()
}

/// Signed representative of a cyclic index in (-N/2, N/2].
pub fn signed_index(i: usize, n: usize) -> f64 {
    if i > n / 2 {
        i as f64 - n as f64
    } else {
        i as f64
    }
}
