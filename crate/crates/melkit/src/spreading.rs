//! Gabor multipliers, spreading functions and the aliasing-aware error
//! bound for the mel-spectrogram / filter-bank comparison.
//!
//! Conventions pinned here (and asserted by the tests):
//! - the spreading function of a multiplier with mask m is
//!   `eta(x, xi) = M(x, xi) V_g g(x, xi)` with the periodic symplectic
//!   transform `M(x, xi) = sum_{k,l} m(k,l) e^{-2pi i (alpha l xi - beta k x)/N}`,
//! - the operator is recovered from eta via
//!   `H f(t) = 1/N sum_x sum_xi eta(x, xi) f(t-x) e^{2pi i t xi / N}`,
//! - grid norms use counting measure; the bilinear-form estimate then
//!   reads `|<(G1 - G2) f, f>| <= ||eta_1 - eta_2||_2 / sqrt(N) . ||f||^2`.

use ndarray::Array2;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::io::Write as IoWrite;

use crate::error::{Error, Result};
use crate::filterbank::{fb_features, FilterBank};
use crate::mel::{self, MelFilterSet};
use crate::tf::{self, Lattice, Signal, Window};

/// Gabor multiplier `G f = sum_{k,l} m(k,l) <f, M_{beta k} T_{alpha l} g> M_{beta k} T_{alpha l} g`.
#[derive(Debug, Clone)]
pub struct GaborMultiplier {
    /// Analysis/synthesis window (general complex sequence of length N).
    pub window: Vec<Complex64>,
    pub lattice: Lattice,
    /// Mask over lattice points, bins x frames.
    pub mask: Array2<Complex64>,
}

impl GaborMultiplier {
    pub fn new(window: Vec<Complex64>, lattice: Lattice, mask: Array2<Complex64>) -> Result<Self> {
        if window.len() != lattice.n() {
            return Err(Error::LengthMismatch {
                expected: lattice.n(),
                got: window.len(),
            });
        }
        if mask.dim() != (lattice.bins(), lattice.frames()) {
            return Err(Error::ShapeMismatch(format!(
                "mask {:?} for lattice {} x {}",
                mask.dim(),
                lattice.bins(),
                lattice.frames()
            )));
        }
        Ok(Self {
            window,
            lattice,
            mask,
        })
    }
}

/// Spreading function over the full (x, xi) grid; row xi, column x.
/// Two operators agree iff their spreading functions coincide.
#[derive(Debug, Clone)]
pub struct SpreadingFunction {
    pub values: Array2<Complex64>,
}

/// Lattice-induced aliasing factors: the beta-periodization of
/// `F^-1(Lambda_nu)` over x and the alpha-periodization of `F(varpi_nu)`
/// over xi.
#[derive(Debug, Clone)]
pub struct AliasFactors {
    pub time_factor: Vec<Complex64>,
    pub freq_factor: Vec<Complex64>,
}

/// Literal double-sum evaluation of the multiplier.
pub fn apply_multiplier(mult: &GaborMultiplier, f: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = mult.lattice.n();
    if f.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: f.len(),
        });
    }
    let coeffs = tf::stft_complex(f, &mult.window, mult.lattice)?;
    let mut out = vec![Complex64::default(); n];
    for k in 0..mult.lattice.bins() {
        for l in 0..mult.lattice.frames() {
            let weight = mult.mask[(k, l)] * coeffs.values[(k, l)];
            if weight == Complex64::default() {
                continue;
            }
            let shift = l * mult.lattice.alpha();
            let freq = k * mult.lattice.beta();
            for (t, o) in out.iter_mut().enumerate() {
                let atom = mult.window[(t + n - shift) % n]
                    * Complex64::from_polar(
                        1.0,
                        2.0 * std::f64::consts::PI * (freq * t) as f64 / n as f64,
                    );
                *o += weight * atom;
            }
        }
    }
    Ok(out)
}

/// Dense matrix of the multiplier, columns are images of basis vectors.
pub fn multiplier_matrix(mult: &GaborMultiplier) -> Result<Array2<Complex64>> {
    let n = mult.lattice.n();
    let mut mat = Array2::zeros((n, n));
    let mut basis = vec![Complex64::default(); n];
    for s in 0..n {
        basis[s] = Complex64::new(1.0, 0.0);
        let col = apply_multiplier(mult, &basis)?;
        basis[s] = Complex64::default();
        for t in 0..n {
            mat[(t, s)] = col[t];
        }
    }
    Ok(mat)
}

/// Periodic symplectic Fourier transform of the mask on the full grid.
pub fn symplectic_transform(mult: &GaborMultiplier) -> Array2<Complex64> {
    let n = mult.lattice.n();
    let alpha = mult.lattice.alpha();
    let beta = mult.lattice.beta();
    let mut m = Array2::zeros((n, n));
    for xi in 0..n {
        for x in 0..n {
            let mut acc = Complex64::default();
            for k in 0..mult.lattice.bins() {
                for l in 0..mult.lattice.frames() {
                    let phase = -2.0 * std::f64::consts::PI
                        * ((alpha * l * xi) as f64 - (beta * k * x) as f64)
                        / n as f64;
                    acc += mult.mask[(k, l)] * Complex64::from_polar(1.0, phase);
                }
            }
            m[(xi, x)] = acc;
        }
    }
    m
}

/// Spreading function of the multiplier, `eta = M . V_g g`.
pub fn spreading_of_multiplier(mult: &GaborMultiplier) -> Result<SpreadingFunction> {
    let amb = tf::ambiguity_complex(&mult.window)?;
    let m = symplectic_transform(mult);
    Ok(SpreadingFunction {
        values: &m * &amb.values,
    })
}

/// Dense operator reconstructed from a spreading function:
/// `H(t, s) = 1/N sum_xi eta(t - s, xi) e^{2pi i t xi / N}`.
pub fn operator_from_spreading(eta: &SpreadingFunction) -> Array2<Complex64> {
    let n = eta.values.ncols();
    let mut mat = Array2::zeros((n, n));
    for t in 0..n {
        for s in 0..n {
            let x = (t + n - s) % n;
            let mut acc = Complex64::default();
            for xi in 0..n {
                acc += eta.values[(xi, x)]
                    * Complex64::from_polar(
                        1.0,
                        2.0 * std::f64::consts::PI * (t * xi) as f64 / n as f64,
                    );
            }
            mat[(t, s)] = acc / n as f64;
        }
    }
    mat
}

/// Mel mask `m(k,l) = delta(alpha l - b) Lambda(beta k)`.
pub fn mel_mask(lambda_full: &[f64], lattice: Lattice, b: usize) -> Result<Array2<Complex64>> {
    if lambda_full.len() != lattice.n() {
        return Err(Error::LengthMismatch {
            expected: lattice.n(),
            got: lambda_full.len(),
        });
    }
    if b % lattice.alpha() != 0 {
        return Err(Error::InvalidParameter(format!(
            "b = {b} must lie on the time lattice (alpha = {})",
            lattice.alpha()
        )));
    }
    let mut mask = Array2::zeros((lattice.bins(), lattice.frames()));
    let l0 = (b / lattice.alpha()) % lattice.frames();
    for k in 0..lattice.bins() {
        mask[(k, l0)] = Complex64::new(lambda_full[k * lattice.beta()], 0.0);
    }
    Ok(mask)
}

/// Filter-bank mask `m_F(k,l) = varpi(alpha l - b) delta(beta k)`.
pub fn fb_mask(varpi: &[f64], lattice: Lattice, b: usize) -> Result<Array2<Complex64>> {
    if varpi.len() != lattice.n() {
        return Err(Error::LengthMismatch {
            expected: lattice.n(),
            got: varpi.len(),
        });
    }
    let n = lattice.n();
    let mut mask = Array2::zeros((lattice.bins(), lattice.frames()));
    for l in 0..lattice.frames() {
        mask[(0, l)] = Complex64::new(varpi[(l * lattice.alpha() + n - b % n) % n], 0.0);
    }
    Ok(mask)
}

/// `MS(b, nu)` as the bilinear form `<G_{g,m} f, f>` with the mel mask.
pub fn bilinear_form_ms(
    f: &Signal,
    g: &Window,
    lambda_full: &[f64],
    lattice: Lattice,
    b: usize,
) -> Result<f64> {
    let mask = mel_mask(lambda_full, lattice, b)?;
    let mult = GaborMultiplier::new(g.to_complex(), lattice, mask)?;
    let fc = f.to_complex();
    let gf = apply_multiplier(&mult, &fc)?;
    let form: Complex64 = gf.iter().zip(&fc).map(|(a, b)| a * b.conj()).sum();
    Ok(form.re)
}

/// `FB(b, nu)` as the bilinear form `<G_{rev(h), m_F} f, f>`.
pub fn bilinear_form_fb(
    f: &Signal,
    kernel: &[Complex64],
    varpi: &[f64],
    lattice: Lattice,
    b: usize,
) -> Result<f64> {
    let n = lattice.n();
    let reversed: Vec<Complex64> = (0..n).map(|t| kernel[(n - t) % n].conj()).collect();
    let mask = fb_mask(varpi, lattice, b)?;
    let mult = GaborMultiplier::new(reversed, lattice, mask)?;
    let fc = f.to_complex();
    let gf = apply_multiplier(&mult, &fc)?;
    let form: Complex64 = gf.iter().zip(&fc).map(|(a, b)| a * b.conj()).sum();
    Ok(form.re)
}

/// Plain cyclic periodizations of `F^-1(Lambda)` (period N/beta) and
/// `F(varpi)` (period N/alpha).
pub fn alias_factors(lambda_full: &[f64], varpi: &[f64], lattice: Lattice) -> Result<AliasFactors> {
    let n = lattice.n();
    if lambda_full.len() != n || varpi.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: lambda_full.len().min(varpi.len()),
        });
    }
    let lambda_time = tf::ifft(
        &lambda_full
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect::<Vec<_>>(),
    );
    let w_spec = tf::fft(&varpi.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>());
    let period_t = n / lattice.beta();
    let period_f = n / lattice.alpha();
    let time_factor = (0..n)
        .map(|x| (0..lattice.beta()).map(|m| lambda_time[(x + m * period_t) % n]).sum())
        .collect();
    let freq_factor = (0..n)
        .map(|xi| (0..lattice.alpha()).map(|m| w_spec[(xi + m * period_f) % n]).sum())
        .collect();
    Ok(AliasFactors {
        time_factor,
        freq_factor,
    })
}

/// Entrywise error bound for `|MS(b,nu) - FB(b,nu)| <= bound . ||f||^2`.
///
/// The weighted-ambiguity difference is evaluated with the exact discrete
/// lattice constants, which are `N/beta` on the frequency-averaging side
/// and `1/alpha` on the time-averaging side relative to the plain
/// periodizations, and the counting-measure grid norm carries a final
/// `1/sqrt(N)`.
pub fn theorem1_bound(
    g: &Window,
    kernel: &[Complex64],
    lambda_full: &[f64],
    varpi: &[f64],
    lattice: Lattice,
) -> Result<f64> {
    let n = lattice.n();
    if kernel.len() != n || lambda_full.len() != n || varpi.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: kernel.len().min(lambda_full.len()).min(varpi.len()),
        });
    }
    // strided transforms carry the lattice constants exactly:
    // M(x) = sum_k Lambda(beta k) e^{2pi i beta k x / N}
    let mut strided_lambda = vec![Complex64::default(); n];
    for k in 0..lattice.bins() {
        strided_lambda[k * lattice.beta()] = Complex64::new(lambda_full[k * lattice.beta()], 0.0);
    }
    let m_time: Vec<Complex64> = tf::ifft(&strided_lambda)
        .iter()
        .map(|v| v * n as f64)
        .collect();
    // M_F(xi) = sum_l varpi(alpha l) e^{-2pi i alpha l xi / N}
    let mut strided_varpi = vec![Complex64::default(); n];
    for l in 0..lattice.frames() {
        strided_varpi[l * lattice.alpha()] = Complex64::new(varpi[l * lattice.alpha()], 0.0);
    }
    let m_freq = tf::fft(&strided_varpi);

    let vgg = tf::ambiguity(g)?;
    let reversed: Vec<Complex64> = (0..n).map(|t| kernel[(n - t) % n].conj()).collect();
    let vhh = tf::ambiguity_complex(&reversed)?;

    let mut sum_sq = 0.0;
    for xi in 0..n {
        for x in 0..n {
            let diff = m_time[x] * vgg.values[(xi, x)] - m_freq[xi] * vhh.values[(xi, x)];
            sum_sq += diff.norm_sqr();
        }
    }
    Ok((sum_sq / n as f64).sqrt())
}

/// Per-channel bounds for a designed bank.
pub fn bank_bounds(
    g: &Window,
    bank: &FilterBank,
    set: &MelFilterSet,
    lattice: Lattice,
) -> Result<Vec<f64>> {
    (0..bank.channel_count())
        .map(|nu| {
            theorem1_bound(
                g,
                &bank.channels[nu].kernel,
                &set.filter_full(nu),
                &bank.channels[nu].averaging,
                lattice,
            )
        })
        .collect()
}

/// Mean |MS - FB| per channel over seeded Gaussian random signals, with
/// both maps evaluated on the lattice time grid.
pub fn empirical_error_per_bin(
    bank: &FilterBank,
    g: &Window,
    set: &MelFilterSet,
    lattice: Lattice,
    n_signals: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let stats = empirical_error_stats(bank, g, set, lattice, n_signals, seed)?;
    Ok(stats.into_iter().map(|(mean, _)| mean).collect())
}

/// Per-channel (mean, max) of |MS - FB| over seeded Gaussian signals.
pub fn empirical_error_stats(
    bank: &FilterBank,
    g: &Window,
    set: &MelFilterSet,
    lattice: Lattice,
    n_signals: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if n_signals == 0 {
        return Err(Error::InvalidParameter("need at least one signal".into()));
    }
    let n = lattice.n();
    let k = bank.channel_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = vec![0.0; k];
    let mut maxima = vec![0.0f64; k];
    let frames = lattice.frames();
    for _ in 0..n_signals {
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                // Box-Muller standard normal
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let f = Signal::new(samples, set.sample_rate())?;
        let ms = mel::mel_spectrogram(&f, g, set, lattice)?;
        let fb = fb_features(&f, bank, lattice.alpha(), lattice.alpha())?;
        for nu in 0..k {
            for l in 0..frames {
                let d = (ms.map.values[(nu, l)] - fb.values[(nu, l)]).abs();
                sums[nu] += d;
                maxima[nu] = maxima[nu].max(d);
            }
        }
    }
    let count = (n_signals * frames) as f64;
    Ok(sums
        .into_iter()
        .zip(maxima)
        .map(|(s, m)| (s / count, m))
        .collect())
}

/// CSV report: nu, center_hz, bound, empirical mean, empirical max.
pub fn write_bound_report<W: IoWrite>(
    mut out: W,
    set: &MelFilterSet,
    bounds: &[f64],
    stats: &[(f64, f64)],
) -> Result<()> {
    writeln!(out, "nu,center_hz,bound,empirical_mean_error,empirical_max_error")?;
    for nu in 0..bounds.len() {
        writeln!(
            out,
            "{nu},{},{},{},{}",
            set.centers_hz()[nu],
            bounds[nu],
            stats[nu].0,
            stats[nu].1
        )?;
    }
    Ok(())
}
