//! Triangular mel-scaled filters and STFT-based mel-spectrogram
//! computation on a lattice.
//!
//! The mel mapping is fixed to `mel(f) = 2595 log10(1 + f/700)`; triangles
//! are normalized to unit peak. Both choices are configuration conventions
//! and pinned by the tests.

use ndarray::Array2;
use std::io::Write;

use crate::error::{Error, Result};
use crate::tf::{self, Lattice, RealTFMap, Signal, Window};

/// Default analysis setup: 22050 Hz, frame length 1024, hop 315 (70 fps),
/// 80 filters from 27.5 Hz to 8 kHz, clip floor 1e-7.
pub const DEFAULT_SAMPLE_RATE: u32 = 22050;
pub const DEFAULT_FRAME_LEN: usize = 1024;
pub const DEFAULT_HOP: usize = 315;
pub const DEFAULT_FILTER_COUNT: usize = 80;
pub const DEFAULT_F_MIN: f64 = 27.5;
pub const DEFAULT_F_MAX: f64 = 8000.0;
pub const DEFAULT_CLIP_FLOOR: f64 = 1e-7;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// The K triangular frequency-domain filters plus their placement data.
#[derive(Debug, Clone)]
pub struct MelFilterSet {
    /// K x n_bins weight matrix; row nu is the filter Lambda_nu sampled on
    /// the beta-strided DFT bins.
    filters: Array2<f64>,
    centers_hz: Vec<f64>,
    f_min: f64,
    f_max: f64,
    sample_rate: u32,
    beta: usize,
}

impl MelFilterSet {
    /// Build a set from explicit nonnegative weights (K x n_bins), e.g. for
    /// non-triangular filter shapes.
    pub fn from_weights(
        filters: Array2<f64>,
        centers_hz: Vec<f64>,
        sample_rate: u32,
        beta: usize,
    ) -> Result<Self> {
        if filters.nrows() != centers_hz.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} filter rows vs {} centers",
                filters.nrows(),
                centers_hz.len()
            )));
        }
        if let Some((idx, &v)) = filters.iter().enumerate().find(|(_, &v)| v < 0.0) {
            return Err(Error::NegativeEntry { value: v, index: idx });
        }
        let f_min = centers_hz.first().copied().unwrap_or(0.0);
        let f_max = centers_hz.last().copied().unwrap_or(0.0);
        Ok(Self {
            filters,
            centers_hz,
            f_min,
            f_max,
            sample_rate,
            beta,
        })
    }

    pub fn filter_count(&self) -> usize {
        self.filters.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.filters.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.filters
    }

    /// Filter nu over the strided bins.
    pub fn filter(&self, nu: usize) -> Vec<f64> {
        self.filters.row(nu).to_vec()
    }

    /// Filter nu expanded to all N DFT bins (zeros off the beta grid).
    pub fn filter_full(&self, nu: usize) -> Vec<f64> {
        let n = self.n_bins() * self.beta;
        let mut full = vec![0.0; n];
        for (k, &w) in self.filters.row(nu).iter().enumerate() {
            full[k * self.beta] = w;
        }
        full
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn f_min(&self) -> f64 {
        self.f_min
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    /// One row per filter: center frequency in Hz, then the bin weights.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for nu in 0..self.filter_count() {
            write!(out, "{}", self.centers_hz[nu])?;
            for w in self.filters.row(nu) {
                write!(out, ",{w}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Mel spectrogram map with channel rows; `log_applied` records whether the
/// entries have been through `log_compress`.
#[derive(Debug, Clone)]
pub struct MelSpectrogram {
    pub map: RealTFMap,
    pub log_applied: bool,
    pub clip_floor: f64,
}

/// K center frequencies equally spaced on the mel scale, endpoints at
/// f_min and f_max.
pub fn mel_scale_centers(k: usize, f_min: f64, f_max: f64, sample_rate: u32) -> Result<Vec<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(0.0 < f_min && f_min < f_max && f_max <= nyquist) {
        return Err(Error::BadFrequencyRange {
            f_min,
            f_max,
            nyquist,
        });
    }
    if k < 2 {
        return Err(Error::InvalidParameter("need at least 2 filters".into()));
    }
    let m0 = hz_to_mel(f_min);
    let m1 = hz_to_mel(f_max);
    Ok((0..k)
        .map(|i| mel_to_hz(m0 + (m1 - m0) * i as f64 / (k - 1) as f64))
        .collect())
}

/// Triangular filters over `n_bins` beta-strided DFT bins. Filter nu rises
/// linearly from center nu-1 (or f_min) to center nu and falls to center
/// nu+1 (or f_max), unit peak. Bins above Nyquist stay zero.
pub fn build_triangles(
    centers: &[f64],
    n_bins: usize,
    sample_rate: u32,
    beta: usize,
) -> Result<MelFilterSet> {
    if centers.len() < 2 {
        return Err(Error::InvalidParameter("need at least 2 centers".into()));
    }
    if let Some(i) = centers.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NonMonotoneCenters { index: i + 1 });
    }
    if n_bins == 0 || beta == 0 {
        return Err(Error::InvalidParameter("n_bins and beta must be positive".into()));
    }
    let k = centers.len();
    let n = n_bins * beta;
    let f_min = centers[0];
    let f_max = centers[k - 1];
    let nyquist = sample_rate as f64 / 2.0;
    let bin_hz = |bin: usize| bin as f64 * beta as f64 * sample_rate as f64 / n as f64;

    let mut filters = Array2::zeros((k, n_bins));
    for nu in 0..k {
        let center = centers[nu];
        let left = if nu == 0 { f_min } else { centers[nu - 1] };
        let right = if nu == k - 1 { f_max } else { centers[nu + 1] };
        for bin in 0..n_bins {
            let f = bin_hz(bin);
            if f > nyquist {
                break;
            }
            let w = if f < left || f > right {
                0.0
            } else if f <= center {
                if center > left {
                    (f - left) / (center - left)
                } else if f == center {
                    1.0
                } else {
                    0.0
                }
            } else if right > center {
                (right - f) / (right - center)
            } else {
                0.0
            };
            filters[(nu, bin)] = w;
        }
    }
    Ok(MelFilterSet {
        filters,
        centers_hz: centers.to_vec(),
        f_min,
        f_max,
        sample_rate,
        beta,
    })
}

/// Default 80-band triangular set for a cyclic model of length n at the
/// given lattice frequency step.
pub fn default_filter_set(n: usize, beta: usize) -> Result<MelFilterSet> {
    let centers = mel_scale_centers(
        DEFAULT_FILTER_COUNT,
        DEFAULT_F_MIN,
        DEFAULT_F_MAX,
        DEFAULT_SAMPLE_RATE,
    )?;
    build_triangles(&centers, n / beta, DEFAULT_SAMPLE_RATE, beta)
}

/// Mel spectrogram on a lattice:
/// `MS(b, nu) = sum_k |F(f . T_b g)(beta k)|^2 Lambda_nu(beta k)`, b = alpha l.
pub fn mel_spectrogram(
    f: &Signal,
    g: &Window,
    set: &MelFilterSet,
    lattice: Lattice,
) -> Result<MelSpectrogram> {
    let power = tf::spectrogram(f, g, lattice)?;
    filter_power_map(&power, set)
}

/// Apply the filter matrix to an existing power spectrogram.
pub fn filter_power_map(power: &RealTFMap, set: &MelFilterSet) -> Result<MelSpectrogram> {
    if power.values.nrows() != set.n_bins() {
        return Err(Error::ShapeMismatch(format!(
            "power map has {} bins, filter set expects {}",
            power.values.nrows(),
            set.n_bins()
        )));
    }
    let values = set.filters.dot(&power.values);
    Ok(MelSpectrogram {
        map: RealTFMap {
            channel_count: set.filter_count(),
            values,
            lattice: power.lattice,
        },
        log_applied: false,
        clip_floor: DEFAULT_CLIP_FLOOR,
    })
}

/// Single-channel frequency-averaged power map for an arbitrary weight
/// profile over the beta-strided bins:
/// `out(l) = sum_k |V_g f(alpha l, beta k)|^2 weights(k)`.
pub fn weighted_power(
    f: &Signal,
    g: &Window,
    weights: &[f64],
    lattice: Lattice,
) -> Result<Vec<f64>> {
    if weights.len() != lattice.bins() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} bins",
            weights.len(),
            lattice.bins()
        )));
    }
    let power = tf::spectrogram(f, g, lattice)?;
    Ok((0..lattice.frames())
        .map(|l| {
            weights
                .iter()
                .enumerate()
                .map(|(k, w)| w * power.values[(k, l)])
                .sum()
        })
        .collect())
}

/// `out = ln(max(in, clip_floor))` elementwise.
pub fn log_compress(mut ms: MelSpectrogram, clip_floor: f64) -> Result<MelSpectrogram> {
    if clip_floor <= 0.0 {
        return Err(Error::InvalidParameter("clip_floor must be positive".into()));
    }
    if let Some((idx, &v)) = ms
        .map
        .values
        .iter()
        .enumerate()
        .find(|(_, &v)| v < 0.0)
    {
        return Err(Error::NegativeEntry { value: v, index: idx });
    }
    ms.map.values.mapv_inplace(|v| v.max(clip_floor).ln());
    ms.log_applied = true;
    ms.clip_floor = clip_floor;
    Ok(ms)
}
