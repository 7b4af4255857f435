//! Audio-domain feature extraction: framed STFT mel features and the
//! filter-bank variants with zero-padded linear convolution.

use anyhow::{bail, Context, Result};
use melkit::filterbank::{self, FilterBank, MAX_AVG_WIDTH, MAX_KERNEL};
use melkit::mel::{self, MelFilterSet};
use melkit::tf::{self, Window};
use ndarray::Array2;
use num_complex::Complex64;
use std::io::Write;

use crate::config::{Config, Padding, Variant};

pub fn build_filter_set(cfg: &Config) -> Result<MelFilterSet> {
    let n_bins = cfg.frame_len;
    if cfg.filter_count == 1 {
        // single triangle spanning the full range, peak at the mel midpoint
        let mid_mel = (mel::hz_to_mel(cfg.f_min) + mel::hz_to_mel(cfg.f_max)) / 2.0;
        let center = mel::mel_to_hz(mid_mel);
        let hz_per_bin = cfg.sample_rate as f64 / cfg.frame_len as f64;
        let mut weights = Array2::zeros((1, n_bins));
        for k in 0..n_bins {
            let f = k as f64 * hz_per_bin;
            if f > cfg.sample_rate as f64 / 2.0 {
                break;
            }
            let w = if f <= center {
                (f - cfg.f_min) / (center - cfg.f_min)
            } else {
                (cfg.f_max - f) / (cfg.f_max - center)
            };
            if w > 0.0 {
                weights[(0, k)] = w;
            }
        }
        return Ok(MelFilterSet::from_weights(
            weights,
            vec![center],
            cfg.sample_rate,
            1,
        )?);
    }
    let centers = mel::mel_scale_centers(cfg.filter_count, cfg.f_min, cfg.f_max, cfg.sample_rate)?;
    Ok(mel::build_triangles(
        &centers,
        n_bins,
        cfg.sample_rate,
        1,
    )?)
}

pub fn design_bank(cfg: &Config, set: &MelFilterSet) -> Result<(Window, FilterBank)> {
    let g = Window::hann(cfg.frame_len, cfg.frame_len)?;
    let bank = filterbank::design_filters(&g, set, cfg.epsilon)?;
    Ok((g, bank))
}

pub fn padded(samples: &[f64], cfg: &Config) -> Vec<f64> {
    match cfg.padding {
        Padding::None => samples.to_vec(),
        Padding::Reflect => {
            let pad = (cfg.frame_len - 1) / 2;
            let n = samples.len();
            let mut out = Vec::with_capacity(n + 2 * pad);
            for i in (1..=pad.min(n - 1)).rev() {
                out.push(samples[i]);
            }
            out.extend_from_slice(samples);
            for i in (1..=pad.min(n - 1)).rev() {
                out.push(samples[n - 1 - i]);
            }
            out
        }
    }
}

pub fn frame_count(padded_len: usize, cfg: &Config) -> Result<usize> {
    if padded_len < cfg.frame_len {
        bail!(
            "signal of {padded_len} samples is shorter than one frame ({})",
            cfg.frame_len
        );
    }
    Ok((padded_len - cfg.frame_len) / cfg.hop + 1)
}

fn periodic_hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|t| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * t as f64 / len as f64).cos()))
        .collect()
}

/// Framed STFT power, filtered by the mel set; rows are frames.
fn stft_features(x: &[f64], cfg: &Config, set: &MelFilterSet) -> Result<Array2<f64>> {
    let frames = frame_count(x.len(), cfg)?;
    let window = periodic_hann(cfg.frame_len);
    let weights = set.weights();
    let mut out = Array2::zeros((frames, set.filter_count()));
    let mut buf = vec![Complex64::default(); cfg.frame_len];
    for b in 0..frames {
        let start = b * cfg.hop;
        for t in 0..cfg.frame_len {
            buf[t] = Complex64::new(x[start + t] * window[t], 0.0);
        }
        let spec = tf::fft(&buf);
        for nu in 0..set.filter_count() {
            let mut acc = 0.0;
            for k in 0..cfg.frame_len {
                let w = weights[(nu, k)];
                if w != 0.0 {
                    acc += w * spec[k].norm_sqr();
                }
            }
            out[(b, nu)] = acc;
        }
    }
    Ok(out)
}

/// Linear convolution of a real signal with centered complex taps
/// (tap i sits at time offset i - len/2), via a zero-padded FFT.
fn linear_convolve(x: &[f64], taps: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let m = (n + taps.len() + 1).next_power_of_two();
    let mut fx = vec![Complex64::default(); m];
    for (i, &v) in x.iter().enumerate() {
        fx[i] = Complex64::new(v, 0.0);
    }
    let half = taps.len() / 2;
    let mut fh = vec![Complex64::default(); m];
    for (i, &v) in taps.iter().enumerate() {
        let offset = i as isize - half as isize;
        fh[offset.rem_euclid(m as isize) as usize] = v;
    }
    let prod: Vec<Complex64> = tf::fft(&fx)
        .iter()
        .zip(tf::fft(&fh))
        .map(|(a, b)| a * b)
        .collect();
    let mut full = tf::ifft(&prod);
    full.truncate(n);
    full
}

/// Averaging taps on the stride grid as (offset_in_strides, weight).
enum Averaging {
    /// designed cyclic window, indexed by signed sample offset
    Designed(Vec<f64>),
    Boxcar { frames: usize },
    Hann { width: usize },
}

fn averaging_taps(avg: &Averaging, stride: usize) -> Vec<(isize, f64)> {
    match avg {
        Averaging::Designed(w) => {
            let n = w.len();
            let reach = (n / 2 / stride) as isize;
            (-reach..=reach)
                .map(|j| {
                    let d = j * stride as isize;
                    (j, w[d.rem_euclid(n as isize) as usize])
                })
                .collect()
        }
        Averaging::Boxcar { frames } => {
            let lo = -((*frames as isize) / 2);
            (0..*frames as isize)
                .map(|j| (lo + j, 1.0 / *frames as f64))
                .collect()
        }
        Averaging::Hann { width } => {
            let reach = (width / 2 / stride.max(1)).max(1) as isize;
            let mut taps: Vec<(isize, f64)> = (-reach..=reach)
                .map(|j| {
                    let d = (j * stride as isize) as f64;
                    let w = (std::f64::consts::PI * d / *width as f64).cos().powi(2);
                    (j, w)
                })
                .collect();
            let total: f64 = taps.iter().map(|(_, w)| w).sum();
            for (_, w) in &mut taps {
                *w /= total;
            }
            taps
        }
    }
}

pub struct FbChannel {
    pub taps: Vec<Complex64>,
    avg: Averaging,
}

/// Per-channel Hann widths mirroring the naive inverse-bandwidth
/// support mapping, anchored at the maximum width for the lowest band.
pub fn default_widths(set: &MelFilterSet) -> Vec<usize> {
    let centers = set.centers_hz();
    let k = centers.len();
    let bandwidth = |nu: usize| -> f64 {
        let left = if nu == 0 { set.f_min() } else { centers[nu - 1] };
        let right = if nu == k - 1 { set.f_max() } else { centers[nu + 1] };
        right - left
    };
    let bw0 = bandwidth(0);
    (0..k)
        .map(|nu| {
            ((MAX_AVG_WIDTH as f64 * bw0 / bandwidth(nu)).round() as usize)
                .clamp(3, MAX_AVG_WIDTH)
        })
        .collect()
}

pub fn fb_channels(
    cfg: &Config,
    set: &MelFilterSet,
    widths: Option<&[usize]>,
) -> Result<Vec<FbChannel>> {
    let n = cfg.frame_len;
    let channels = match cfg.variant {
        Variant::Stft => bail!("stft variant has no filter-bank channels"),
        Variant::Approx => {
            let (_, bank) = design_bank(cfg, set)?;
            bank.channels
                .iter()
                .map(|ch| FbChannel {
                    taps: ch.centered_kernel(MAX_KERNEL).0,
                    avg: Averaging::Designed(ch.averaging.clone()),
                })
                .collect()
        }
        Variant::Naive | Variant::Fixed | Variant::Varwidth => {
            let bank = filterbank::naive_bank(set, n, MAX_KERNEL)?;
            let widths: Vec<usize> = match cfg.variant {
                Variant::Naive => vec![0; bank.channel_count()],
                Variant::Fixed => vec![cfg.avg_width; bank.channel_count()],
                Variant::Varwidth => match widths {
                    Some(w) => {
                        if w.len() != bank.channel_count() {
                            bail!(
                                "{} widths for {} channels",
                                w.len(),
                                bank.channel_count()
                            );
                        }
                        w.to_vec()
                    }
                    None => default_widths(set),
                },
                _ => unreachable!(),
            };
            for &w in &widths {
                if w > MAX_AVG_WIDTH {
                    bail!("averaging width {w} exceeds maximum {MAX_AVG_WIDTH}");
                }
            }
            bank.channels
                .iter()
                .zip(widths)
                .map(|(ch, width)| FbChannel {
                    taps: ch.centered_kernel(MAX_KERNEL).0,
                    avg: if cfg.variant == Variant::Naive {
                        Averaging::Boxcar {
                            frames: cfg.avg_frames,
                        }
                    } else {
                        Averaging::Hann { width }
                    },
                })
                .collect()
        }
    };
    Ok(channels)
}

/// Filter-bank features on the common frame grid: power on the stride
/// grid, averaged around each frame's window center.
fn fb_variant_features(x: &[f64], cfg: &Config, channels: &[FbChannel]) -> Result<Array2<f64>> {
    let frames = frame_count(x.len(), cfg)?;
    let stride = cfg.stride;
    let q_len = x.len().div_ceil(stride);
    let mut out = Array2::zeros((frames, channels.len()));
    for (nu, ch) in channels.iter().enumerate() {
        let conv = linear_convolve(x, &ch.taps);
        let q: Vec<f64> = (0..q_len).map(|j| conv[j * stride].norm_sqr()).collect();
        let taps = averaging_taps(&ch.avg, stride);
        for b in 0..frames {
            let center = b * cfg.hop + cfg.frame_len / 2;
            let jb = (center as f64 / stride as f64).round() as isize;
            let mut acc = 0.0;
            for &(dj, w) in &taps {
                let j = jb + dj;
                if j >= 0 && (j as usize) < q_len {
                    acc += w * q[j as usize];
                }
            }
            out[(b, nu)] = acc;
        }
    }
    Ok(out)
}

pub fn compute_features(
    samples: &[f64],
    cfg: &Config,
    set: &MelFilterSet,
    widths: Option<&[usize]>,
) -> Result<Array2<f64>> {
    let x = padded(samples, cfg);
    let mut map = match cfg.variant {
        Variant::Stft => stft_features(&x, cfg, set)?,
        _ => {
            let channels = fb_channels(cfg, set, widths)?;
            fb_variant_features(&x, cfg, &channels)?
        }
    };
    map.mapv_inplace(|v| v.max(cfg.clip_floor).ln());
    Ok(map)
}

/// Header row of center frequencies, then one row per frame, frame
/// index first.
pub fn write_feature_csv<W: Write>(mut out: W, centers: &[f64], map: &Array2<f64>) -> Result<()> {
    write!(out, "frame")?;
    for c in centers {
        write!(out, ",{c}")?;
    }
    writeln!(out)?;
    for b in 0..map.nrows() {
        write!(out, "{b}")?;
        for nu in 0..map.ncols() {
            write!(out, ",{}", map[(b, nu)])?;
        }
        writeln!(out)?;
    }
    out.flush().context("writing feature CSV")?;
    Ok(())
}
