//! Bound/error verification in the cyclic model at N = frame_len.

use anyhow::{bail, Context, Result};
use melkit::filterbank::{self, ChannelDiagnostics, FilterBank};
use melkit::mel;
use melkit::spreading;
use melkit::tf::{Lattice, Signal};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

use crate::config::Config;
use crate::features;

const SLACK: f64 = 1e-9;
const GAUSSIAN_TOL: f64 = 1e-6;

fn gaussian_signal(n: usize, sample_rate: u32, rng: &mut ChaCha8Rng) -> Signal {
    let samples: Vec<f64> = (0..n)
        .map(|_| {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect();
    Signal::new(samples, sample_rate).unwrap()
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn run(cfg: &Config, signals: usize, out: &Path, sweep: bool, gaussian: bool) -> Result<bool> {
    if signals == 0 {
        bail!("need at least one signal");
    }
    if sweep {
        return run_sweep(cfg, signals, out);
    }
    if gaussian {
        return run_gaussian(cfg, signals, out);
    }
    run_design(cfg, signals, out)
}

fn run_design(cfg: &Config, signals: usize, out: &Path) -> Result<bool> {
    let n = cfg.frame_len;
    let set = features::build_filter_set(cfg)?;
    let (g, bank) = features::design_bank(cfg, &set)?;
    let lattice = Lattice::full(n);
    let bounds = spreading::bank_bounds(&g, &bank, &set, lattice)?;
    let k = bank.channel_count();
    let mut sums = vec![0.0; k];
    let mut maxima = vec![0.0f64; k];
    let mut violations = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..signals {
        let f = gaussian_signal(n, cfg.sample_rate, &mut rng);
        let energy: f64 = f.samples().iter().map(|s| s * s).sum();
        let ms = mel::mel_spectrogram(&f, &g, &set, lattice)?;
        let fb = filterbank::fb_features(&f, &bank, 1, 1)?;
        for nu in 0..k {
            for l in 0..n {
                let err = (ms.map.values[(nu, l)] - fb.values[(nu, l)]).abs();
                sums[nu] += err;
                maxima[nu] = maxima[nu].max(err);
                if err > bounds[nu] * energy + SLACK {
                    violations += 1;
                }
            }
        }
    }
    let count = (signals * n) as f64;
    let stats: Vec<(f64, f64)> = sums
        .iter()
        .zip(&maxima)
        .map(|(&s, &m)| (s / count, m))
        .collect();
    spreading::write_bound_report(create(out)?, &set, &bounds, &stats)?;
    if violations > 0 {
        eprintln!("{violations} entries exceeded the error bound");
        return Ok(false);
    }
    println!(
        "bound holds on {} signals x {} channels; report in {}",
        signals,
        k,
        out.display()
    );
    Ok(true)
}

fn run_gaussian(cfg: &Config, signals: usize, out: &Path) -> Result<bool> {
    let n = cfg.frame_len;
    let mut file = create(out)?;
    writeln!(file, "nu,center_hz,bound,empirical_mean_error,empirical_max_error")?;
    let mut ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for nu in [0usize, n / 8, n / 3] {
        let design = filterbank::gaussian_design(2.0, 1.0, nu, n)?;
        let bank = FilterBank {
            channels: vec![design.channel.clone()],
            diagnostics: vec![ChannelDiagnostics::default()],
            epsilon: 0.0,
            n,
            warnings: Vec::new(),
        };
        let bound = spreading::theorem1_bound(
            &design.window,
            &design.channel.kernel,
            &design.lambda,
            &design.channel.averaging,
            Lattice::full(n),
        )?;
        let mut sum = 0.0;
        let mut max_rel = 0.0f64;
        for _ in 0..signals {
            let f = gaussian_signal(n, cfg.sample_rate, &mut rng);
            let ms = mel::weighted_power(&f, &design.window, &design.lambda, Lattice::full(n))?;
            let fb = filterbank::fb_features(&f, &bank, 1, 1)?;
            let peak = ms.iter().cloned().fold(0.0, f64::max);
            for l in 0..n {
                let err = (ms[l] - fb.values[(0, l)]).abs();
                sum += err;
                max_rel = max_rel.max(err / peak);
            }
        }
        let center = nu as f64 * cfg.sample_rate as f64 / n as f64;
        writeln!(
            file,
            "{nu},{center},{bound},{},{max_rel}",
            sum / (signals * n) as f64
        )?;
        if max_rel > GAUSSIAN_TOL {
            eprintln!("nu = {nu}: relative deviation {max_rel} exceeds {GAUSSIAN_TOL}");
            ok = false;
        }
    }
    file.flush()?;
    if ok {
        println!("closed-form construction exact to {GAUSSIAN_TOL}; report in {}", out.display());
    }
    Ok(ok)
}

fn run_sweep(cfg: &Config, signals: usize, out: &Path) -> Result<bool> {
    let n = cfg.frame_len;
    let strides: Vec<usize> = [16usize, 4, 1]
        .into_iter()
        .filter(|s| n % s == 0)
        .collect();
    if strides.len() < 2 {
        bail!("frame_len {n} leaves no usable stride sweep");
    }
    let set = features::build_filter_set(cfg)?;
    let (g, bank) = features::design_bank(cfg, &set)?;
    let mut means = Vec::new();
    for &stride in &strides {
        let lattice = Lattice::new(n, stride, 1)?;
        let per_bin =
            spreading::empirical_error_per_bin(&bank, &g, &set, lattice, signals, cfg.seed)?;
        means.push(per_bin.iter().sum::<f64>() / per_bin.len() as f64);
    }
    let mut file = create(out)?;
    writeln!(file, "stride,mean_error")?;
    for (s, m) in strides.iter().zip(&means) {
        writeln!(file, "{s},{m}")?;
    }
    file.flush()?;
    let ok = means.windows(2).all(|w| w[1] <= w[0]);
    if ok {
        println!(
            "mean error non-increasing across strides {:?}; report in {}",
            strides,
            out.display()
        );
    } else {
        eprintln!("mean errors not non-increasing: {means:?}");
    }
    Ok(ok)
}
