use anyhow::{bail, Context, Result};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Variant {
    /// adaptive filters with designed time-averaging windows
    Approx,
    /// Hann-envelope filters with non-overlapping boxcar averaging
    Naive,
    /// Hann-envelope filters with fixed-width Hann averaging
    Fixed,
    /// Hann-envelope filters with per-channel Hann averaging widths
    Varwidth,
    /// plain log mel-spectrogram
    Stft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Padding {
    /// frames strictly inside the signal (default)
    None,
    /// reflect-pad (frame_len - 1) / 2 samples at each end
    Reflect,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub stride: usize,
    pub filter_count: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub clip_floor: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub variant: Variant,
    pub padding: Padding,
    pub avg_frames: usize,
    pub avg_width: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            sample_rate: 22050,
            frame_len: 1024,
            hop: 315,
            stride: 21,
            filter_count: 80,
            f_min: 27.5,
            f_max: 8000.0,
            clip_floor: 1e-7,
            epsilon: 1e-6,
            seed: 0,
            variant: Variant::Approx,
            padding: Padding::None,
            avg_frames: 15,
            avg_width: 315,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key=value", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let ctx = || format!("line {}: bad value for {key}", lineno + 1);
            match key {
                "sample_rate" => cfg.sample_rate = value.parse().with_context(ctx)?,
                "frame_len" => cfg.frame_len = value.parse().with_context(ctx)?,
                "hop" => cfg.hop = value.parse().with_context(ctx)?,
                "stride" => cfg.stride = value.parse().with_context(ctx)?,
                "filter_count" => cfg.filter_count = value.parse().with_context(ctx)?,
                "f_min" => cfg.f_min = value.parse().with_context(ctx)?,
                "f_max" => cfg.f_max = value.parse().with_context(ctx)?,
                "clip_floor" => cfg.clip_floor = value.parse().with_context(ctx)?,
                "epsilon" => cfg.epsilon = value.parse().with_context(ctx)?,
                "seed" => cfg.seed = value.parse().with_context(ctx)?,
                "avg_frames" => cfg.avg_frames = value.parse().with_context(ctx)?,
                "avg_width" => cfg.avg_width = value.parse().with_context(ctx)?,
                "variant" => {
                    cfg.variant = match value {
                        "approx" => Variant::Approx,
                        "naive" => Variant::Naive,
                        "fixed" => Variant::Fixed,
                        "varwidth" => Variant::Varwidth,
                        "stft" => Variant::Stft,
                        other => bail!("line {}: unknown variant '{other}'", lineno + 1),
                    }
                }
                "padding" => {
                    cfg.padding = match value {
                        "none" => Padding::None,
                        "reflect" => Padding::Reflect,
                        other => bail!("line {}: unknown padding '{other}'", lineno + 1),
                    }
                }
                other => bail!("line {}: unknown key '{other}'", lineno + 1),
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || self.frame_len == 0 || self.hop == 0 || self.stride == 0 {
            bail!("sample_rate, frame_len, hop and stride must be positive");
        }
        if self.hop % self.stride != 0 {
            bail!("hop ({}) must be divisible by stride ({})", self.hop, self.stride);
        }
        if self.filter_count == 0 {
            bail!("filter_count must be positive");
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(0.0 < self.f_min && self.f_min < self.f_max && self.f_max <= nyquist) {
            bail!(
                "need 0 < f_min < f_max <= {nyquist}; got f_min={}, f_max={}",
                self.f_min,
                self.f_max
            );
        }
        if self.clip_floor <= 0.0 || self.epsilon <= 0.0 {
            bail!("clip_floor and epsilon must be positive");
        }
        if self.avg_frames == 0 {
            bail!("avg_frames must be positive");
        }
        Ok(())
    }
}
