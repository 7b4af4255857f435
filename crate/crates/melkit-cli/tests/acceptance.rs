//! End-to-end checks of the command-line interface: frame arithmetic on
//! real WAV input, byte-level determinism of the CSV outputs, and the
//! documented exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn melkit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_melkit"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("melkit-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// 16-bit PCM mono WAV with the given number of samples at 22050 Hz.
fn write_wav(path: &Path, samples: usize) {
    let rate: u32 = 22050;
    let mut pcm = Vec::with_capacity(2 * samples);
    for t in 0..samples {
        let x = 0.4 * (2.0 * std::f64::consts::PI * 440.0 * t as f64 / rate as f64).sin()
            + 0.2 * (2.0 * std::f64::consts::PI * 1700.0 * t as f64 / rate as f64).sin();
        pcm.extend_from_slice(&((x * 32767.0) as i16).to_le_bytes());
    }
    let mut body = Vec::new();
    body.extend_from_slice(b"WAVE");
    body.extend_from_slice(b"fmt ");
    body.extend_from_slice(&16u32.to_le_bytes());
    body.extend_from_slice(&1u16.to_le_bytes()); // PCM
    body.extend_from_slice(&1u16.to_le_bytes()); // mono
    body.extend_from_slice(&rate.to_le_bytes());
    body.extend_from_slice(&(rate * 2).to_le_bytes());
    body.extend_from_slice(&2u16.to_le_bytes());
    body.extend_from_slice(&16u16.to_le_bytes());
    body.extend_from_slice(b"data");
    body.extend_from_slice(&((2 * samples) as u32).to_le_bytes());
    body.extend_from_slice(&pcm);
    let mut file = Vec::new();
    file.extend_from_slice(b"RIFF");
    file.extend_from_slice(&(body.len() as u32).to_le_bytes());
    file.extend_from_slice(&body);
    std::fs::write(path, file).unwrap();
}

#[test]
fn criterion_9_cli_framing_and_determinism() {
    let dir = temp_dir("c9");
    let wav = dir.join("tone.wav");
    write_wav(&wav, 37248);

    // 37248 samples at frame 1024 / hop 315 must give exactly 115 frames.
    let feat_a = dir.join("a.csv");
    let status = melkit()
        .args(["features"])
        .arg(&wav)
        .arg("--out")
        .arg(&feat_a)
        .status()
        .unwrap();
    assert!(status.success());
    let a = std::fs::read_to_string(&feat_a).unwrap();
    let lines: Vec<&str> = a.lines().collect();
    assert!(lines[0].starts_with("frame,"));
    assert_eq!(lines.len(), 116, "header plus 115 frame rows");
    assert_eq!(lines[1].split(',').next(), Some("0"));
    assert_eq!(lines[115].split(',').next(), Some("114"));
    assert_eq!(lines[1].split(',').count(), 81, "frame index plus 80 channels");

    // A second run over the same input must be byte-identical.
    let feat_b = dir.join("b.csv");
    let status = melkit()
        .args(["features"])
        .arg(&wav)
        .arg("--out")
        .arg(&feat_b)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read(&feat_a).unwrap(), std::fs::read(&feat_b).unwrap());

    // Seeded verification must also be byte-identical across runs.
    let cfg = dir.join("small.cfg");
    std::fs::write(&cfg, "frame_len=256\nhop=64\nstride=4\nfilter_count=12\n").unwrap();
    let mut reports = Vec::new();
    for name in ["v1.csv", "v2.csv"] {
        let out = dir.join(name);
        let status = melkit()
            .args(["verify", "--signals", "5", "--seed", "7"])
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        reports.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(reports[0], reports[1]);

    std::fs::remove_dir_all(&dir).unwrap();
    println!("criterion 9 (CLI: 115 frames from 37248 samples, byte-identical reruns): PASS");
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = temp_dir("codes");

    // unknown architecture name is a usage error
    let status = melkit().args(["arch", "bogus"]).output().unwrap();
    assert_eq!(status.status.code(), Some(2));

    // missing input file is an I/O error
    let missing = dir.join("missing.wav");
    let status = melkit().arg("features").arg(&missing).output().unwrap();
    assert_eq!(status.status.code(), Some(3));

    // invalid config value is a usage error
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "hop=7\nstride=3\n").unwrap();
    let wav = dir.join("short.wav");
    write_wav(&wav, 2048);
    let status = melkit()
        .arg("features")
        .arg(&wav)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));

    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn stereo_wav_is_averaged_to_mono() {
    let dir = temp_dir("stereo");
    // stereo file with opposite-phase channels cancels to silence
    let rate: u32 = 22050;
    let samples = 4096usize;
    let mut pcm = Vec::new();
    for t in 0..samples {
        let x = 0.5 * (2.0 * std::f64::consts::PI * 440.0 * t as f64 / rate as f64).sin();
        let v = (x * 32767.0) as i16;
        pcm.extend_from_slice(&v.to_le_bytes());
        pcm.extend_from_slice(&(-v).to_le_bytes());
    }
    let mut body = Vec::new();
    body.extend_from_slice(b"WAVE");
    body.extend_from_slice(b"fmt ");
    body.extend_from_slice(&16u32.to_le_bytes());
    body.extend_from_slice(&1u16.to_le_bytes());
    body.extend_from_slice(&2u16.to_le_bytes()); // stereo
    body.extend_from_slice(&rate.to_le_bytes());
    body.extend_from_slice(&(rate * 4).to_le_bytes());
    body.extend_from_slice(&4u16.to_le_bytes());
    body.extend_from_slice(&16u16.to_le_bytes());
    body.extend_from_slice(b"data");
    body.extend_from_slice(&(pcm.len() as u32).to_le_bytes());
    body.extend_from_slice(&pcm);
    let mut file = Vec::new();
    file.extend_from_slice(b"RIFF");
    file.extend_from_slice(&(body.len() as u32).to_le_bytes());
    file.extend_from_slice(&body);
    let wav = dir.join("stereo.wav");
    std::fs::write(&wav, file).unwrap();

    let out = dir.join("feat.csv");
    let status = melkit()
        .arg("features")
        .arg(&wav)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    // every feature sits at the clip floor: ln(1e-7)
    let text = std::fs::read_to_string(&out).unwrap();
    let floor = 1e-7f64.ln();
    for line in text.lines().skip(1) {
        for v in line.split(',').skip(1) {
            let v: f64 = v.parse().unwrap();
            assert!((v - floor).abs() < 1e-12, "expected clip floor, got {v}");
        }
    }
    std::fs::remove_dir_all(&dir).unwrap();
}
