use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ehnet::checkpoint::Checkpoint;
use ehnet::corpus::CorpusIndex;
use ehnet::dump::read_binary_dump;
use ehnet::wav::{read_wav, write_wav};
use ehnet_core::dsp::{StftConfig, Waveform};
use ehnet_core::model::{Architecture, ModelParams};
use sha2::{Digest, Sha256};

fn ehnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ehnet"))
        .args(args)
        .env_remove("EHNET_CONFIG")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn demo(dir: &Path, seed: u64) -> PathBuf {
    let out = dir.join("demo");
    let r = ehnet(&[
        "synthesize",
        "--demo",
        "--out",
        p(&out),
        "--seed",
        &seed.to_string(),
        "--workers",
        "2",
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    out
}

fn tree_digest(root: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((
                    rel,
                    format!("{:x}", Sha256::digest(fs::read(&path).unwrap())),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn demo_synthesis_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let da = tree_digest(&demo(a.path(), 3));
    let db = tree_digest(&demo(b.path(), 3));
    assert!(da.iter().any(|(name, _)| name.ends_with("index.tsv")));
    assert_eq!(da, db);
    let c = tempfile::tempdir().unwrap();
    assert_ne!(da, tree_digest(&demo(c.path(), 4)));
}

#[test]
fn empty_manifest_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("empty.tsv");
    fs::write(&manifest, "#sample_rate=16000\n#split=train\n").unwrap();
    let r = ehnet(&[
        "synthesize",
        "--manifest",
        p(&manifest),
        "--out",
        p(&dir.path().join("out")),
    ]);
    assert_eq!(code(&r), 2);
}

fn manifest_with_missing(dir: &Path, records: usize, missing: usize) -> PathBuf {
    let root = demo(dir, 0);
    let text = fs::read_to_string(root.join("demo_manifest.tsv")).unwrap();
    let (headers, body): (Vec<&str>, Vec<&str>) = text.lines().partition(|l| l.starts_with('#'));
    let mut lines: Vec<String> = headers.iter().map(|s| s.to_string()).collect();
    for i in 0..records {
        let mut fields: Vec<String> = body[i % body.len()].split('\t').map(String::from).collect();
        if i < missing {
            fields[0] = format!("assets/clean/absent_{i}.wav");
        }
        fields[4] = i.to_string();
        lines.push(fields.join("\t"));
    }
    let path = root.join("edited.tsv");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

#[test]
fn a_few_missing_files_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = manifest_with_missing(dir.path(), 11, 1);
    let out = dir.path().join("corpus");
    let r = ehnet(&["synthesize", "--manifest", p(&manifest), "--out", p(&out)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(stdout(&r).contains("wrote 10 pairs, skipped 1"));
    assert_eq!(
        CorpusIndex::load(&out.join("index.tsv"))
            .unwrap()
            .entries
            .len(),
        10
    );
}

#[test]
fn too_many_missing_files_abort() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = manifest_with_missing(dir.path(), 11, 2);
    let r = ehnet(&[
        "synthesize",
        "--manifest",
        p(&manifest),
        "--out",
        p(&dir.path().join("corpus")),
    ]);
    assert_eq!(code(&r), 2);
}

fn loss_line(text: &str) -> (f64, f64) {
    let line = text
        .lines()
        .find(|l| l.starts_with("train loss"))
        .expect("loss line");
    let parts: Vec<&str> = line.split_whitespace().collect();
    (parts[2].parse().unwrap(), parts[4].parse().unwrap())
}

fn log_epochs(path: &Path) -> Vec<usize> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn training_reduces_loss_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let root = demo(dir.path(), 0);
    let config = root.join("demo.conf");
    let r = ehnet(&["train", "--config", p(&config), "--epochs", "20"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let text = stdout(&r);
    assert!(text.starts_with("# effective configuration"));
    let (first, last) = loss_line(&text);
    assert!(last < first, "{first} -> {last}");
    let run = root.join("run");
    assert!(run.join("best.ckpt").exists() && run.join("last.ckpt").exists());
    assert_eq!(
        log_epochs(&run.join("train.log")),
        (0..20).collect::<Vec<_>>()
    );

    let r = ehnet(&[
        "train",
        "--config",
        p(&config),
        "--epochs",
        "25",
        "--resume",
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(stdout(&r).contains("trained epochs 20..25"));
    assert_eq!(
        log_epochs(&run.join("train.log")),
        (0..25).collect::<Vec<_>>()
    );

    let enhanced = dir.path().join("enhanced");
    let index = root.join("corpus/index.tsv");
    let r = ehnet(&[
        "enhance",
        "--checkpoint",
        p(&run.join("best.ckpt")),
        "--index",
        p(&index),
        "--output",
        p(&enhanced),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let report = dir.path().join("report.tsv");
    let r = ehnet(&[
        "evaluate",
        "--index",
        p(&index),
        "--enhanced",
        p(&enhanced),
        "--config",
        p(&config),
        "--report",
        p(&report),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let rows = fs::read_to_string(&report).unwrap();
    let ids: Vec<&str> = rows
        .lines()
        .skip(1)
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(ids.len(), 7);
    assert_eq!(ids.last(), Some(&"mean"));

    let first = CorpusIndex::load(&index).unwrap().entries[0].id.clone();
    fs::remove_file(enhanced.join(format!("{first}.wav"))).unwrap();
    let r = ehnet(&[
        "evaluate",
        "--index",
        p(&index),
        "--enhanced",
        p(&enhanced),
        "--config",
        p(&config),
    ]);
    assert_eq!(code(&r), 1);
}

#[test]
fn non_finite_input_aborts_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    let root = demo(dir.path(), 0);
    let r = ehnet(&[
        "train",
        "--config",
        p(&root.join("demo.conf")),
        "--epochs",
        "2",
        "--set",
        "input_scale=1e300",
    ]);
    assert_eq!(code(&r), 3, "{}", String::from_utf8_lossy(&r.stderr));
}

fn write_tone(path: &Path, rate: u32) {
    let samples = (0..4000).map(|i| 0.3 * (i as f64 * 0.05).sin()).collect();
    write_wav(path, &Waveform::new(samples, rate).unwrap(), 16).unwrap();
}

#[test]
fn zero_model_enhances_to_silence() {
    let dir = tempfile::tempdir().unwrap();
    let stft = StftConfig::default();
    let arch = Architecture {
        bins: stft.bins_kept,
        kernels: 2,
        kernel_height: 8,
        kernel_width: 3,
        freq_stride: 8,
        hidden_sizes: vec![4],
    };
    let ckpt = dir.path().join("zero.ckpt");
    Checkpoint::new(ModelParams::zeros(&arch).unwrap(), stft)
        .save(&ckpt)
        .unwrap();
    let input = dir.path().join("in.wav");
    write_tone(&input, 16_000);
    let output = dir.path().join("out.wav");
    let r = ehnet(&[
        "enhance",
        "--checkpoint",
        p(&ckpt),
        "--input",
        p(&input),
        "--output",
        p(&output),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(read_wav(&output)
        .unwrap()
        .samples()
        .iter()
        .all(|&v| v == 0.0));

    let other = dir.path().join("8k.wav");
    write_tone(&other, 8_000);
    let r = ehnet(&[
        "enhance",
        "--checkpoint",
        p(&ckpt),
        "--input",
        p(&other),
        "--output",
        p(&output),
    ]);
    assert_eq!(code(&r), 2);
    let r = ehnet(&[
        "enhance",
        "--checkpoint",
        p(&ckpt),
        "--input",
        p(&other),
        "--output",
        p(&output),
        "--allow-any-rate",
    ]);
    assert_eq!(code(&r), 0);
}

#[test]
fn silent_wav_dumps_zero_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("zero.wav");
    write_wav(&input, &Waveform::new(vec![0.0; 2048], 16_000).unwrap(), 16).unwrap();
    let bin = dir.path().join("zero.bin");
    let r = ehnet(&[
        "dump-spectrogram",
        "--input",
        p(&input),
        "--output",
        p(&bin),
    ]);
    assert_eq!(code(&r), 0);
    let m = read_binary_dump(&bin).unwrap();
    assert_eq!(m.shape(), (256, 7));
    assert!(m.as_slice().iter().all(|&v| v == 0.0));
    let csv = dir.path().join("zero.csv");
    assert_eq!(
        code(&ehnet(&[
            "dump-spectrogram",
            "--input",
            p(&input),
            "--output",
            p(&csv)
        ])),
        0
    );
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 256);
}

#[test]
fn gradcheck_exit_codes() {
    let ok = ehnet(&["gradcheck", "--trials", "2"]);
    assert_eq!(code(&ok), 0);
    assert!(stdout(&ok).trim_end().ends_with("PASS"));
    assert_eq!(
        code(&ehnet(&[
            "gradcheck",
            "--trials",
            "1",
            "--inject-fault",
            "sign-flip"
        ])),
        1
    );
    assert_eq!(
        code(&ehnet(&["gradcheck", "--trials", "1", "--tolerance", "0"])),
        1
    );
}

#[test]
fn argument_errors() {
    assert_eq!(code(&ehnet(&["gradcheck", "--no-such-flag"])), 64);
    assert_eq!(code(&ehnet(&["frobnicate"])), 64);
    assert_eq!(code(&ehnet(&["enhance", "--checkpoint", "x.ckpt"])), 2);
    let help = ehnet(&["train", "--help"]);
    assert_eq!(code(&help), 0);
    for flag in [
        "--config",
        "--set",
        "--epochs",
        "--seed",
        "--out-dir",
        "--workers",
        "--resume",
    ] {
        assert!(stdout(&help).contains(flag), "{flag} missing from help");
    }
}
