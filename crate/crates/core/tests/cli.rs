use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

use desire_core::checkpoint::Checkpoint;
use desire_core::dataset::{encode_idx_images, encode_idx_labels, IMAGE_PIXELS};
use desire_core::metrics::MetricsRecord;
use flate2::write::GzEncoder;
use flate2::Compression;

fn desire(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_desire"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

/// Class k lights up rows 2k..2k+3 of the image.
fn synthetic(n: usize, offset: usize) -> (Vec<Vec<u8>>, Vec<u8>) {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for s in 0..n {
        let label = ((s + offset) % 10) as u8;
        let mut img = vec![0u8; IMAGE_PIXELS];
        for row in 2 * label as usize..2 * label as usize + 3 {
            for col in 4..24 {
                img[row * 28 + col] = 140 + ((s * 37 + col * 11) % 116) as u8;
            }
        }
        images.push(img);
        labels.push(label);
    }
    (images, labels)
}

fn write_dataset(dir: &Path) {
    let (images, labels) = synthetic(80, 0);
    let mut gz = GzEncoder::new(Vec::new(), Compression::default());
    gz.write_all(&encode_idx_images(&images)).unwrap();
    fs::write(dir.join("train-images-idx3-ubyte.gz"), gz.finish().unwrap()).unwrap();
    fs::write(
        dir.join("train-labels-idx1-ubyte"),
        encode_idx_labels(&labels),
    )
    .unwrap();
    let (images, labels) = synthetic(30, 3);
    fs::write(
        dir.join("t10k-images-idx3-ubyte"),
        encode_idx_images(&images),
    )
    .unwrap();
    fs::write(
        dir.join("t10k-labels-idx1-ubyte"),
        encode_idx_labels(&labels),
    )
    .unwrap();
}

fn train_into(data: &Path, out: &Path) -> Output {
    desire(&[
        "train",
        "--arch",
        "784,32,10",
        "--epochs",
        "2",
        "--seed",
        "5",
        "--dataset-dir",
        data.to_str().unwrap(),
        "--metrics-dir",
        out.join("metrics").to_str().unwrap(),
        "--checkpoint",
        out.join("run.ckpt").to_str().unwrap(),
        "--svg",
        "--record-activity",
        "--contribution-samples",
        "4",
    ])
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn train_eval_export_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    write_dataset(&data);

    let run_a = tmp.path().join("a");
    let out = train_into(&data, &run_a);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("final test accuracy"), "{stdout}");

    let metrics = run_a.join("metrics");
    let accuracy = fs::read_to_string(metrics.join("accuracy.csv")).unwrap();
    assert_eq!(accuracy.lines().count(), 3, "{accuracy}");
    for name in [
        "local_loss.csv",
        "activity.csv",
        "contribution.csv",
        "accuracy_loss.svg",
        "activity.svg",
    ] {
        assert!(metrics.join(name).is_file(), "{name}");
    }
    let record = MetricsRecord::read_csv(&metrics).unwrap();
    assert_eq!(record.contribution.len(), 4 * IMAGE_PIXELS);
    let ckpt = Checkpoint::load(&run_a.join("run.ckpt")).unwrap();
    assert_eq!((ckpt.epoch, ckpt.arch.clone()), (2, vec![784, 32, 10]));

    // Same config and seed: byte-identical artifacts.
    let run_b = tmp.path().join("b");
    assert_ok(&train_into(&data, &run_b));
    for rel in [
        "run.ckpt",
        "metrics/accuracy.csv",
        "metrics/local_loss.csv",
        "metrics/activity.csv",
        "metrics/contribution.csv",
    ] {
        assert_eq!(
            fs::read(run_a.join(rel)).unwrap(),
            fs::read(run_b.join(rel)).unwrap(),
            "{rel}"
        );
    }

    let eval = desire(&[
        "eval",
        "--checkpoint",
        run_a.join("run.ckpt").to_str().unwrap(),
        "--dataset-dir",
        data.to_str().unwrap(),
    ]);
    assert_ok(&eval);
    let text = String::from_utf8_lossy(&eval.stdout);
    let last = record.accuracy.last().unwrap().accuracy;
    assert!(
        text.contains(&format!("accuracy {last:.4}")),
        "{text} vs {last}"
    );

    let exported = tmp.path().join("exported");
    assert_ok(&desire(&[
        "export",
        "--metrics-dir",
        metrics.to_str().unwrap(),
        "--output",
        exported.to_str().unwrap(),
        "--svg",
    ]));
    assert_eq!(MetricsRecord::read_csv(&exported).unwrap(), record);

    let csv = tmp.path().join("complexity.csv");
    assert_ok(&desire(&[
        "profile",
        "--arch",
        "784,64,10",
        "--output",
        csv.to_str().unwrap(),
    ]));
    let table = fs::read_to_string(&csv).unwrap();
    assert!(table
        .lines()
        .any(|l| l == "phase,metric,measured,formula,pass"));
    assert!(!table.contains(",false"));
}

#[test]
fn resume_continues_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    write_dataset(&data);
    let full = tmp.path().join("full");
    assert_ok(&train_into(&data, &full));

    let split = tmp.path().join("split");
    let args = |epochs: &str| {
        vec![
            "train".to_string(),
            "--arch=784,32,10".into(),
            format!("--epochs={epochs}"),
            "--seed=5".into(),
            format!("--dataset-dir={}", data.display()),
            format!("--metrics-dir={}", split.join("metrics").display()),
            format!("--checkpoint={}", split.join("run.ckpt").display()),
            "--resume".into(),
            "--record-activity".into(),
            "--contribution-samples=4".into(),
        ]
    };
    let run = |epochs: &str| {
        let a = args(epochs);
        desire(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    assert_ok(&run("1"));
    assert_ok(&run("2"));
    assert_eq!(
        fs::read(full.join("run.ckpt")).unwrap(),
        fs::read(split.join("run.ckpt")).unwrap()
    );
    assert_eq!(
        fs::read(full.join("metrics/accuracy.csv")).unwrap(),
        fs::read(split.join("metrics/accuracy.csv")).unwrap()
    );
}

#[test]
fn bad_inputs_fail_with_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let out = desire(&[
        "train",
        "--arch",
        "100,10",
        "--dataset-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("784"));

    let config = tmp.path().join("run.toml");
    fs::write(&config, "theta_outt = 0.2\n").unwrap();
    let out = desire(&["train", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta_outt"));

    let out = desire(&[
        "train",
        "--arch",
        "784,10",
        "--epochs",
        "1",
        "--dataset-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("train-images"));

    let ckpt = tmp.path().join("broken.ckpt");
    fs::write(&ckpt, b"DBPC\x01").unwrap();
    let out = desire(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--dataset-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}
