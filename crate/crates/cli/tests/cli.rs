//! Exercises the binary end to end: exit codes, output files, and
//! determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use relight_core::image::{init_decomposition, load_image, save_image, Image};
use relight_core::priors::{MaeConfig, PriorKind, PriorModel};
use relight_core::tensor::{read_tensor, save_prior_model};
use tempfile::TempDir;

fn relight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relight"))
        .args(args)
        .output()
        .expect("binary should run")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn test_image(seed: u64) -> Image {
    let mut img = Image::zeros(32, 32, 3);
    for y in 0..32 {
        for x in 0..32 {
            let base = 0.3 + 0.4 * x as f64 / 31.0 + 0.2 * y as f64 / 31.0;
            let wobble = 0.08 * (((x * 3 + y * 7 + seed as usize) % 13) as f64 / 13.0);
            for c in 0..3 {
                img.set(x, y, c, (base + wobble - 0.04 * c as f64).clamp(0.02, 0.98));
            }
        }
    }
    img
}

fn write_fixture(dir: &Path, name: &str, seed: u64) -> PathBuf {
    let path = dir.join(name);
    save_image(&test_image(seed), &path).unwrap();
    path
}

#[test]
fn decompose_writes_previews_and_tensors() {
    let dir = TempDir::new().unwrap();
    let input = write_fixture(dir.path(), "in.png", 1);
    let prefix = dir.path().join("out").to_str().unwrap().to_string();

    let out = relight(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--out-prefix",
        &prefix,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for suffix in [
        "_L.png", "_R.png", "_N.png", "_L.cuet", "_R.cuet", "_N.cuet",
    ] {
        assert!(
            Path::new(&format!("{prefix}{suffix}")).exists(),
            "missing {suffix}"
        );
    }

    let (dims, _) = read_tensor(format!("{prefix}_L.cuet")).unwrap();
    assert_eq!(dims, vec![32, 32]);
    let (dims, _) = read_tensor(format!("{prefix}_R.cuet")).unwrap();
    assert_eq!(dims, vec![32, 32, 3]);
}

#[test]
fn decompose_missing_input_exits_2() {
    let dir = TempDir::new().unwrap();
    let prefix = dir.path().join("x").to_str().unwrap().to_string();
    let out = relight(&[
        "decompose",
        "--input",
        "/nonexistent/missing.png",
        "--out-prefix",
        &prefix,
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn decompose_zero_stages_equals_initialization() {
    let dir = TempDir::new().unwrap();
    let input = write_fixture(dir.path(), "in.png", 2);
    let prefix = dir.path().join("z").to_str().unwrap().to_string();
    let out = relight(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--out-prefix",
        &prefix,
        "--stages",
        "0",
    ]);
    assert_eq!(code(&out), 0);

    let loaded = load_image(&input).unwrap();
    let init = init_decomposition(&loaded);
    let (_, l) = read_tensor(format!("{prefix}_L.cuet")).unwrap();
    assert_eq!(l, init.illumination.data());
    let (_, r) = read_tensor(format!("{prefix}_R.cuet")).unwrap();
    assert_eq!(r, init.reflectance.data());
    let (_, n) = read_tensor(format!("{prefix}_N.cuet")).unwrap();
    assert!(n.iter().all(|&v| v == 0.0));
}

#[test]
fn decompose_reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let input = write_fixture(dir.path(), "in.png", 3);
    let mut all = Vec::new();
    for run in 0..2 {
        let prefix = dir
            .path()
            .join(format!("r{run}"))
            .to_str()
            .unwrap()
            .to_string();
        let out = relight(&[
            "decompose",
            "--input",
            input.to_str().unwrap(),
            "--out-prefix",
            &prefix,
        ]);
        assert_eq!(code(&out), 0);
        let mut bytes = Vec::new();
        for suffix in [
            "_L.png", "_R.png", "_N.png", "_L.cuet", "_R.cuet", "_N.cuet",
        ] {
            bytes.push(std::fs::read(format!("{prefix}{suffix}")).unwrap());
        }
        all.push(bytes);
    }
    assert_eq!(all[0], all[1]);
}

#[test]
fn decompose_with_learned_prior_runs() {
    let dir = TempDir::new().unwrap();
    let input = write_fixture(dir.path(), "in.png", 4);
    let model = PriorModel::seeded(PriorKind::Illumination, &MaeConfig::default(), 7).unwrap();
    let model_path = dir.path().join("prior.cuep");
    save_prior_model(&model, &model_path).unwrap();
    let prefix = dir.path().join("p").to_str().unwrap().to_string();
    let out = relight(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--out-prefix",
        &prefix,
        "--prior",
        model_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn decompose_history_dump() {
    let dir = TempDir::new().unwrap();
    let input = write_fixture(dir.path(), "in.png", 5);
    let config = dir.path().join("cfg.txt");
    std::fs::write(&config, "unfold.record_history = true\nunfold.stages = 2\n").unwrap();
    let prefix = dir.path().join("h").to_str().unwrap().to_string();
    let out = relight(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--out-prefix",
        &prefix,
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    for stage in 0..=2 {
        assert!(Path::new(&format!("{prefix}_stage{stage}_L.cuet")).exists());
    }
    let (dims, residuals) = read_tensor(format!("{prefix}_residuals.cuet")).unwrap();
    assert_eq!(dims, vec![3]);
    assert_eq!(residuals.len(), 3);
}

#[test]
fn enhance_requires_exactly_one_ratio_source() {
    let dir = TempDir::new().unwrap();
    let input = write_fixture(dir.path(), "in.png", 6);
    let out_path = dir.path().join("e.png");

    let neither = relight(&[
        "enhance",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&neither), 1);

    let both = relight(&[
        "enhance",
        "--input",
        input.to_str().unwrap(),
        "--ratio",
        "1.5",
        "--ref",
        input.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&both), 1);
}

#[test]
fn enhance_missing_reference_fails() {
    let dir = TempDir::new().unwrap();
    let input = write_fixture(dir.path(), "in.png", 7);
    let out_path = dir.path().join("e.png");
    let out = relight(&[
        "enhance",
        "--input",
        input.to_str().unwrap(),
        "--ref",
        "/nonexistent/ref.png",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn enhance_unit_ratio_is_near_identity() {
    let dir = TempDir::new().unwrap();
    let input = write_fixture(dir.path(), "in.png", 8);
    let config = dir.path().join("cfg.txt");
    std::fs::write(&config, "unfold.prox_l = identity\n").unwrap();
    let out_path = dir.path().join("e.png");
    let out = relight(&[
        "enhance",
        "--input",
        input.to_str().unwrap(),
        "--ratio",
        "1",
        "--out",
        out_path.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let mean = |img: &Image| img.data().iter().sum::<f64>() / img.data().len() as f64;
    let original = load_image(&input).unwrap();
    let enhanced = load_image(&out_path).unwrap();
    assert!((mean(&enhanced) - mean(&original)).abs() <= 2.0 / 255.0);

    // Deterministic across runs.
    let out_path2 = dir.path().join("e2.png");
    let rerun = relight(&[
        "enhance",
        "--input",
        input.to_str().unwrap(),
        "--ratio",
        "1",
        "--out",
        out_path2.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(code(&rerun), 0);
    assert_eq!(
        std::fs::read(&out_path).unwrap(),
        std::fs::read(&out_path2).unwrap()
    );
}

#[test]
fn enhance_with_reference_prints_metrics() {
    let dir = TempDir::new().unwrap();
    let input = write_fixture(dir.path(), "in.png", 9);
    let reference = write_fixture(dir.path(), "ref.png", 9);
    let out_path = dir.path().join("e.png");
    let out = relight(&[
        "enhance",
        "--input",
        input.to_str().unwrap(),
        "--ref",
        reference.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("psnr_db="), "stdout: {stdout}");
    assert!(stdout.contains("ssim="), "stdout: {stdout}");
}

#[test]
fn train_prior_contract() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    write_fixture(&data, "a.png", 10);

    // Zero epochs: the file holds the seeded initialization.
    let model_path = dir.path().join("m0.cuep");
    let out = relight(&[
        "train-prior",
        "--kind",
        "illumination",
        "--data",
        data.to_str().unwrap(),
        "--epochs",
        "0",
        "--seed",
        "21",
        "--out",
        model_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let expected = PriorModel::seeded(PriorKind::Illumination, &MaeConfig::default(), 21).unwrap();
    let expected_path = dir.path().join("expected.cuep");
    save_prior_model(&expected, &expected_path).unwrap();
    assert_eq!(
        std::fs::read(&model_path).unwrap(),
        std::fs::read(&expected_path).unwrap()
    );

    // Loss line per epoch; same seed gives byte-identical files.
    let run = |out_name: &str| -> (Vec<u8>, usize) {
        let path = dir.path().join(out_name);
        let out = relight(&[
            "train-prior",
            "--kind",
            "noise",
            "--data",
            data.to_str().unwrap(),
            "--epochs",
            "4",
            "--seed",
            "3",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        let lines = String::from_utf8_lossy(&out.stdout)
            .lines()
            .filter(|l| !l.is_empty())
            .count();
        (std::fs::read(&path).unwrap(), lines)
    };
    let (bytes_a, lines_a) = run("m1.cuep");
    let (bytes_b, lines_b) = run("m2.cuep");
    assert_eq!(lines_a, 4);
    assert_eq!(lines_b, 4);
    assert_eq!(bytes_a, bytes_b);

    // Empty data directory fails.
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = relight(&[
        "train-prior",
        "--kind",
        "noise",
        "--data",
        empty.to_str().unwrap(),
        "--epochs",
        "1",
        "--out",
        dir.path().join("m3.cuep").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_contract() {
    let dir = TempDir::new().unwrap();
    let pred = dir.path().join("pred");
    let gt = dir.path().join("gt");
    std::fs::create_dir(&pred).unwrap();
    std::fs::create_dir(&gt).unwrap();
    write_fixture(&pred, "a.png", 11);
    write_fixture(&gt, "a.png", 11);
    write_fixture(&pred, "b.png", 12);
    write_fixture(&gt, "b.png", 12);
    write_fixture(&pred, "only_pred.png", 13);

    let csv = dir.path().join("scores.csv");
    let out = relight(&[
        "eval",
        "--pred",
        pred.to_str().unwrap(),
        "--gt",
        gt.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("only_pred.png"));

    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3, "{text}");
    assert!(rows[0].starts_with("a.png,inf,1"));
    assert!(rows[1].starts_with("b.png,inf,1"));
    assert!(rows[2].starts_with("mean,inf,1"));

    // Disjoint directories: no matches.
    let lonely = dir.path().join("lonely");
    std::fs::create_dir(&lonely).unwrap();
    write_fixture(&lonely, "c.png", 14);
    let out = relight(&[
        "eval",
        "--pred",
        lonely.to_str().unwrap(),
        "--gt",
        gt.to_str().unwrap(),
        "--out",
        dir.path().join("empty.csv").to_str().unwrap(),
    ]);
    assert_ne!(code(&out), 0);
}

#[test]
fn hog_writes_descriptor_tensor() {
    let dir = TempDir::new().unwrap();
    let input = write_fixture(dir.path(), "in.png", 15);
    let out_path = dir.path().join("f.cuet");
    let out = relight(&[
        "hog",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    // 32x32, cell 8, block 2, stride 1: 3x3 blocks of 4 cells x 9 bins.
    let (dims, values) = read_tensor(&out_path).unwrap();
    assert_eq!(dims, vec![3, 3, 4, 9]);
    assert_eq!(values.len(), 324);
}

#[test]
fn config_errors_exit_3_and_usage_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let input = write_fixture(dir.path(), "in.png", 16);
    let config = dir.path().join("bad.txt");
    std::fs::write(&config, "unfold.stages = never\n").unwrap();
    let out = relight(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--out-prefix",
        dir.path().join("x").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);

    let out = relight(&["no-such-command"]);
    assert_eq!(code(&out), 1);

    let out = relight(&["decompose", "--bogus-flag"]);
    assert_eq!(code(&out), 1);
}
