use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wordfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wordfield"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn wordfield")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_train_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(
        root.join("books.txt"),
        "# two small books\n\
         book_id=alpha n_classes=10 samples_per_class=26 image_w=80 image_h=40 seed=1\n\
         book_id=beta n_classes=12 samples_per_class=26 image_w=80 image_h=40 seed=2 style_family=1\n",
    )
    .unwrap();
    fs::write(
        root.join("exp.cfg"),
        "methods = bovw, cnn, tapped\nseed = 4\ncnn.epochs = 1\nmorph.variants = 1\n\
         som.grid_w = 4\nsom.grid_h = 4\nsom.epochs = 1\nbovw.codebook_images = 30\nparallel_books = false\n",
    )
    .unwrap();
    let data = root.join("data");
    ok(&wordfield(&["gen-synth", "--spec", s(&root.join("books.txt")), "--out", s(&data)]));
    let manifest = data.join("manifest.tsv");
    assert!(manifest.exists());
    assert!(data.join("alpha").read_dir().unwrap().count() == 260);

    let cb = root.join("fam0.wfcb");
    let cfg = root.join("exp.cfg");
    ok(&wordfield(&["train-codebook", "--manifest", s(&manifest), "--out", s(&cb), "--config", s(&cfg)]));
    assert_eq!(&fs::read(&cb).unwrap()[..4], b"WFCB");

    let cfg_text = fs::read_to_string(&cfg).unwrap() + &format!("bovw.codebooks = {}\n", cb.display());
    fs::write(&cfg, cfg_text).unwrap();
    let out = root.join("out");
    ok(&wordfield(&["run", "--config", s(&cfg), "--manifest", s(&manifest), "--output", s(&out)]));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("book_id,method,attempt,"));
    assert!(lines[1].starts_with("alpha,bovw,1,10,200,200,30,"), "{}", lines[1]);
    assert!(lines.iter().skip(1).all(|l| l.ends_with(',')), "unexpected error notes:\n{csv}");
    assert!(out.join("config.txt").exists());

    let rep = wordfield(&["report", "--results", s(&out.join("results.csv")), "--band-width", "10"]);
    ok(&rep);
    let stdout = String::from_utf8_lossy(&rep.stdout);
    assert!(stdout.contains("method\tn_books"));
    let hist = fs::read_to_string(out.join("histogram.tsv")).unwrap();
    assert_eq!(hist.lines().count(), 11);
    let factor = fs::read_to_string(out.join("accuracy_vs_n_classes.tsv")).unwrap();
    assert_eq!(factor.lines().count(), lines.len());
}

#[test]
fn configuration_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let bad_cfg = root.join("bad.cfg");
    fs::write(&bad_cfg, "max_attempts = 0\n").unwrap();
    fs::write(root.join("m.tsv"), "").unwrap();
    let out = wordfield(&["run", "--config", s(&bad_cfg), "--manifest", s(&root.join("m.tsv"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_attempts"));

    let missing = wordfield(&["run", "--manifest", s(&root.join("nope.tsv"))]);
    assert!(!missing.status.success());

    let no_results = wordfield(&["report", "--results", s(&root.join("none.csv"))]);
    assert!(!no_results.status.success());

    let bad_factor = wordfield(&["report", "--results", s(&root.join("none.csv")), "--factor", "pages"]);
    assert!(!bad_factor.status.success());
}

#[test]
fn unwritable_output_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("books.txt"), "book_id=g n_classes=10 samples_per_class=26 image_w=60 image_h=30 seed=1\n").unwrap();
    let data = root.join("data");
    ok(&wordfield(&["gen-synth", "--spec", s(&root.join("books.txt")), "--out", s(&data)]));
    let blocker = root.join("blocker");
    fs::write(&blocker, "").unwrap();
    let out = wordfield(&[
        "run",
        "--manifest",
        s(&data.join("manifest.tsv")),
        "--output",
        s(&blocker.join("sub")),
    ]);
    assert!(!out.status.success());
}
