mod common;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use bridgepath::cli::manifest::RunManifest;
use common::fixture;

const BIN: &str = env!("CARGO_BIN_EXE_bridgepath");

fn f(name: &str) -> String {
    fixture(name).display().to_string()
}

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new() -> Self {
        Run {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    /// Ingest, sample, train and build IDF with the fixture config.
    fn trained() -> Self {
        let r = Run::new();
        let config = f("pipeline.toml");
        r.ok(&["ingest", "--assertions", &f("assertions.tsv"), "--out", "g.bin"]);
        r.ok(&[
            "sample-paths",
            "--config",
            &config,
            "--graph",
            "g.bin",
            "--out",
            "paths.txt",
        ]);
        r.ok(&[
            "train-pathlm",
            "--config",
            &config,
            "--paths",
            "paths.txt",
            "--out",
            "model.json",
        ]);
        r.ok(&["build-idf", "--instances", &f("instances.jsonl"), "--out", "idf.tsv"]);
        r
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run_with(&self, args: &[&str], stdin: &str) -> Output {
        let mut child = Command::new(BIN)
            .current_dir(self.dir.path())
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
        child.wait_with_output().unwrap()
    }

    fn run(&self, args: &[&str]) -> Output {
        self.run_with(args, "")
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }

    fn manifest(&self, output: &str) -> RunManifest {
        serde_json::from_str(&self.read(&format!("{output}.manifest.json"))).unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    let r = Run::new();
    assert_eq!(code(&r.run(&[])), 1);
    assert_eq!(code(&r.run(&["no-such-command"])), 1);
    assert_eq!(code(&r.run(&["ingest", "--bogus"])), 1);
    // Missing required option.
    assert_eq!(code(&r.run(&["ingest", "--out", "g.bin"])), 1);
    assert_eq!(code(&r.run(&["steer", "--model", "m", "--idf", "i", "--seed", "1"])), 1);
    assert_eq!(code(&r.run(&["--help"])), 0);
}

#[test]
fn data_errors_exit_two() {
    let r = Run::new();
    assert_eq!(
        code(&r.run(&["ingest", "--assertions", "missing.tsv", "--out", "g.bin"])),
        2
    );
    std::fs::write(r.path("bad.tsv"), "IsA\tonly_two\n").unwrap();
    let out = r.run(&["ingest", "--assertions", "bad.tsv", "--out", "g.bin"]);
    assert_eq!(code(&out), 2);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert!(!r.path("g.bin").exists());
}

#[test]
fn ingest_writes_manifest() {
    let r = Run::new();
    r.ok(&["ingest", "--assertions", &f("assertions.tsv"), "--out", "g.bin"]);
    let m = r.manifest("g.bin");
    assert_eq!(m.subcommand, "ingest");
    assert_eq!(m.outputs, vec![PathBuf::from("g.bin")]);
    assert!(m.inputs.iter().any(|p| p.ends_with("assertions.tsv")));
    assert_eq!(m.argv[0], "ingest");
}

#[test]
fn config_values_are_recorded() {
    let r = Run::trained();
    let m = r.manifest("paths.txt");
    assert_eq!(m.seed, Some(7));
    assert_eq!(m.config["count"], 10000);
    assert_eq!(m.config["max-hops"], 4);
    let lines = r.read("paths.txt");
    assert_eq!(lines.lines().count(), 10000);
    assert_eq!(r.manifest("model.json").config["order"], 5);
}

#[test]
fn gen_path_is_deterministic() {
    let r = Run::trained();
    let args = [
        "gen-path",
        "--model",
        "model.json",
        "--head",
        "sand",
        "--tail",
        "puppy",
        "--seed",
        "7",
    ];
    let first = r.ok(&args);
    assert_eq!(first, r.ok(&args));
    assert!(!first.is_empty());
    for line in first.lines() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 3, "{line}");
        let lp: f64 = fields[0].parse().unwrap();
        assert!(lp < 0.0);
        assert!(
            fields[1].starts_with("sand ") && fields[1].ends_with(" puppy"),
            "{line}"
        );
    }
    let other = r.ok(&[
        "gen-path",
        "--model",
        "model.json",
        "--head",
        "sand",
        "--tail",
        "puppy",
        "--seed",
        "8",
    ]);
    assert!(!other.is_empty());
}

#[test]
fn gen_path_with_required_entity() {
    let r = Run::trained();
    let out = r.ok(&[
        "gen-path",
        "--model",
        "model.json",
        "--head",
        "garden",
        "--tail",
        "restaurant",
        "--require",
        "best_ingredients",
        "--seed",
        "3",
    ]);
    for line in out.lines() {
        assert!(
            line.split('\t').nth(1).unwrap().contains(" best_ingredients "),
            "{line}"
        );
    }
}

#[test]
fn unknown_concept_is_a_data_error() {
    let r = Run::trained();
    let out = r.run(&[
        "gen-path",
        "--model",
        "model.json",
        "--head",
        "zeppelin",
        "--tail",
        "puppy",
        "--seed",
        "1",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn serve_answers_protocol_queries() {
    let r = Run::trained();
    let out = r.run_with(
        &[
            "gen-path",
            "--serve",
            "--model",
            "model.json",
            "--seed",
            "1",
            "--num-samples",
            "2",
        ],
        "HT\tsand\tpuppy\nWC\tgarden\trestaurant\tbest_ingredients\nHT\tzeppelin\tpuppy\n",
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4, "{text}");
    for l in &lines[..2] {
        assert!(l.contains("[target] puppy [sep] sand"), "{l}");
    }
    for l in &lines[2..] {
        assert!(
            l.starts_with("[wc] best_ingredients [target] restaurant [sep] garden"),
            "{l}"
        );
    }
}

#[test]
fn prep_crg_with_external_generator() {
    let r = Run::trained();
    let generator = format!("{BIN} gen-path --serve --model model.json");
    r.ok(&[
        "prep-crg",
        "--config",
        &f("pipeline.toml"),
        "--instances",
        &f("instances.jsonl"),
        "--idf",
        "idf.tsv",
        "--model",
        "model.json",
        "--generator-cmd",
        &generator,
        "--lexicon",
        &f("lexicon.tsv"),
        "--vocab-graph",
        "g.bin",
        "--out",
        "ext.jsonl",
    ]);
    r.ok(&[
        "prep-crg",
        "--config",
        &f("pipeline.toml"),
        "--instances",
        &f("instances.jsonl"),
        "--idf",
        "idf.tsv",
        "--model",
        "model.json",
        "--lexicon",
        &f("lexicon.tsv"),
        "--vocab-graph",
        "g.bin",
        "--out",
        "int.jsonl",
    ]);
    let (ext, int) = (r.read("ext.jsonl"), r.read("int.jsonl"));
    assert!(!ext.is_empty());
    // Same model, seeds and filter on both sides of the protocol.
    assert_eq!(ext, int);
}

#[test]
fn prep_crg_infer_phase_needs_no_response() {
    let r = Run::trained();
    r.ok(&[
        "prep-crg",
        "--config",
        &f("pipeline.toml"),
        "--instances",
        &f("instances.jsonl"),
        "--idf",
        "idf.tsv",
        "--model",
        "model.json",
        "--lexicon",
        &f("lexicon.tsv"),
        "--vocab-graph",
        "g.bin",
        "--phase",
        "infer",
        "--out",
        "infer.jsonl",
    ]);
    let text = r.read("infer.jsonl");
    assert!(text.lines().count() >= 5);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let seq = v["crg_sequence"].as_str().unwrap();
        assert!(!seq.contains("[response]"), "{seq}");
        assert!(seq.contains(" [target] "), "{seq}");
    }
}

#[test]
fn steer_with_keyword() {
    let r = Run::trained();
    let args = [
        "steer",
        "--model",
        "model.json",
        "--idf",
        "idf.tsv",
        "--seed",
        "7",
        "--vocab-graph",
        "g.bin",
        "--lexicon",
        &f("lexicon.tsv"),
        "--context",
        "i have an amazing garden.",
        "--target",
        "you can try our restaurant.",
        "--out",
        "steer.jsonl",
    ];
    let out = r.run_with(&args, "best ingredients\n1\n");
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("bridging garden -> try"), "{text}");
    let v: serde_json::Value = serde_json::from_str(r.read("steer.jsonl").lines().next().unwrap()).unwrap();
    assert!(v["path"].as_str().unwrap().contains("best_ingredients"), "{v}");
    let seq = v["crg_sequence"].as_str().unwrap();
    assert!(
        seq.ends_with(" [target] you can try our restaurant. [context] i have an amazing garden."),
        "{seq}"
    );
    assert_eq!(r.manifest("steer.jsonl").stdin, vec!["best ingredients", "1"]);

    let before = r.read("steer.jsonl");
    std::fs::remove_file(r.path("steer.jsonl")).unwrap();
    r.ok(&["replay", "steer.jsonl.manifest.json"]);
    assert_eq!(r.read("steer.jsonl"), before);
}

#[test]
fn steer_skip_and_quit() {
    let r = Run::trained();
    let args = [
        "steer",
        "--model",
        "model.json",
        "--idf",
        "idf.tsv",
        "--seed",
        "7",
        "--vocab-graph",
        "g.bin",
        "--lexicon",
        &f("lexicon.tsv"),
        "--instances",
        &f("instances.jsonl"),
        "--out",
        "s.jsonl",
    ];
    r.run_with(&args, ":skip\n:quit\n");
    assert_eq!(r.read("s.jsonl"), "");
    // End of input behaves like :quit.
    let out = r.run_with(&args, "");
    assert_eq!(code(&out), 0);
}

#[test]
fn augment_and_tc_commands() {
    let r = Run::new();
    // Stand-in for a trained coherence scorer: every triple scores 0.9.
    r.ok(&[
        "augment",
        "--dialogues",
        &f("dialogues.jsonl"),
        "--scorer-cmd",
        "awk '{print 0.9}'",
        "--out",
        "aug.jsonl",
    ]);
    let aug = r.read("aug.jsonl");
    assert_eq!(aug.lines().count(), 2, "{aug}");
    assert!(aug.contains("the pasta tastes nice here."), "{aug}");
    assert!(r.path("aug.jsonl.skipped.jsonl").exists());
    assert!(r.path("aug.jsonl.scores.jsonl").exists());
    r.ok(&[
        "augment",
        "--dialogues",
        &f("dialogues.jsonl"),
        "--threshold",
        "0",
        "--out",
        "aug0.jsonl",
    ]);
    assert_eq!(r.read("aug0.jsonl").lines().count(), 2);

    r.ok(&[
        "synth-tc",
        "--instances",
        &f("instances.jsonl"),
        "--seed",
        "5",
        "--out",
        "tc.jsonl",
    ]);
    let tc = r.read("tc.jsonl");
    let labels: Vec<String> = tc
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["label"].to_string())
        .collect();
    let pos = labels.iter().filter(|l| l.as_str() == "\"POSITIVE\"").count();
    assert_eq!(pos * 2, labels.len(), "{tc}");
    let again = Run::new();
    again.ok(&[
        "synth-tc",
        "--instances",
        &f("instances.jsonl"),
        "--seed",
        "5",
        "--out",
        "tc.jsonl",
    ]);
    assert_eq!(again.read("tc.jsonl"), tc);
}

#[test]
fn eval_probe_clean() {
    let r = Run::new();
    r.ok(&[
        "eval",
        "--input",
        &f("eval.jsonl"),
        "--ratings",
        &f("ratings.csv"),
        "--out",
        "eval.tsv",
    ]);
    let table = r.read("eval.tsv");
    for metric in ["BLEU", "ROUGE-L", "TARGET-COHERENCE", "SPEARMAN"] {
        assert!(
            table.lines().any(|l| l.starts_with(metric)),
            "{metric} missing:\n{table}"
        );
    }
    r.ok(&["probe", "--input", &f("eval.jsonl"), "--out", "probe.tsv"]);
    assert!(r.read("probe.tsv").lines().count() >= 6);
    std::fs::write(
        r.path("test.jsonl"),
        concat!(
            r#"{"context": ["the sand is nice."], "target": "my puppy is happy.", "response": "yes my puppy is happy."}"#,
            "\n",
            r#"{"context": ["the park is big."], "target": "our house is old.", "response": "the dog is in the park."}"#,
            "\n",
        ),
    )
    .unwrap();
    r.ok(&["clean", "--instances", "test.jsonl", "--out", "clean.jsonl"]);
    let kept = r.read("clean.jsonl");
    assert_eq!(kept.lines().count(), 1, "{kept}");
    assert!(kept.contains("our house is old."));
}

#[test]
fn replay_is_byte_identical() {
    let r = Run::trained();
    for out in ["g.bin", "paths.txt", "model.json", "idf.tsv"] {
        let before = std::fs::read(r.path(out)).unwrap();
        std::fs::remove_file(r.path(out)).unwrap();
        r.ok(&["replay", &format!("{out}.manifest.json")]);
        assert_eq!(std::fs::read(r.path(out)).unwrap(), before, "{out}");
    }
    let out = r.run(&["replay", "missing.manifest.json"]);
    assert_ne!(code(&out), 0);
    assert!(Path::new(&r.path("paths.txt")).exists());
}

#[test]
fn sharded_sampling_repeats() {
    let r = Run::trained();
    r.ok(&[
        "sample-paths",
        "--config",
        &f("pipeline.toml"),
        "--graph",
        "g.bin",
        "--workers",
        "3",
        "--out",
        "p3.txt",
    ]);
    assert_eq!(r.read("p3.txt").lines().count(), 10000);
    r.ok(&[
        "sample-paths",
        "--config",
        &f("pipeline.toml"),
        "--graph",
        "g.bin",
        "--workers",
        "3",
        "--out",
        "p3b.txt",
    ]);
    assert_eq!(r.read("p3.txt"), r.read("p3b.txt"));
}
