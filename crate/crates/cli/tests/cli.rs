use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mtkit_model::toy;
use mtkit_model::trainer::{FINAL_CHECKPOINT, LOG_FILE};
use mtkit_model::{Ablation, ModelConfig, RunConfig};
use serde::Serialize;
use tempfile::TempDir;

fn mtkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtkit")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn core_fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[derive(Serialize)]
struct RunFile<'a> {
    run: &'a RunConfig,
}

fn write_run_config(dir: &Path, name: &str, run: &RunConfig) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, toml::to_string(&RunFile { run }).unwrap()).unwrap();
    path
}

fn small_model() -> ModelConfig {
    ModelConfig {
        hidden: 16,
        ffn_inner: 32,
        heads: 2,
        layers: 2,
        context: 48,
        sparse_step: 2,
        moe_expert_count: 4,
        reuse_count: 2,
        init_std: 0.1,
        ..ModelConfig::desk()
    }
}

#[test]
fn help_lists_flags_and_unknown_flags_fail() {
    let o = mtkit(&["clean-para", "--help"]);
    assert_eq!(code(&o), 0);
    let help = String::from_utf8_lossy(&o.stdout);
    for flag in ["--in", "--pair-dir", "--src", "--tgt", "--out", "--report", "--config", "--seed", "--workers"] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
    assert_eq!(code(&mtkit(&["clean-mono", "--bogus"])), 2);
    assert_eq!(code(&mtkit(&["frobnicate"])), 2);
    assert_eq!(code(&mtkit(&["score", "--hyp-ref", "x", "--out", "y", "--workers", "0"])), 2);
}

#[test]
fn clean_mono_exit_codes() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("paras.txt");
    let sentence = "今天我们在北京的大学里面讨论了关于机器翻译的很多问题，大家都觉得这个方向非常有意思而且值得继续深入研究下去。";
    fs::write(&input, format!("{sentence}短句。\nno chinese here at all, only english words in this line.\n")).unwrap();
    let out = dir.path().join("out.txt");
    let report = dir.path().join("report.txt");
    let o = mtkit(&["clean-mono", "--in", s(&input), "--out", s(&out), "--report", s(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&out).unwrap(), format!("{sentence}\n"));
    let r = fs::read_to_string(&report).unwrap();
    assert!(r.contains("outputs\t1"), "{r}");

    let missing = dir.path().join("nope.txt");
    let o = mtkit(&["clean-mono", "--in", s(&missing), "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("nope.txt"));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[mono]\nmin_char = 3\n").unwrap();
    assert_eq!(code(&mtkit(&["clean-mono", "--in", s(&input), "--out", s(&out), "--config", s(&cfg)])), 2);
    fs::write(&cfg, "[mono]\nmin_chars = 300\n").unwrap();
    assert_eq!(code(&mtkit(&["clean-mono", "--in", s(&input), "--out", s(&out), "--config", s(&cfg)])), 2);
}

#[test]
fn clean_para_golden_and_idempotent() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("para.toml");
    fs::write(
        &cfg,
        format!("[para]\nsensitive_words = {:?}\n", s(&core_fixture("sensitive.txt"))),
    )
    .unwrap();
    let out = dir.path().join("clean.tsv");
    let report = dir.path().join("report.txt");
    let input = core_fixture("para12.tsv");
    let o = mtkit(&[
        "clean-para", "--in", s(&input), "--out", s(&out), "--report", s(&report), "--config", s(&cfg), "--workers", "2",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(&report).unwrap(),
        fs::read_to_string(core_fixture("para12.report")).unwrap()
    );
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 6);

    let again = dir.path().join("again.tsv");
    let o = mtkit(&["clean-para", "--in", s(&out), "--out", s(&again), "--report", s(&report), "--config", s(&cfg)]);
    assert_eq!(code(&o), 0);
    assert!(fs::read_to_string(&report).unwrap().contains("rejected\t0\n"));
    assert_eq!(fs::read(&again).unwrap(), fs::read(&out).unwrap());
}

#[test]
fn clean_para_pair_dir() {
    let dir = TempDir::new().unwrap();
    let pairs = dir.path().join("pairs");
    fs::create_dir(&pairs).unwrap();
    let en = "The committee approved the new budget for public schools after a long debate today\n";
    let zh = "委员会今天经过长时间辩论后批准了公立学校的新预算方案\n";
    fs::write(pairs.join("a.en"), en).unwrap();
    fs::write(pairs.join("a.zh"), zh).unwrap();
    fs::write(pairs.join("notes.txt"), "ignored").unwrap();
    let out = dir.path().join("out.tsv");
    let o = mtkit(&["clean-para", "--pair-dir", s(&pairs), "--src", "en", "--tgt", "zh", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("en\tzh\tThe committee"), "{text}");
    assert!(text.trim_end().ends_with("\ta:1"));

    fs::write(pairs.join("b.en"), format!("{en}{en}")).unwrap();
    fs::write(pairs.join("b.zh"), zh).unwrap();
    let o = mtkit(&["clean-para", "--pair-dir", s(&pairs), "--src", "en", "--tgt", "zh", "--out", s(&out)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    // --pair-dir needs both languages
    assert_eq!(code(&mtkit(&["clean-para", "--pair-dir", s(&pairs), "--out", s(&out)])), 2);
}

fn write_toy_parallel(path: &Path, n: usize) {
    let text: String = toy::tiered_corpus(n, 3).iter().map(|r| format!("{}\n", r.to_tsv())).collect();
    fs::write(path, text).unwrap();
}

#[test]
fn augment_counts_tiers_and_errors() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.tsv");
    write_toy_parallel(&input, 5);
    let out = dir.path().join("out.tsv");
    let o = mtkit(&["augment", "--in", s(&input), "--out", s(&out), "--tiers", "high,medium,low,verylow"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lines: Vec<String> = fs::read_to_string(&out).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 40);
    assert_eq!(lines.iter().filter(|l| l.ends_with("\tsynthetic")).count(), 20);
    assert!(lines[..20].iter().all(|l| l.ends_with("\toriginal")));

    // re-augmenting the output adds nothing
    let again = dir.path().join("again.tsv");
    let o = mtkit(&["augment", "--in", s(&out), "--out", s(&again), "--tiers", "high,medium,low,verylow"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(&again).unwrap(), fs::read(&out).unwrap());

    // default tiers: only the az and mi pairs
    let o = mtkit(&["augment", "--in", s(&input), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&out).unwrap();
    let synthetic: Vec<&str> = text.lines().filter(|l| l.ends_with("\tsynthetic")).collect();
    assert_eq!(synthetic.len(), 10);
    assert!(synthetic.iter().all(|l| l.starts_with("az\t") || l.starts_with("mi\t")));

    // dictionary translation of the target side back into the source
    let dict = dir.path().join("zh-az.tsv");
    let entries: String = toy::TARGET_WORDS
        .iter()
        .zip(toy::SOURCE_LANGUAGES[2].1)
        .map(|(z, a)| format!("{z}\t{a}\n"))
        .collect();
    fs::write(&dict, entries).unwrap();
    let one = dir.path().join("one.tsv");
    fs::write(&one, "az\tzh\tbir iki\t一 二\tx1\n").unwrap();
    let spec = format!("zh-az={}", s(&dict));
    let o = mtkit(&["augment", "--in", s(&one), "--out", s(&out), "--translator", "dictionary", "--dict", &spec]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1, "exact duplicate is dropped");

    let missing = dir.path().join("missing.tsv");
    for args in [
        vec!["--translator", "dictionary", "--dict", s(&missing)],
        vec!["--translator", "dictionary"],
        vec!["--translator", "oracle"],
        vec!["--tiers", "mid"],
    ] {
        let mut full = vec!["augment", "--in", s(&input), "--out", s(&out)];
        full.extend(args.iter().copied());
        assert_eq!(code(&mtkit(&full)), 2, "{args:?}");
    }
}

fn stage1_config(steps: u64) -> RunConfig {
    let mut c = toy::stage1_run_config();
    c.model = small_model();
    c.optimizer.total_steps = steps;
    c.optimizer.warmup_steps = 2;
    c.optimizer.batch_size = 4;
    c
}

#[test]
fn training_resume_and_checkpoint_errors() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let mono = d.join("mono.txt");
    fs::write(&mono, toy::mono_corpus(32, 7).join("\n")).unwrap();
    let mut c1 = stage1_config(6);
    c1.data.mono = Some(mono.clone());
    let cfg1 = write_run_config(d, "s1.toml", &c1);

    let full = d.join("full");
    let o = mtkit(&["train-stage1", "--config", s(&cfg1), "--out-dir", s(&full), "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = fs::read_to_string(full.join(format!("{FINAL_CHECKPOINT}.manifest"))).unwrap();
    assert!(manifest.contains("seed\t5\n"), "{manifest}");

    // interrupted at step 3, resumed in the same directory
    let part = d.join("part");
    let o = mtkit(&["train-stage1", "--config", s(&cfg1), "--out-dir", s(&part), "--seed", "5", "--stop-after", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ck = part.join(FINAL_CHECKPOINT);
    let o = mtkit(&["train-stage1", "--config", s(&cfg1), "--out-dir", s(&part), "--seed", "5", "--resume", s(&ck)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(part.join(LOG_FILE)).unwrap(), fs::read(full.join(LOG_FILE)).unwrap());
    assert_eq!(fs::read(part.join(FINAL_CHECKPOINT)).unwrap(), fs::read(full.join(FINAL_CHECKPOINT)).unwrap());

    // another architecture cannot resume this checkpoint
    let mut wide = c1.clone();
    wide.model.hidden = 32;
    wide.model.ffn_inner = 64;
    let cfg_wide = write_run_config(d, "wide.toml", &wide);
    let o = mtkit(&["train-stage1", "--config", s(&cfg_wide), "--out-dir", s(&d.join("w")), "--resume", s(&ck)]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    // a corrupted one is refused too
    let bad = d.join("bad.ckpt");
    let mut bytes = fs::read(&ck).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    fs::write(&bad, bytes).unwrap();
    let o = mtkit(&["train-stage1", "--config", s(&cfg1), "--out-dir", s(&d.join("b")), "--resume", s(&bad)]);
    assert_eq!(code(&o), 5);
    let o = mtkit(&["train-stage1", "--config", s(&cfg1), "--out-dir", s(&d.join("b")), "--resume", s(&d.join("none.ckpt"))]);
    assert_eq!(code(&o), 3);

    // stage 2 from the stage-1 checkpoint, under the random_init ablation
    let para = d.join("para.tsv");
    write_toy_parallel(&para, 6);
    let templates = d.join("templates.txt");
    fs::write(&templates, format!("{}\n", toy::TOY_TEMPLATE)).unwrap();
    let mut c2 = toy::stage2_run_config(4);
    c2.model = small_model();
    c2.optimizer.batch_size = 4;
    c2.ablation = Ablation::RandomInit;
    c2.reinit_moe = true;
    c2.data.parallel = vec![para.clone()];
    c2.data.templates = Some(templates.clone());
    c2.data.init_checkpoint = Some(full.join(FINAL_CHECKPOINT));
    let cfg2 = write_run_config(d, "s2.toml", &c2);
    let s2 = d.join("s2");
    let o = mtkit(&["train-stage2", "--config", s(&cfg2), "--out-dir", s(&s2)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = fs::read_to_string(s2.join(format!("{FINAL_CHECKPOINT}.manifest"))).unwrap();
    assert!(manifest.contains("init_mode\trandom\n"), "{manifest}");
    assert!(fs::read_to_string(s2.join("config.toml")).unwrap().contains("random_init"));

    // a pretrain checkpoint cannot be resumed as stage 2
    let o = mtkit(&["train-stage2", "--config", s(&cfg2), "--out-dir", s(&s2), "--resume", s(&ck)]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    // mismatched schedule length is a config error
    let mut c3 = c2.clone();
    c3.optimizer.total_steps = 5;
    let cfg3 = write_run_config(d, "s3.toml", &c3);
    assert_eq!(code(&mtkit(&["train-stage2", "--config", s(&cfg3), "--out-dir", s(&s2)])), 2);

    // evaluate writes hypotheses and a report; a missing model is an I/O error
    let test = d.join("test.tsv");
    write_toy_parallel(&test, 2);
    let ev = d.join("eval");
    let args = ["--testset", s(&test), "--out", s(&ev), "--templates", s(&templates), "--max-new-tokens", "8"];
    let model = s2.join(FINAL_CHECKPOINT);
    let o = mtkit(&[&["evaluate", "--model", s(&model)][..], &args].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(ev.join("hyp_ref.tsv")).unwrap().lines().count(), 8);
    let report = fs::read_to_string(ev.join("report.txt")).unwrap();
    assert!(report.starts_with("Model\tMetric\tHigh"), "{report}");
    let first = fs::read(ev.join("scores.tsv")).unwrap();
    let o = mtkit(&[&["evaluate", "--model", s(&model), "--workers", "3"][..], &args].concat());
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(ev.join("scores.tsv")).unwrap(), first);
    let o = mtkit(&[&["evaluate", "--model", s(&d.join("gone.ckpt"))][..], &args].concat());
    assert_eq!(code(&o), 3);
}

#[test]
fn score_identical_and_grouped() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("hr.tsv");
    fs::write(
        &f,
        "en\tzh\t今天天气很好\t今天天气很好\naz\tzh\t我们去学校\t我们去学校\nen\tzh\tthe cat\tthe cat\n",
    )
    .unwrap();
    let out = dir.path().join("scores");
    let o = mtkit(&["score", "--hyp-ref", s(&f), "--out", s(&out), "--name", "sys"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("sys\tBLEU\t100.0000\t-\t100.0000\t-"), "{report}");
    assert!(report.contains("sys\tchrF\t100.0000\t-\t100.0000\t-"), "{report}");
    let tsv = fs::read_to_string(out.join("scores.tsv")).unwrap();
    assert!(tsv.contains("overall\tall\t100.000000\t100.000000\t2"), "{tsv}");

    fs::write(&f, "en\tzh\tthree fields only\n").unwrap();
    assert_eq!(code(&mtkit(&["score", "--hyp-ref", s(&f), "--out", s(&out)])), 3);
}
