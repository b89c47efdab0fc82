use std::fs;
use std::io::BufReader;
use std::path::PathBuf;

use mtkit_core::para::{run_para_pipeline, ParaPipeline, ParaPipelineConfig, SensitiveLexicon};
use mtkit_core::{Registry, Stage, TokenizerSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn pipeline() -> ParaPipeline {
    let lexicon = SensitiveLexicon::load(&fixture("sensitive.txt")).unwrap();
    ParaPipeline::new(
        ParaPipelineConfig::default(),
        lexicon,
        TokenizerSpec::segmenter(),
        Registry::builtin().clone(),
    )
    .unwrap()
}

fn run(p: &ParaPipeline, input: &[u8], chunk: usize) -> (String, mtkit_core::PipelineReport) {
    let mut out = Vec::new();
    let report = run_para_pipeline(p, BufReader::new(input), &mut out, "fixture", chunk).unwrap();
    (String::from_utf8(out).unwrap(), report)
}

#[test]
fn twelve_pair_golden() {
    let p = pipeline();
    let input = fs::read(fixture("para12.tsv")).unwrap();
    let (out, report) = run(&p, &input, 5);
    let expected = fs::read_to_string(fixture("para12.report")).unwrap();
    assert_eq!(report.render(), expected);

    let ids: Vec<&str> = out.lines().map(|l| l.rsplit('\t').next().unwrap()).collect();
    assert_eq!(ids, ["keep-1", "keep-2", "keep-3", "keep-4", "keep-5", "keep-6"]);
    // normalization reached the output
    assert!(out.contains("She said \"good morning\""));
    assert!(out.contains("by 35 percent"));
    assert!(out.contains("Children in the village"));

    let (again, report) = run(&p, out.as_bytes(), 5);
    assert_eq!(again, out);
    assert_eq!(report.total_rejected(), 0);
    assert_eq!(report.outputs(), 6);
}

#[test]
fn empty_stream() {
    let (out, report) = run(&pipeline(), b"", 10);
    assert!(out.is_empty());
    assert_eq!((report.inputs(), report.outputs(), report.total_rejected()), (0, 0, 0));
}

#[test]
fn ingest_failures_are_counted() {
    let input = b"en\tzh\tbad \xff bytes\t\xe4\xbd\xa0\n\
                  only\tthree\tfields\n\
                  en\tqq\tx\ty\n";
    let (out, report) = run(&pipeline(), input, 2);
    assert!(out.is_empty());
    assert_eq!(report.rejected(Stage::Ingest), 3);
    assert!(report.is_balanced());
    let r = report.render();
    assert!(r.contains("reason.ingest.invalid_utf8\t1"));
    assert!(r.contains("reason.ingest.malformed\t1"));
    assert!(r.contains("reason.ingest.unknown_language\t1"));
}

fn synthetic(n: usize, seed: u64) -> Vec<u8> {
    let words = ["river", "stone", "green", "light", "market", "winter", "paper", "voice", "!!", "spam"];
    let hanzi: Vec<char> = "山水人口日月木火土金书学生天地风雨".chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for i in 0..n {
        let src_n = rng.random_range(5..20);
        let tgt_n = rng.random_range(5..30);
        let src: Vec<&str> = (0..src_n).map(|_| words[rng.random_range(0..words.len())]).collect();
        let tgt: String = (0..tgt_n).map(|_| hanzi[rng.random_range(0..hanzi.len())]).collect();
        // repeat some lines so dedup has work
        let id = if rng.random_bool(0.1) { i / 2 } else { i };
        out.push_str(&format!("en\tzh\t{}\t{tgt}\ts{id}\n", src.join(" ")));
    }
    out.into_bytes()
}

#[test]
fn worker_count_does_not_change_output() {
    let p = pipeline();
    let input = synthetic(5000, 9);
    let runs: Vec<_> = [1, 3, 8]
        .iter()
        .map(|&n| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
            pool.install(|| run(&p, &input, 700))
        })
        .collect();
    for r in &runs[1..] {
        assert_eq!(r.0, runs[0].0);
        assert_eq!(r.1.render(), runs[0].1.render());
    }
    let report = &runs[0].1;
    assert_eq!(report.inputs(), 5000);
    assert!(report.is_balanced());
    assert!(report.outputs() > 0 && report.total_rejected() > 0);
}
