use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use mtkit_core::augment::{augment_dataset, AugmentedDataset, Dictionary, Identity, Origin, PairFilter, Translator, WordReverse};
use mtkit_core::eval::{build_report, read_eval_tsv, score_by_pair, EvalPair};
use mtkit_core::mono::{run_mono_pipeline, MonoPipeline};
use mtkit_core::para::{
    pair_files, parse_tsv_line, read_file_pair, run_para_pipeline, Deduplicator, ParaPipeline, PARA_STAGES,
};
use mtkit_core::templates::{builtin_templates, load_templates, render, InstructionTemplate};
use mtkit_core::{LanguageCode, LanguagePair, ParallelRecord, PipelineReport, Registry, ResourceTier, TokenizerSpec};
use mtkit_model::trainer::translate;
use mtkit_model::{train_stage1, train_stage2, Checkpoint, RunStage, Stage2Data, Start};
use rayon::prelude::*;

use crate::config::RunConfigFile;
use crate::failure::{CliResult, Failure, OrConfig};
use crate::{AugmentArgs, CleanMonoArgs, CleanParaArgs, EvaluateArgs, ScoreArgs, TrainArgs};

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn emit_report(report: &PipelineReport, path: Option<&Path>) -> CliResult<()> {
    match path {
        Some(p) => write_file(p, &report.render()),
        None => {
            eprint!("{}", report.render());
            Ok(())
        }
    }
}

pub fn clean_mono(a: &CleanMonoArgs) -> CliResult<()> {
    let cfg = RunConfigFile::load(a.config.as_deref())?;
    let pipeline = MonoPipeline::new(cfg.mono).or_config()?;
    let input = open(&a.input)?;
    let mut out = create(&a.out)?;
    let report = run_mono_pipeline(&pipeline, input, &mut out, &a.input.display().to_string(), a.chunk)?;
    finish(out, &a.out)?;
    emit_report(&report, a.report.as_deref())
}

fn language(code: &str, registry: &Registry) -> CliResult<LanguageCode> {
    registry.lookup(code).or_config()
}

pub fn clean_para(a: &CleanParaArgs) -> CliResult<()> {
    let cfg = RunConfigFile::load(a.config.as_deref())?;
    cfg.para.validate().or_config()?;
    let pipeline = ParaPipeline::from_config(cfg.para).or_config()?;
    let mut out = create(&a.out)?;
    let report = match (&a.input, &a.pair_dir) {
        (Some(input), _) => run_para_pipeline(&pipeline, open(input)?, &mut out, &input.display().to_string(), a.chunk)?,
        (None, Some(dir)) => {
            let registry = pipeline.registry();
            let src = language(a.src.as_deref().unwrap_or_default(), registry)?;
            let tgt = language(a.tgt.as_deref().unwrap_or_default(), registry)?;
            let mut report = PipelineReport::new(&PARA_STAGES);
            let mut dedup = Deduplicator::new();
            for pair in pair_files(dir, src, tgt)? {
                let records = read_file_pair(&pair, src, tgt)?;
                for batch in records.chunks(a.chunk.max(1)) {
                    for rec in pipeline.process(batch.to_vec(), &mut dedup, &mut report) {
                        writeln!(out, "{}", rec.to_tsv()).map_err(|e| Failure::io(format!("{}: {e}", a.out.display())))?;
                    }
                }
            }
            report
        }
        (None, None) => unreachable!("clap requires one input"),
    };
    finish(out, &a.out)?;
    emit_report(&report, a.report.as_deref())
}

/// Reads parallel TSV records, with an optional origin column. Lines that
/// cannot be parsed are errors.
fn read_records(path: &Path, registry: &Registry) -> CliResult<AugmentedDataset> {
    let origin = path.display().to_string();
    let mut data = AugmentedDataset::default();
    let mut buf = Vec::new();
    let mut input = open(path)?;
    let mut line = 0;
    loop {
        buf.clear();
        let n = input
            .read_until(b'\n', &mut buf)
            .map_err(|e| Failure::io(format!("{origin}: {e}")))?;
        if n == 0 {
            break;
        }
        line += 1;
        if buf.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let rec = parse_tsv_line(&buf, line, &origin, registry)
            .map_err(|r| Failure::io(format!("{origin}:{}: {}", r.line, r.reason)))?;
        let text = String::from_utf8_lossy(&buf);
        let tag = match text.trim_end_matches(['\n', '\r']).split('\t').nth(5) {
            Some(t) => t.parse().map_err(|e| Failure::io(format!("{origin}:{line}: {e}")))?,
            None => Origin::Original,
        };
        data.records.push(rec);
        data.origins.push(tag);
    }
    Ok(data)
}

fn parse_tiers(names: &[String]) -> CliResult<BTreeSet<ResourceTier>> {
    names
        .iter()
        .filter(|n| !n.is_empty())
        .map(|n| n.parse::<ResourceTier>().or_config())
        .collect()
}

/// Builds the named translator. Dictionary tables come from `dicts`; a bare
/// path covers every target-to-source direction in `pairs`.
fn build_translator(
    name: &str,
    dicts: &[String],
    pairs: &BTreeSet<LanguagePair>,
    registry: &Registry,
) -> CliResult<Box<dyn Translator>> {
    check_translator(name, dicts)?;
    match name {
        "identity" => Ok(Box::new(Identity)),
        "word_reverse" | "word-reverse" => Ok(Box::new(WordReverse)),
        "dictionary" => {
            let mut d = Dictionary::new();
            for spec in dicts {
                let load = |d: &mut Dictionary, from, to, path: &Path| d.load_direction(from, to, path).or_config();
                match spec.split_once('=') {
                    Some((dir, path)) => {
                        let (from, to) = dir
                            .split_once('-')
                            .ok_or_else(|| Failure::config(format!("bad --dict direction {dir:?}, expected FROM-TO")))?;
                        load(&mut d, language(from, registry)?, language(to, registry)?, Path::new(path))?;
                    }
                    None => {
                        for p in pairs {
                            load(&mut d, p.tgt, p.src, Path::new(spec))?;
                        }
                    }
                }
            }
            Ok(Box::new(d))
        }
        _ => unreachable!("checked above"),
    }
}

/// Rejects an unknown translator or a missing dictionary before any input
/// is read.
fn check_translator(name: &str, dicts: &[String]) -> CliResult<()> {
    match name {
        "identity" | "word_reverse" | "word-reverse" => Ok(()),
        "dictionary" if dicts.is_empty() => Err(Failure::config("--translator dictionary needs --dict")),
        "dictionary" => {
            for spec in dicts {
                let path = spec.split_once('=').map_or(spec.as_str(), |(_, p)| p);
                if !Path::new(path).is_file() {
                    return Err(Failure::config(format!("dictionary file {path} not found")));
                }
            }
            Ok(())
        }
        other => Err(Failure::config(format!(
            "unknown translator {other:?} (expected identity, word_reverse or dictionary)"
        ))),
    }
}

pub fn augment(a: &AugmentArgs) -> CliResult<()> {
    let registry = Registry::builtin();
    let filter = PairFilter {
        tiers: parse_tiers(&a.tiers)?,
    };
    check_translator(&a.translator, &a.dict)?;
    let data = read_records(&a.input, registry)?;
    let pairs = data.records.iter().map(ParallelRecord::pair).collect();
    let translator = build_translator(&a.translator, &a.dict, &pairs, registry)?;
    let out_data = augment_dataset(&data, translator.as_ref(), &filter, registry);
    let mut out = create(&a.out)?;
    for (rec, origin) in out_data.iter() {
        writeln!(out, "{}\t{origin}", rec.to_tsv()).map_err(|e| Failure::io(format!("{}: {e}", a.out.display())))?;
    }
    finish(out, &a.out)?;
    eprintln!(
        "records\t{}\noriginal\t{}\nsynthetic\t{}\nduplicates\t{}\nfailures\t{}",
        out_data.len(),
        out_data.count(Origin::Original),
        out_data.count(Origin::Synthetic),
        out_data.duplicates,
        out_data.failures
    );
    Ok(())
}

fn read_lines(path: &Path) -> CliResult<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn templates(path: Option<&Path>) -> CliResult<Vec<InstructionTemplate>> {
    match path {
        Some(p) => Ok(load_templates(p)?),
        None => Ok(builtin_templates()),
    }
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    if !path.is_file() {
        return Err(Failure::io(format!("checkpoint {} not found", path.display())));
    }
    Ok(Checkpoint::load(path)?)
}

pub fn train(a: &TrainArgs, stage: RunStage, seed: Option<u64>) -> CliResult<()> {
    let mut file = RunConfigFile::load(Some(&a.config))?;
    let run = &mut file.run;
    run.stage = stage;
    if let Some(s) = seed {
        run.seed = s;
    }
    if a.stop_after.is_some() {
        run.stop_after = a.stop_after;
    }
    let cfg = run.resolved().or_config()?;
    create_dir(&a.out_dir)?;
    write_file(&a.out_dir.join("config.toml"), &file.to_toml()?)?;

    let start = match (&a.resume, &cfg.data.init_checkpoint) {
        (Some(p), _) => Start::Resume(Box::new(load_checkpoint(p)?)),
        (None, Some(p)) if stage == RunStage::Finetune => Start::From(Box::new(load_checkpoint(p)?)),
        _ => Start::Fresh,
    };
    let outcome = match stage {
        RunStage::Pretrain => {
            let path = cfg.data.mono.as_deref().ok_or_else(|| Failure::config("run.data.mono is not set"))?;
            train_stage1(&cfg, &read_lines(path)?, start, Some(&a.out_dir))?
        }
        RunStage::Finetune => {
            if cfg.data.parallel.is_empty() {
                return Err(Failure::config("run.data.parallel is empty"));
            }
            let registry = Registry::builtin();
            let mut records = Vec::new();
            for p in &cfg.data.parallel {
                records.extend(read_records(p, registry)?.records);
            }
            let aug = &cfg.data.augment;
            let translator = if aug.enabled {
                let pairs = records.iter().map(ParallelRecord::pair).collect();
                let dicts: Vec<String> = aug.dictionary.iter().map(|p| p.display().to_string()).collect();
                Some(build_translator(&aug.translator, &dicts, &pairs, registry)?)
            } else {
                None
            };
            let filter = PairFilter {
                tiers: aug.tiers.iter().copied().collect(),
            };
            let data = Stage2Data::prepare(
                records,
                templates(cfg.data.templates.as_deref())?,
                translator.as_deref().map(|t| (t, &filter)),
                registry,
            );
            train_stage2(&cfg, &data, registry, start, Some(&a.out_dir))?
        }
    };
    let last = outcome.log.records.last();
    println!(
        "stage\t{}\nsteps\t{}\nfinal_loss\t{}\ncheckpoint\t{}",
        stage.as_str(),
        outcome.step,
        last.map_or("-".into(), |r| format!("{:.6}", r.loss)),
        a.out_dir.join(mtkit_model::trainer::FINAL_CHECKPOINT).display()
    );
    Ok(())
}

fn write_scores(corpus: &[EvalPair], out: &Path, name: &str) -> CliResult<String> {
    if corpus.is_empty() {
        return Err(Failure::io("no hypothesis/reference pairs to score"));
    }
    let registry = Registry::builtin();
    let scores = score_by_pair(corpus, &TokenizerSpec::segmenter())?;
    let report = build_report(&scores, registry)?;
    let text = report.render(name);
    create_dir(out)?;
    write_file(&out.join("report.txt"), &text)?;
    write_file(&out.join("scores.tsv"), &report.to_tsv())?;
    Ok(text)
}

pub fn score(a: &ScoreArgs) -> CliResult<()> {
    let corpus = read_eval_tsv(open(&a.hyp_ref)?, &a.hyp_ref.display().to_string())?;
    print!("{}", write_scores(&corpus, &a.out, &a.name)?);
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let registry = Registry::builtin();
    let ckpt = load_checkpoint(&a.model)?;
    let templates = templates(a.templates.as_deref())?;
    let template = templates
        .get(a.template)
        .ok_or_else(|| Failure::config(format!("template {} out of range ({} loaded)", a.template, templates.len())))?;
    let data = read_records(&a.testset, registry)?;
    let hyps: Vec<String> = data
        .records
        .par_iter()
        .map(|r| {
            let ex = render(template, r, registry)?;
            Ok(translate(&ckpt.params, &ex.prompt, a.max_new_tokens)?)
        })
        .collect::<CliResult<_>>()?;
    let corpus: Vec<EvalPair> = data
        .records
        .iter()
        .zip(&hyps)
        .map(|(r, h)| EvalPair::new(r.pair(), h.as_str(), r.tgt_text.as_str()))
        .collect();
    create_dir(&a.out)?;
    let mut tsv = String::new();
    for c in &corpus {
        tsv.push_str(&format!("{}\t{}\t{}\t{}\n", c.pair.src, c.pair.tgt, clean_field(&c.hypothesis), c.reference));
    }
    write_file(&a.out.join("hyp_ref.tsv"), &tsv)?;
    let name = a.model.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
    let exact = corpus.iter().filter(|c| c.hypothesis == c.reference).count();
    print!("{}", write_scores(&corpus, &a.out, &name)?);
    println!("\nexact_match\t{exact}/{}", corpus.len());
    Ok(())
}

fn clean_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}
