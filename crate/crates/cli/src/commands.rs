//! The six pipeline commands. Each reads its inputs from the run config,
//! writes its artifacts plus the effective config, and returns a summary.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use paradox_core::corpus::{prepare_corpus, tag_language, CorpusStats, LexiconTagger, RawRecord, Utterance};
use paradox_core::generation::{GenerationRequest, Generator};
use paradox_core::metrics::{compute_cmi, LangTag, MetricReport, TaggedPair, UserCmi};
use paradox_core::model::{ModelConfig, Paradox, PersonaMode};
use paradox_core::tokenizer::Tokenizer;
use paradox_core::train::{EpochLog, Trainer};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{
    load_checkpoint, load_compatible, load_train_state, save_checkpoint, save_train_state, Checkpoint,
};
use crate::config::{require_files, required, RunConfig};
use crate::data::{examples, last_train_text, user_ref, user_table};
use crate::io::{
    load_tokenizer, read_jsonl, read_tagger, save_tokenizer, write_json, write_jsonl, write_text,
};

fn tagger(cfg: &RunConfig) -> Result<LexiconTagger> {
    let h = required(&cfg.hindi_lexicon, "hindi_lexicon")?;
    let e = required(&cfg.english_lexicon, "english_lexicon")?;
    let v = required(&cfg.hindi_verbs, "hindi_verbs")?;
    require_files([h, e, v])?;
    read_tagger(h, e, v)
}

/// Language tags of a whitespace-tokenized text.
pub fn tag_text(text: &str, tagger: &LexiconTagger) -> Vec<LangTag> {
    let tokens: Vec<String> = text.split_whitespace().map(String::from).collect();
    tag_language(&tokens, tagger)
}

fn read_split(cfg: &RunConfig) -> Result<(Vec<Utterance>, Vec<Utterance>)> {
    let (t, v) = (cfg.train_path(), cfg.validation_path());
    require_files([t.as_path(), v.as_path()])?;
    Ok((read_jsonl(&t)?, read_jsonl(&v)?))
}

fn read_tokenizer(cfg: &RunConfig) -> Result<Tokenizer> {
    let (v, m) = (cfg.vocab_path(), cfg.merges_path());
    require_files([v.as_path(), m.as_path()])?;
    load_tokenizer(&v, &m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub stats: CorpusStats,
    pub train: usize,
    pub validation: usize,
    pub seeds: Vec<String>,
}

/// clean, tag, gate, filter, split; writes both splits and `stats.json`.
pub fn prepare(cfg: &RunConfig) -> Result<PrepareSummary> {
    let corpus = required(&cfg.corpus, "corpus")?;
    require_files([corpus])?;
    let tagger = tagger(cfg)?;
    let records: Vec<RawRecord> = read_jsonl(corpus)?;
    let prepared = prepare_corpus(&records, &tagger, cfg.seed)
        .with_context(|| format!("preparing {}", corpus.display()))?;
    cfg.persist("prepare")?;
    write_jsonl(&cfg.train_path(), &prepared.split.train)?;
    write_jsonl(&cfg.validation_path(), &prepared.split.validation)?;
    write_json(&cfg.out_dir.join("stats.json"), &prepared.stats)?;
    Ok(PrepareSummary {
        stats: prepared.stats,
        train: prepared.split.train.len(),
        validation: prepared.split.validation.len(),
        seeds: prepared.seeds,
    })
}

/// Learns BPE on the cleaned training texts.
pub fn tokenize(cfg: &RunConfig) -> Result<Tokenizer> {
    let (train, _) = read_split(cfg)?;
    let texts: Vec<&str> = train.iter().map(|u| u.clean_text.as_str()).collect();
    let tok = Tokenizer::train(&texts, cfg.vocab_size)?;
    cfg.persist("tokenize")?;
    save_tokenizer(&tok, &cfg.vocab_path(), &cfg.merges_path())?;
    Ok(tok)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_done: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub logs: Vec<EpochLog>,
}

/// Model configuration for the data at hand: users come from the training
/// split and the vocabulary from the tokenizer actually learned.
fn data_model_config(cfg: &RunConfig, users: &[String], tok: &Tokenizer) -> Result<ModelConfig> {
    let mut c = cfg.model_config(users.len())?;
    c.vocab_size = tok.vocab.len();
    c.validate()?;
    Ok(c)
}

fn last_path(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("last.ckpt")
}

fn state_path(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("train_state.bin")
}

/// Trains with early stopping, checkpointing after every epoch so that a
/// run can be resumed with `resume = true`.
pub fn train(cfg: &RunConfig) -> Result<TrainSummary> {
    train_reporting(cfg, &mut |_| {})
}

/// [`train`], passing one progress line per epoch to `report`.
pub fn train_reporting(cfg: &RunConfig, report: &mut dyn FnMut(&str)) -> Result<TrainSummary> {
    let (train_utts, val_utts) = read_split(cfg)?;
    let tok = read_tokenizer(cfg)?;
    let users = user_table(&train_utts);
    let mc = data_model_config(cfg, &users, &tok)?;
    let train_ex = examples(&train_utts, &[], &users, &tok, cfg.pair_mode, mc.max_length)?;
    let val_ex = examples(&val_utts, &train_utts, &users, &tok, cfg.pair_mode, mc.max_length)
        .context("validation split")?;

    let tc = cfg.train_config();
    let resuming = cfg.resume && state_path(cfg).is_file();
    let mut trainer = if resuming {
        let last = load_compatible(&last_path(cfg), &mc)?;
        ensure!(
            last.users == users && last.model.config() == &mc,
            "cannot resume: {} was trained on different data or architecture",
            last_path(cfg).display()
        );
        let best = load_checkpoint(&cfg.checkpoint_path())?.model.params;
        let mut state = load_train_state(&state_path(cfg), &last.model.params)?;
        state.adam.config = tc.adam;
        Trainer::resume(last.model, best, state, tc)?
    } else {
        Trainer::new(Paradox::new(mc, cfg.seed)?, tc)?
    };
    cfg.persist("train")?;

    let log_path = cfg.out_dir.join("train_log.jsonl");
    let mut log = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(resuming)
        .truncate(!resuming)
        .open(&log_path)
        .with_context(|| format!("cannot open {}", log_path.display()))?;
    if !resuming {
        save_checkpoint(&cfg.checkpoint_path(), &trainer.model, &users)?;
    }
    let mut logs = Vec::new();
    trainer.fit::<anyhow::Error>(&train_ex, &val_ex, |l, t| {
        writeln!(log, "{}", serde_json::to_string(l)?)?;
        report(&format!(
            "epoch {:>3}  train {:.4}  val {:.4}  ppl {:.3}{}",
            l.epoch,
            l.train_loss,
            l.val_loss,
            l.val_perplexity,
            if l.improved { "  *" } else { "" }
        ));
        if l.improved {
            save_checkpoint(&cfg.checkpoint_path(), &t.model, &users)?;
        }
        save_checkpoint(&last_path(cfg), &t.model, &users)?;
        save_train_state(&state_path(cfg), &t.state)?;
        logs.push(*l);
        Ok(())
    })?;
    Ok(TrainSummary {
        epochs_done: trainer.state.epochs_done,
        best_epoch: trainer.state.best_epoch,
        best_val_loss: trainer.state.best_val_loss,
        logs,
    })
}

/// One generated validation text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub user_id: String,
    pub order_index: i64,
    pub seed_word: String,
    pub generated_text: String,
    pub generated_cmi: f64,
}

/// Batch-mode input; `history` defaults to the user's last training text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRequest {
    pub user_id: String,
    pub seed_word: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutput {
    pub user_id: String,
    pub seed_word: String,
    pub generated_text: String,
    pub generated_cmi: f64,
}

fn load_model(cfg: &RunConfig) -> Result<Checkpoint> {
    let path = cfg.checkpoint_path();
    require_files([path.as_path()])?;
    load_compatible(&path, &cfg.model_config(1)?)
}

/// Greedy generation. Without `requests`, one text per validation
/// utterance, seeded with its first word and conditioned on the user's last
/// training utterance. With `requests`, one text per request line.
pub fn generate(cfg: &RunConfig) -> Result<usize> {
    let ck = load_model(cfg)?;
    let tok = read_tokenizer(cfg)?;
    let tagger = tagger(cfg)?;
    let generator = Generator::new(&ck.model, &tok)?;
    let train_path = cfg.train_path();
    let train_utts: Vec<Utterance> = if train_path.is_file() {
        read_jsonl(&train_path)?
    } else {
        Vec::new()
    };
    let history = last_train_text(&train_utts);
    let max_length = ck.model.config().max_length;
    let run = |user_id: &str, seed: &str, hist: Option<&str>| -> Result<(String, f64)> {
        let hist = match hist.or_else(|| history.get(user_id).copied()) {
            Some(h) => h,
            None => bail!("user {user_id} has no training utterance to use as history"),
        };
        let out = generator
            .generate(&GenerationRequest {
                user: user_ref(&ck.users, user_id),
                history_text: hist.to_string(),
                seed_word: seed.to_string(),
                max_length,
            })
            .with_context(|| format!("generating for user {user_id}, seed {seed:?}"))?;
        let cmi = compute_cmi(&tag_text(&out.text, &tagger));
        Ok((out.text, cmi))
    };

    let count = if let Some(req_path) = &cfg.requests {
        require_files([req_path.as_path()])?;
        let reqs: Vec<BatchRequest> = read_jsonl(req_path)?;
        let mut outs = Vec::with_capacity(reqs.len());
        for r in &reqs {
            let (text, cmi) = run(&r.user_id, &r.seed_word, r.history.as_deref())?;
            outs.push(BatchOutput {
                user_id: r.user_id.clone(),
                seed_word: r.seed_word.clone(),
                generated_text: text,
                generated_cmi: cmi,
            });
        }
        cfg.persist("generate")?;
        write_jsonl(&cfg.generations_path(), &outs)?;
        outs.len()
    } else {
        let val_path = cfg.validation_path();
        require_files([train_path.as_path(), val_path.as_path()])?;
        let val: Vec<Utterance> = read_jsonl(&val_path)?;
        let mut outs = Vec::with_capacity(val.len());
        for u in &val {
            let Some(seed) = u.clean_text.split_whitespace().next() else {
                bail!("validation utterance {}/{} has no words", u.user_id, u.order_index);
            };
            let (text, cmi) = run(&u.user_id, seed, None)?;
            outs.push(GenerationRecord {
                user_id: u.user_id.clone(),
                order_index: u.order_index,
                seed_word: seed.to_string(),
                generated_text: text,
                generated_cmi: cmi,
            });
        }
        cfg.persist("generate")?;
        write_jsonl(&cfg.generations_path(), &outs)?;
        outs.len()
    };
    Ok(count)
}

/// Scores in reporting units: BLEU and Rouge ×100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    #[serde(rename = "Perplexity")]
    pub perplexity: f64,
    #[serde(rename = "CM BLEU")]
    pub cm_bleu: f64,
    #[serde(rename = "CM Rouge-1")]
    pub cm_rouge1: f64,
    #[serde(rename = "CM Rouge-L")]
    pub cm_rouge_l: f64,
    #[serde(rename = "CM KS")]
    pub cm_ks: f64,
    pub pairs: usize,
    pub per_user_cmi: BTreeMap<String, UserCmi>,
}

impl MetricsFile {
    pub const COLUMNS: [&'static str; 5] = ["Perplexity", "CM BLEU", "CM Rouge-1", "CM Rouge-L", "CM KS"];

    fn from_report(r: MetricReport, pairs: usize) -> Self {
        Self {
            perplexity: r.perplexity,
            cm_bleu: 100.0 * r.cm_bleu,
            cm_rouge1: 100.0 * r.cm_rouge1,
            cm_rouge_l: 100.0 * r.cm_rouge_l,
            cm_ks: r.cm_ks,
            pairs,
            per_user_cmi: r.per_user_cmi,
        }
    }

    pub fn values(&self) -> [f64; 5] {
        [self.perplexity, self.cm_bleu, self.cm_rouge1, self.cm_rouge_l, self.cm_ks]
    }
}

fn key(user: &str, order: i64) -> String {
    format!("{user}/{order}")
}

/// Validation perplexity of the checkpoint, `e` to the mean token loss.
pub fn validation_perplexity(cfg: &RunConfig, ck: &Checkpoint, tok: &Tokenizer) -> Result<f64> {
    let (train_utts, val_utts) = read_split(cfg)?;
    let mc = ck.model.config();
    let val_ex = examples(&val_utts, &train_utts, &ck.users, tok, cfg.pair_mode, mc.max_length)?;
    Ok(ck.model.evaluate_loss(&val_ex)?.perplexity())
}

/// Scores generations against the validation references they were seeded
/// from; pairs are matched by (user_id, order_index).
pub fn evaluate(cfg: &RunConfig) -> Result<MetricsFile> {
    let tagger = tagger(cfg)?;
    let gen_path = cfg.generations_path();
    require_files([gen_path.as_path()])?;
    let gens: Vec<GenerationRecord> = read_jsonl(&gen_path)?;
    let (_, val) = read_split(cfg)?;

    let mut refs: BTreeMap<String, &Utterance> = BTreeMap::new();
    for u in &val {
        ensure!(
            refs.insert(key(&u.user_id, u.order_index), u).is_none(),
            "validation file repeats utterance {}",
            key(&u.user_id, u.order_index)
        );
    }
    let mut seen = BTreeSet::new();
    let mut unknown = Vec::new();
    for g in &gens {
        let k = key(&g.user_id, g.order_index);
        if !refs.contains_key(&k) {
            unknown.push(k.clone());
        }
        ensure!(seen.insert(k.clone()), "generations repeat utterance {k}");
    }
    let missing: Vec<&String> = refs.keys().filter(|k| !seen.contains(*k)).collect();
    if !unknown.is_empty() || !missing.is_empty() {
        bail!(
            "generations and validation are misaligned; without generation: [{}]; without reference: [{}]",
            missing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
            unknown.join(", ")
        );
    }

    let tagged: Vec<Vec<LangTag>> = gens.iter().map(|g| tag_text(&g.generated_text, &tagger)).collect();
    let pairs: Vec<TaggedPair<'_>> = gens
        .iter()
        .zip(&tagged)
        .map(|(g, t)| TaggedPair {
            user_id: &g.user_id,
            generated: t,
            reference: &refs[&key(&g.user_id, g.order_index)].tags,
        })
        .collect();

    let ck = load_model(cfg)?;
    let tok = read_tokenizer(cfg)?;
    let ppl = validation_perplexity(cfg, &ck, &tok)?;
    let report = MetricReport::from_pairs(&pairs, ppl)?;
    let metrics = MetricsFile::from_report(report, pairs.len());
    cfg.persist("evaluate")?;
    write_json(&cfg.out_dir.join("metrics.json"), &metrics)?;
    let v = metrics.values();
    let csv = format!(
        "{}\n{}\n",
        MetricsFile::COLUMNS.join(","),
        v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
    );
    write_text(&cfg.out_dir.join("metrics.csv"), &csv)?;
    Ok(metrics)
}

/// One row of the ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    /// Ablation switches read back from the trained checkpoint.
    pub persona_mode: PersonaMode,
    pub alignment_on: bool,
    pub fame_on: bool,
    pub speaker_id_on: bool,
    pub epochs_done: usize,
    pub metrics: MetricsFile,
}

/// Full model first, then one switch off at a time.
pub fn ablation_variants(base: &RunConfig) -> Vec<(&'static str, &'static str, RunConfig)> {
    let with = |f: fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    vec![
        ("PARADOX", "full", base.clone()),
        ("(-) Contextual Persona", "no-persona", with(|c| c.persona_mode = PersonaMode::Off)),
        ("(-) Speaker ID", "no-speaker-id", with(|c| c.speaker_id_on = false)),
        ("(-) Alignment", "no-alignment", with(|c| c.alignment_on = false)),
        ("(-) FAME", "no-fame", with(|c| c.fame_on = false)),
    ]
}

/// Trains, generates and evaluates every variant under one seed on the
/// same prepared data and tokenizer.
pub fn ablate(cfg: &RunConfig) -> Result<Vec<AblationRow>> {
    ablate_reporting(cfg, &mut |_| {})
}

/// [`ablate`], passing variant names and epoch lines to `report`.
pub fn ablate_reporting(cfg: &RunConfig, report: &mut dyn FnMut(&str)) -> Result<Vec<AblationRow>> {
    let mut base = cfg.clone();
    base.train_file = Some(cfg.train_path());
    base.validation_file = Some(cfg.validation_path());
    base.vocab_file = Some(cfg.vocab_path());
    base.merges_file = Some(cfg.merges_path());
    base.requests = None;
    read_split(&base)?;
    if !(cfg.vocab_path().is_file() && cfg.merges_path().is_file()) {
        tokenize(cfg)?;
    }
    cfg.persist("ablate")?;

    let mut rows = Vec::new();
    for (name, slug, mut v) in ablation_variants(&base) {
        v.out_dir = cfg.out_dir.join("ablate").join(slug);
        v.checkpoint = None;
        v.generations = None;
        report(&format!("== {name}"));
        let summary = train_reporting(&v, report).with_context(|| format!("training variant {name}"))?;
        generate(&v).with_context(|| format!("generating with variant {name}"))?;
        let metrics = evaluate(&v).with_context(|| format!("evaluating variant {name}"))?;
        let trained = load_checkpoint(&v.checkpoint_path())?;
        let c = trained.model.config();
        rows.push(AblationRow {
            variant: name.to_string(),
            persona_mode: c.persona_mode,
            alignment_on: c.alignment_on,
            fame_on: c.fame_on,
            speaker_id_on: c.speaker_id_on,
            epochs_done: summary.epochs_done,
            metrics,
        });
    }
    write_json(&cfg.out_dir.join("ablation.json"), &rows)?;
    write_text(&cfg.out_dir.join("ablation.csv"), &ablation_csv(&rows))?;
    write_text(&cfg.out_dir.join("ablation.md"), &ablation_markdown(&rows))?;
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = format!("Model,{}\n", MetricsFile::COLUMNS.join(","));
    for r in rows {
        let v = r.metrics.values();
        s.push_str(&format!("\"{}\",{}\n", r.variant, v.map(|x| format!("{x}")).join(",")));
    }
    s
}

pub fn ablation_markdown(rows: &[AblationRow]) -> String {
    let mut s = format!("| Model | {} |\n", MetricsFile::COLUMNS.join(" | "));
    s.push_str(&format!("|---|{}\n", "---:|".repeat(MetricsFile::COLUMNS.len())));
    for r in rows {
        let v = r.metrics.values();
        s.push_str(&format!("| {} | {} |\n", r.variant, v.map(|x| format!("{x:.2}")).join(" | ")));
    }
    s
}
