//! Batch commands: gen, train, eval, export.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hallglove::dataset::{generate_synthetic, read_csv, write_csv, GestureDataset, SplitSpec};
use hallglove::export::{export_binary, export_firmware_arrays, import_binary, parse_firmware_arrays, MAGIC};
use hallglove::firmware::InferenceModel;
use hallglove::neural::{Evaluation, MlpParameters};
use hallglove::physics::FRAME_CHANNELS;
use hallglove::pipeline::{evaluate_all, evaluate_split, train_dataset};
use serde_json::json;

use crate::config::Resolved;
use crate::output::{sibling, write_atomic, RunManifest};
use crate::{EvalSplit, Format, WeightsFormat};

pub fn load_dataset(cfg: &Resolved, path: &Path) -> Result<GestureDataset> {
    let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_csv(BufReader::new(file), cfg.vocab.len())
        .with_context(|| format!("cannot load dataset {}", path.display()))
}

/// Reads either weight form and checks it against the configured vocabulary.
pub fn load_weights(cfg: &Resolved, path: &Path) -> Result<(MlpParameters, WeightsFormat)> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let (params, form) = if bytes.starts_with(MAGIC) {
        (import_binary(&bytes)?, WeightsFormat::Binary)
    } else {
        let text = String::from_utf8(bytes).context("weights are neither binary nor text")?;
        (parse_firmware_arrays(&text)?, WeightsFormat::Firmware)
    };
    if params.n_in != FRAME_CHANNELS {
        bail!(
            "dimension mismatch: weights take {} inputs, frames have {FRAME_CHANNELS}",
            params.n_in
        );
    }
    if params.n_out != cfg.vocab.len() {
        bail!(
            "dimension mismatch: weights have {} outputs, vocabulary has {} gestures",
            params.n_out,
            cfg.vocab.len()
        );
    }
    Ok((params, form))
}

pub fn inference_model(cfg: &Resolved, path: &Path) -> Result<InferenceModel> {
    Ok(InferenceModel {
        params: load_weights(cfg, path)?.0,
        normalization: cfg.normalization(),
    })
}

fn print_machine(v: &serde_json::Value) {
    println!("{v}");
}

pub fn gen(cfg: &Resolved, out: Option<&Path>, fmt: Format) -> Result<()> {
    let out = out.unwrap_or(Path::new("dataset.csv"));
    let synth = cfg.synth_config();
    let dataset = generate_synthetic(&cfg.vocab, &cfg.glove, &cfg.rom, &synth)?;
    let mut bytes = Vec::new();
    write_csv(&dataset, &mut bytes)?;
    write_atomic(out, &bytes)?;
    RunManifest::new("gen", cfg).output(out).write_for(out)?;
    match fmt {
        Format::Text => println!(
            "wrote {} records ({} subjects x {} gestures x {} reps) to {}",
            dataset.len(),
            synth.n_subjects,
            cfg.vocab.len(),
            synth.reps_per_gesture,
            out.display()
        ),
        Format::Machine => print_machine(&json!({"records": dataset.len(), "out": out})),
    }
    Ok(())
}

fn training_split(cfg: &Resolved, holdout: Option<&str>) -> SplitSpec {
    match holdout {
        Some(s) => SplitSpec::leave_out(s),
        None => SplitSpec::stratified(cfg.run.train.val_fraction, cfg.run.seed),
    }
}

pub fn train(
    cfg: &Resolved,
    dataset_path: &Path,
    holdout: Option<&str>,
    out: Option<&Path>,
    fmt: Format,
) -> Result<()> {
    let out = out.unwrap_or(Path::new("model.glvw"));
    let dataset = load_dataset(cfg, dataset_path)?;
    let norm = cfg.normalization();
    let split = training_split(cfg, holdout);
    let train_cfg = cfg.train_config();
    let outcome = train_dataset(&dataset, &norm, &train_cfg, Some(&split))?;

    let binary = export_binary(&outcome.params)?;
    let firmware = export_firmware_arrays(&outcome.params)?;
    // Score exactly what was exported: the f32 weights.
    let exported = import_binary(&binary)?;
    let final_eval = evaluate_split(&dataset, &exported, &norm, &split)?;
    let r = &outcome.report;
    let report = json!({
        "val_accuracy": final_eval.accuracy,
        "val_loss": final_eval.loss,
        "confusion": final_eval.confusion,
        "best_val_accuracy": r.best_val_accuracy,
        "best_epoch": r.best_epoch,
        "stopped_epoch": r.stopped_epoch,
        "max_epochs": train_cfg.epochs,
        "train_samples": outcome.split.train.len(),
        "val_samples": outcome.split.val.len(),
        "holdout": holdout,
        "epochs": r.epochs.iter().enumerate().map(|(i, e)| json!({
            "epoch": i + 1,
            "train_loss": e.train_loss,
            "val_loss": e.val_loss,
            "val_accuracy": e.val_accuracy,
        })).collect::<Vec<_>>(),
    });

    let header = sibling(out, "h");
    let report_path = sibling(out, "report.json");
    let mut report_text = serde_json::to_string_pretty(&report)?;
    report_text.push('\n');
    write_atomic(out, &binary)?;
    write_atomic(&header, firmware.as_bytes())?;
    write_atomic(&report_path, report_text.as_bytes())?;
    RunManifest::new("train", cfg)
        .input(dataset_path)
        .output(out)
        .output(&header)
        .output(&report_path)
        .options(json!({ "holdout": holdout }))
        .write_for(out)?;

    match fmt {
        Format::Text => {
            println!(
                "validation accuracy {:.4} ({} train / {} val, best epoch {}, stopped at {})",
                final_eval.accuracy,
                outcome.split.train.len(),
                outcome.split.val.len(),
                r.best_epoch,
                r.stopped_epoch
            );
            println!(
                "wrote {}, {}, {}",
                out.display(),
                header.display(),
                report_path.display()
            );
        }
        Format::Machine => print_machine(&json!({
            "val_accuracy": final_eval.accuracy,
            "best_epoch": r.best_epoch,
            "stopped_epoch": r.stopped_epoch,
            "outputs": [out, header, report_path],
        })),
    }
    Ok(())
}

fn correct(e: &Evaluation) -> usize {
    (0..e.confusion.len()).map(|i| e.confusion[i][i]).sum()
}

fn total(e: &Evaluation) -> usize {
    e.confusion.iter().flatten().sum()
}

fn eval_json(e: &Evaluation) -> serde_json::Value {
    json!({
        "accuracy": e.accuracy,
        "loss": e.loss,
        "correct": correct(e),
        "total": total(e),
        "confusion": e.confusion,
    })
}

fn print_confusion(cfg: &Resolved, e: &Evaluation) {
    println!("confusion (rows: true class, columns: predicted)");
    let width = (0..cfg.words.len())
        .filter_map(|c| cfg.words.word(c))
        .map(str::len)
        .max()
        .unwrap_or(0);
    for (i, row) in e.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|n| format!("{n:4}")).collect();
        println!("  {:width$} {}", cfg.words.word(i).unwrap_or("?"), cells.join(""));
    }
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    cfg: &Resolved,
    dataset_path: &Path,
    weights: &Path,
    split: EvalSplit,
    holdout: Option<&str>,
    out: Option<&Path>,
    fmt: Format,
) -> Result<()> {
    let (params, _) = load_weights(cfg, weights)?;
    let dataset = load_dataset(cfg, dataset_path)?;
    let norm = cfg.normalization();
    let result = match split {
        EvalSplit::Val | EvalSplit::All => {
            let e = if split == EvalSplit::Val {
                evaluate_split(&dataset, &params, &norm, &training_split(cfg, holdout))?
            } else {
                evaluate_all(&dataset, &params, &norm)?
            };
            if fmt == Format::Text {
                println!("accuracy {:.4} ({}/{})", e.accuracy, correct(&e), total(&e));
                print_confusion(cfg, &e);
            }
            eval_json(&e)
        }
        EvalSplit::Loso => {
            let mut subjects = Vec::new();
            for s in dataset.subjects() {
                let idx: Vec<usize> = dataset
                    .records()
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.subject_id == s)
                    .map(|(i, _)| i)
                    .collect();
                let e = evaluate_all(&dataset.subset(&idx), &params, &norm)?;
                if fmt == Format::Text {
                    println!("{s}: accuracy {:.4} ({}/{})", e.accuracy, correct(&e), total(&e));
                }
                subjects.push(json!({ "subject": s, "accuracy": e.accuracy, "total": total(&e) }));
            }
            json!({ "subjects": subjects })
        }
    };
    if fmt == Format::Machine {
        print_machine(&result);
    }
    if let Some(out) = out {
        let mut text = serde_json::to_string_pretty(&result)?;
        text.push('\n');
        write_atomic(out, text.as_bytes())?;
        RunManifest::new("eval", cfg)
            .input(dataset_path)
            .input(weights)
            .output(out)
            .options(json!({ "split": format!("{split:?}").to_lowercase(), "holdout": holdout }))
            .write_for(out)?;
    }
    Ok(())
}

pub fn export(
    cfg: &Resolved,
    weights: &Path,
    to: Option<WeightsFormat>,
    out: Option<&Path>,
    fmt: Format,
) -> Result<()> {
    let (params, from) = load_weights(cfg, weights)?;
    let by_ext = |p: &Path| match p.extension().and_then(|e| e.to_str()) {
        Some("glvw") => WeightsFormat::Binary,
        _ => WeightsFormat::Firmware,
    };
    let target = match (to, out) {
        (Some(t), _) => t,
        (None, Some(p)) => by_ext(p),
        (None, None) => match from {
            WeightsFormat::Binary => WeightsFormat::Firmware,
            WeightsFormat::Firmware => WeightsFormat::Binary,
        },
    };
    let out: PathBuf = match out {
        Some(p) => p.to_path_buf(),
        None => sibling(
            weights,
            match target {
                WeightsFormat::Binary => "glvw",
                WeightsFormat::Firmware => "h",
            },
        ),
    };
    if out == weights {
        bail!("refusing to overwrite the input {}", weights.display());
    }
    let bytes = match target {
        WeightsFormat::Binary => export_binary(&params)?,
        WeightsFormat::Firmware => export_firmware_arrays(&params)?.into_bytes(),
    };
    write_atomic(&out, &bytes)?;
    RunManifest::new("export", cfg)
        .input(weights)
        .output(&out)
        .write_for(&out)?;
    match fmt {
        Format::Text => println!("wrote {}", out.display()),
        Format::Machine => print_machine(&json!({ "out": out, "bytes": bytes.len() })),
    }
    Ok(())
}
