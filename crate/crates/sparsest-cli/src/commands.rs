//! One function per CLI subcommand. Every JSON artifact embeds the fully
//! resolved run configuration.

use std::path::{Path, PathBuf};

use serde_json::json;
use sparsest::cell::CellKind;
use sparsest::data::{generate_blobs, generate_cycles};
use sparsest::io;
use sparsest::metrics::roc_auc;
use sparsest::objectives::ObjectiveVector;
use sparsest::pareto::{dominance_flags, explore, uniform_grid};
use sparsest::rng::RngState;
use sparsest::train::{
    anomaly_scores, evaluate_prediction, train_prediction, TrainableModel,
};
use sparsest::Error;

use crate::config::{DataKind, RunConfig};
use crate::CliError;

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    Path::new(&cfg.out_dir).join(name)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    let labels: Option<Vec<Vec<bool>>> = match cfg.data_kind {
        DataKind::Blobs => {
            let d = generate_blobs(&cfg.blob_config())?;
            io::write_dataset(&out_path(cfg, "train.sstd"), &d.train)?;
            io::write_dataset(&out_path(cfg, "val.sstd"), &d.val)?;
            io::write_dataset(&out_path(cfg, "test.sstd"), &d.test)?;
            None
        }
        DataKind::Cycles => {
            let d = generate_cycles(&cfg.cycle_config())?;
            io::write_dataset(&out_path(cfg, "train.sstd"), &d.train)?;
            io::write_dataset(&out_path(cfg, "val.sstd"), &d.val)?;
            let frames: Vec<_> = d.test.iter().map(|s| s.frames.clone()).collect();
            io::write_dataset(&out_path(cfg, "test.sstd"), &frames)?;
            Some(d.test.iter().map(|s| s.labels.clone()).collect())
        }
    };
    io::write_json(
        &out_path(cfg, "dataset.json"),
        &json!({ "config": cfg.to_map(), "labels": labels }),
    )?;
    println!("wrote train/val/test datasets to {}", cfg.out_dir);
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let train_seqs = io::read_dataset(&out_path(cfg, "train.sstd"))?;
    let val_seqs = io::read_dataset(&out_path(cfg, "val.sstd"))?;
    let data_channels = train_seqs[0][0].channels();
    let mut rng = RngState::new(cfg.seed);
    let mut model =
        TrainableModel::random(cfg.cell, data_channels, &cfg.hidden, cfg.kernel, &mut rng)?;
    let report = train_prediction(&mut model, &train_seqs, &val_seqs, &cfg.train_config())?;
    io::write_checkpoint(&out_path(cfg, "model.sstm"), &model)?;
    io::write_jsonl(&out_path(cfg, "train_log.jsonl"), &report.records)?;
    io::write_json(
        &out_path(cfg, "train_report.json"),
        &json!({
            "config": cfg.to_map(),
            "best_epoch": report.best_epoch,
            "best_val_loss": report.best_val_loss,
            "stopped_early": report.stopped_early,
            "final_val": report.final_val,
        }),
    )?;
    println!(
        "trained {} epochs (best {}), val mse {:.6}, val occupancy {:.4}",
        report.records.len() - 1,
        report.best_epoch,
        report.final_val.mse,
        report.final_val.occupancy
    );
    Ok(())
}

fn cost_csv(cfg: &RunConfig, name: &str, report: &sparsest::cost::ModelCostReport) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = report
        .units
        .iter()
        .map(|u| {
            vec![
                u.unit.to_string(),
                fmt(u.d_x),
                fmt(u.d_h),
                u.flop_dense.to_string(),
                fmt(u.flop_sparse),
                u.ar.map(fmt).unwrap_or_else(|| "NA".to_string()),
            ]
        })
        .collect();
    io::write_csv(
        &out_path(cfg, name),
        &["unit", "d_x", "d_h", "flop_dense", "flop_sparse", "ar"],
        &rows,
    )?;
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let model = io::read_checkpoint(&out_path(cfg, "model.sstm"))?;
    let test = io::read_dataset(&out_path(cfg, "test.sstd"))?;
    let seq_model = model.to_sequence_model()?;
    let (mse, cost) = evaluate_prediction(&seq_model, &test, cfg.eval_warmup, cfg.eval_horizon)?;
    cost_csv(cfg, "cost.csv", &cost)?;
    io::write_json(
        &out_path(cfg, "metrics.json"),
        &json!({
            "config": cfg.to_map(),
            "mse": mse,
            "ar": cost.ar_mean,
            "ar_approx": cost.ar_approx_mean,
            "flops_dense": cost.flop_dense_total,
            "flops_sparse": cost.flop_sparse_total,
            "units": cost.units,
        }),
    )?;
    println!(
        "test mse {:.6}, ar {}",
        mse,
        cost.ar_mean.map(|a| format!("{a:.4}")).unwrap_or_else(|| "NA".to_string())
    );
    Ok(())
}

pub fn anomaly(cfg: &RunConfig) -> Result<(), CliError> {
    let model = io::read_checkpoint(&out_path(cfg, "model.sstm"))?;
    let seq_model = model.to_sequence_model()?;
    let test = io::read_dataset(&out_path(cfg, "test.sstd"))?;
    let sidecar: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_path(cfg, "dataset.json")).map_err(Error::Io)?,
    )
    .map_err(Error::Json)?;
    let labels: Vec<Vec<bool>> = serde_json::from_value(sidecar["labels"].clone())
        .map_err(|_| Error::data("dataset.json carries no frame labels".to_string()))?;
    if labels.len() != test.len() {
        return Err(Error::data(format!(
            "{} label sequences vs {} test sequences",
            labels.len(),
            test.len()
        ))
        .into());
    }

    let mut rows = Vec::new();
    let mut pooled_scores = Vec::new();
    let mut pooled_labels = Vec::new();
    for (s, (seq, seq_labels)) in test.iter().zip(&labels).enumerate() {
        if seq_labels.len() != seq.len() {
            return Err(Error::data(format!(
                "sequence {s}: {} labels for {} frames",
                seq_labels.len(),
                seq.len()
            ))
            .into());
        }
        for fs in anomaly_scores(&seq_model, seq, cfg.window, cfg.stride)? {
            let label = seq_labels[fs.frame];
            rows.push(vec![
                s.to_string(),
                fs.frame.to_string(),
                fmt(fs.score),
                label.to_string(),
            ]);
            pooled_scores.push(fs.score);
            pooled_labels.push(label);
        }
    }
    io::write_csv(
        &out_path(cfg, "scores.csv"),
        &["sequence", "frame", "score", "label"],
        &rows,
    )?;

    let (points, auc) = roc_auc(&pooled_scores, &pooled_labels)?;
    let roc_rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| vec![fmt(p.threshold), fmt(p.fpr), fmt(p.tpr)])
        .collect();
    io::write_csv(&out_path(cfg, "roc.csv"), &["threshold", "fpr", "tpr"], &roc_rows)?;

    let mean = |sel: bool| {
        let xs: Vec<f64> = pooled_scores
            .iter()
            .zip(&pooled_labels)
            .filter(|(_, &l)| l == sel)
            .map(|(&s, _)| s)
            .collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    io::write_json(
        &out_path(cfg, "anomaly.json"),
        &json!({
            "config": cfg.to_map(),
            "auc": auc,
            "scored_frames": pooled_scores.len(),
            "mean_score_normal": mean(false),
            "mean_score_anomalous": mean(true),
        }),
    )?;
    println!("auc {auc:.4} over {} scored frames", pooled_scores.len());
    Ok(())
}

pub fn flops(cfg: &RunConfig) -> Result<(), CliError> {
    let model = io::read_checkpoint(&out_path(cfg, "model.sstm"))?;
    let seq_model = model.to_sequence_model()?;
    let test = io::read_dataset(&out_path(cfg, "test.sstd"))?;
    let (_, cost) = evaluate_prediction(&seq_model, &test, cfg.eval_warmup, cfg.eval_horizon)?;
    cost_csv(cfg, "flops.csv", &cost)?;
    io::write_json(
        &out_path(cfg, "flops.json"),
        &json!({ "config": cfg.to_map(), "report": cost }),
    )?;
    println!(
        "flops dense {} sparse {:.0}",
        cost.flop_dense_total, cost.flop_sparse_total
    );
    Ok(())
}

pub fn pareto(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.pareto_grid < 2 {
        return Err(CliError::Usage("pareto.grid must be >= 2".to_string()));
    }
    if cfg.pareto_init_weights.is_empty() {
        return Err(CliError::Usage("pareto.init_weights must be nonempty".to_string()));
    }
    let train_seqs = io::read_dataset(&out_path(cfg, "train.sstd"))?;
    let val_seqs = io::read_dataset(&out_path(cfg, "val.sstd"))?;
    let data_channels = train_seqs[0][0].channels();

    let mut trainer = |w: f64| -> sparsest::Result<ObjectiveVector> {
        let mut rng = RngState::new(cfg.seed);
        let mut model = TrainableModel::random(
            CellKind::Sparsest,
            data_channels,
            &cfg.hidden,
            cfg.kernel,
            &mut rng,
        )?;
        let mut tc = cfg.train_config();
        tc.w_mse = w;
        let report = train_prediction(&mut model, &train_seqs, &val_seqs, &tc)?;
        Ok(report.final_val)
    };
    let grid = uniform_grid(cfg.pareto_grid);
    let out = explore(
        &mut trainer,
        &cfg.pareto_init_weights,
        cfg.pareto_iterations,
        &grid,
        cfg.gp_options(),
    )?;
    for (w, err) in &out.failures {
        eprintln!("warning: training run at w_mse={w} failed and was skipped: {err}");
    }

    let rows: Vec<Vec<String>> = out
        .records
        .iter()
        .map(|r| {
            vec![
                fmt(r.w_mse),
                fmt(r.objectives.mse),
                fmt(r.objectives.occupancy),
                r.run_id.clone(),
                r.seed.to_string(),
            ]
        })
        .collect();
    io::write_csv(
        &out_path(cfg, "pareto_records.csv"),
        &["w_mse", "mse", "occupancy", "run_id", "seed"],
        &rows,
    )?;

    let curve: Vec<Vec<String>> = grid
        .iter()
        .map(|&w| {
            let p = out.gp.predict(w);
            vec![fmt(w), fmt(p[0].0), fmt(p[0].1), fmt(p[1].0), fmt(p[1].1)]
        })
        .collect();
    io::write_csv(
        &out_path(cfg, "gp_curve.csv"),
        &["w", "mean_mse", "var_mse", "mean_occ", "var_occ"],
        &curve,
    )?;

    io::write_json(
        &out_path(cfg, "pareto.json"),
        &json!({
            "config": cfg.to_map(),
            "records": out.records,
            "failures": out.failures.iter().map(|(w, e)| json!({"w_mse": w, "error": e})).collect::<Vec<_>>(),
            "lengthscale": out.gp.hyperparams().lengthscale,
            "nmll_trace_len": out.gp.nmll_trace.len(),
        }),
    )?;
    println!(
        "explored {} preference weights ({} failures)",
        out.records.len(),
        out.failures.len()
    );
    Ok(())
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let text = std::fs::read_to_string(path).map_err(Error::Io)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::data(format!("{} is empty", path.display())))?
        .split(',')
        .map(|s| s.to_string())
        .collect();
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|s| s.to_string()).collect())
        .collect();
    Ok((header, rows))
}

fn parse_field(row: &[String], idx: usize, path: &Path) -> Result<f64, CliError> {
    row.get(idx)
        .and_then(|s| s.parse::<f64>().ok())
        .ok_or_else(|| Error::data(format!("bad numeric field in {}", path.display())).into())
}

pub fn front_export(cfg: &RunConfig) -> Result<(), CliError> {
    let records_path = out_path(cfg, "pareto_records.csv");
    let (header, rows) = read_csv(&records_path)?;
    if header.first().map(String::as_str) != Some("w_mse") {
        return Err(Error::data(format!(
            "{} does not look like a pareto records file",
            records_path.display()
        ))
        .into());
    }
    // (w, objectives, source)
    let mut points: Vec<(f64, ObjectiveVector, &'static str)> = Vec::new();
    for row in &rows {
        points.push((
            parse_field(row, 0, &records_path)?,
            ObjectiveVector {
                mse: parse_field(row, 1, &records_path)?,
                occupancy: parse_field(row, 2, &records_path)?,
            },
            "sampled",
        ));
    }
    let curve_path = out_path(cfg, "gp_curve.csv");
    if curve_path.exists() {
        let (_, curve_rows) = read_csv(&curve_path)?;
        for row in &curve_rows {
            points.push((
                parse_field(row, 0, &curve_path)?,
                ObjectiveVector {
                    mse: parse_field(row, 1, &curve_path)?,
                    occupancy: parse_field(row, 3, &curve_path)?,
                },
                "gp_mean",
            ));
        }
    }
    let objectives: Vec<ObjectiveVector> = points.iter().map(|p| p.1).collect();
    let flags = dominance_flags(&objectives);
    let out_rows: Vec<Vec<String>> = points
        .iter()
        .zip(&flags)
        .map(|((w, o, source), dominated)| {
            vec![
                fmt(*w),
                fmt(o.mse),
                fmt(o.occupancy),
                dominated.to_string(),
                source.to_string(),
            ]
        })
        .collect();
    io::write_csv(
        &out_path(cfg, "front.csv"),
        &["w_mse", "mse", "occupancy", "dominated", "source"],
        &out_rows,
    )?;
    let kept = flags.iter().filter(|&&d| !d).count();
    println!("front.csv: {kept} non-dominated of {} points", flags.len());
    Ok(())
}
