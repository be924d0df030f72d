//! Training protocols: teacher-forced next-frame learning with early
//! stopping and plateau learning-rate decay, recursive rollout evaluation,
//! and sliding-window anomaly scoring.

use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, ParamId, ParamStore, Tape, Value};
use crate::cell::{CellKind, SequenceModel, GATES};
use crate::cost::{ModelCostReport, UnitCostReport};
use crate::data::Sequence;
use crate::objectives::{
    avg_unit_occupancy, mse, stch_scalarize, ObjectiveVector, ScalarizationConfig,
};
use crate::optim::{Adam, AdamConfig};
use crate::rng::RngState;
use crate::tensor::DenseTensor;
use crate::{Error, Result};

/// Parameter ids of one recurrent layer, in checkpoint order.
#[derive(Debug, Clone)]
pub struct LayerParams {
    pub wx: [ParamId; GATES],
    pub wh: [ParamId; GATES],
    pub theta_x: ParamId,
    pub theta_h: ParamId,
}

/// How the flat parameter store maps onto a model.
#[derive(Debug, Clone)]
pub struct ModelLayout {
    pub kind: CellKind,
    pub data_channels: usize,
    pub hidden: Vec<usize>,
    pub kernel_size: usize,
    pub layers: Vec<LayerParams>,
    pub head: ParamId,
}

/// A model whose weights live in a [`ParamStore`] so they can be trained.
#[derive(Debug, Clone)]
pub struct TrainableModel {
    pub store: ParamStore,
    pub layout: ModelLayout,
}

impl TrainableModel {
    /// Register a freshly initialized model (uniform fan-in init, zero
    /// thresholds).
    pub fn random(
        kind: CellKind,
        data_channels: usize,
        hidden: &[usize],
        kernel_size: usize,
        rng: &mut RngState,
    ) -> Result<Self> {
        let model = SequenceModel::random(kind, data_channels, hidden, kernel_size, rng)?;
        Ok(Self::from_sequence_model(&model))
    }

    /// Register every kernel and threshold of `model` in checkpoint order:
    /// per layer the four input-stream then four hidden-stream kernels,
    /// then the head, then per layer the two thresholds.
    pub fn from_sequence_model(model: &SequenceModel) -> Self {
        let mut store = ParamStore::new();
        let gate_names = ["i", "f", "o", "c"];
        let mut layers = Vec::new();
        for (l, cell) in model.cells.iter().enumerate() {
            let wx = std::array::from_fn(|g| {
                store.add(
                    format!("layer{l}.wx_{}", gate_names[g]),
                    Value::Kernel(cell.wx[g].clone()),
                )
            });
            let wh = std::array::from_fn(|g| {
                store.add(
                    format!("layer{l}.wh_{}", gate_names[g]),
                    Value::Kernel(cell.wh[g].clone()),
                )
            });
            layers.push((wx, wh, cell.theta_x, cell.theta_h));
        }
        let head = store.add("head", Value::Kernel(model.head.clone()));
        let layers = layers
            .into_iter()
            .enumerate()
            .map(|(l, (wx, wh, tx, th))| LayerParams {
                wx,
                wh,
                theta_x: store.add_clamped(format!("layer{l}.theta_x"), Value::Scalar(tx), 0.0),
                theta_h: store.add_clamped(format!("layer{l}.theta_h"), Value::Scalar(th), 0.0),
            })
            .collect();
        TrainableModel {
            layout: ModelLayout {
                kind: model.kind,
                data_channels: model.data_channels(),
                hidden: model.cells.iter().map(|c| c.hidden()).collect(),
                kernel_size: model.cells[0].kernel_size(),
                layers,
                head,
            },
            store,
        }
    }

    /// Materialize the inference model from the current parameter values.
    pub fn to_sequence_model(&self) -> Result<SequenceModel> {
        let mut cells = Vec::new();
        for lp in &self.layout.layers {
            let wx = std::array::from_fn(|g| {
                self.store.value(lp.wx[g]).as_kernel().unwrap().clone()
            });
            let wh = std::array::from_fn(|g| {
                self.store.value(lp.wh[g]).as_kernel().unwrap().clone()
            });
            let mut cw = crate::cell::CellWeights::new(wx, wh)?;
            cw.theta_x = self.store.value(lp.theta_x).as_scalar()?;
            cw.theta_h = self.store.value(lp.theta_h).as_scalar()?;
            cells.push(cw);
        }
        let head = self.store.value(self.layout.head).as_kernel()?.clone();
        SequenceModel::new(self.layout.kind, cells, head)
    }
}

/// Everything the tape forward of one sequence exposes to the loss.
pub struct TapeForward {
    /// One next-frame prediction node per input frame.
    pub preds: Vec<NodeId>,
    /// Soft fired-fraction nodes, one per (layer, stream, step).
    pub soft_occ: Vec<NodeId>,
    /// Hard occupancies recorded alongside.
    pub hard_occ: Vec<f64>,
}

/// Record a teacher-forced forward pass of the model over `frames`.
pub fn forward_on_tape(
    model: &TrainableModel,
    tape: &mut Tape,
    frames: &[DenseTensor],
    tau: f64,
) -> Result<TapeForward> {
    if frames.is_empty() {
        return Err(Error::shape("empty sequence".to_string()));
    }
    let (height, width) = (frames[0].height(), frames[0].width());
    let layout = &model.layout;
    let n_layers = layout.layers.len();

    // Parameter leaves are bound once per tape.
    let wx: Vec<[NodeId; GATES]> = layout
        .layers
        .iter()
        .map(|lp| std::array::from_fn(|g| tape.param(&model.store, lp.wx[g])))
        .collect();
    let wh: Vec<[NodeId; GATES]> = layout
        .layers
        .iter()
        .map(|lp| std::array::from_fn(|g| tape.param(&model.store, lp.wh[g])))
        .collect();
    let theta_x: Vec<NodeId> = layout
        .layers
        .iter()
        .map(|lp| tape.param(&model.store, lp.theta_x))
        .collect();
    let theta_h: Vec<NodeId> = layout
        .layers
        .iter()
        .map(|lp| tape.param(&model.store, lp.theta_h))
        .collect();
    let head = tape.param(&model.store, layout.head);

    struct LayerNodes {
        c: NodeId,
        h: NodeId,
        mem: Vec<NodeId>,
        xhat_x: NodeId,
        xhat_h: NodeId,
    }
    let mut states: Vec<LayerNodes> = (0..n_layers)
        .map(|l| {
            let hidden = layout.hidden[l];
            let c_in = if l == 0 { layout.data_channels } else { layout.hidden[l - 1] };
            let zero_h = tape.constant_tensor(DenseTensor::zeros(hidden, height, width));
            let zero_in = tape.constant_tensor(DenseTensor::zeros(c_in, height, width));
            LayerNodes {
                c: zero_h,
                h: zero_h,
                mem: vec![zero_h; GATES],
                xhat_x: zero_in,
                xhat_h: zero_h,
            }
        })
        .collect();

    let mut preds = Vec::with_capacity(frames.len());
    let mut soft_occ = Vec::new();
    let mut hard_occ = Vec::new();

    for frame in frames {
        let mut input = tape.constant_tensor(frame.clone());
        for l in 0..n_layers {
            let gates: Vec<NodeId> = match layout.kind {
                CellKind::Dense => {
                    let mut out = Vec::with_capacity(GATES);
                    let h_prev = states[l].h;
                    for g in 0..GATES {
                        let gx = tape.conv2d(input, wx[l][g])?;
                        let gh = tape.conv2d(h_prev, wh[l][g])?;
                        out.push(tape.add(gx, gh)?);
                    }
                    out
                }
                CellKind::Sparsest => {
                    let tx = tape.scalar(theta_x[l])?;
                    let th = tape.scalar(theta_h[l])?;
                    let gx = tape.delta_gate(input, states[l].xhat_x, tx)?;
                    let gh = tape.delta_gate(states[l].h, states[l].xhat_h, th)?;
                    states[l].xhat_x = gx.x_hat_next;
                    states[l].xhat_h = gh.x_hat_next;
                    let sx = tape.soft_fire(theta_x[l], gx.abs_diff.clone(), tau)?;
                    let sh = tape.soft_fire(theta_h[l], gh.abs_diff.clone(), tau)?;
                    soft_occ.push(sx);
                    soft_occ.push(sh);
                    hard_occ.push(gx.hard_occupancy);
                    hard_occ.push(gh.hard_occupancy);
                    let mut out = Vec::with_capacity(GATES);
                    for g in 0..GATES {
                        let cx = tape.sparse_conv_delta(gx.delta, wx[l][g])?;
                        let ch = tape.sparse_conv_delta(gh.delta, wh[l][g])?;
                        let m = tape.add_n(vec![cx, ch, states[l].mem[g]])?;
                        states[l].mem[g] = m;
                        out.push(m);
                    }
                    out
                }
            };
            let i = tape.sigmoid(gates[0])?;
            let f = tape.sigmoid(gates[1])?;
            let o = tape.sigmoid(gates[2])?;
            let cc = tape.tanh(gates[3])?;
            let fc = tape.mul(f, states[l].c)?;
            let ic = tape.mul(i, cc)?;
            let c = tape.add(fc, ic)?;
            let tc = tape.tanh(c)?;
            let h = tape.mul(o, tc)?;
            states[l].c = c;
            states[l].h = h;
            input = h;
        }
        let logits = tape.conv2d(input, head)?;
        preds.push(tape.sigmoid(logits)?);
    }
    Ok(TapeForward { preds, soft_occ, hard_occ })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub batch_size: usize,
    pub w_mse: f64,
    pub mu: f64,
    pub tau: f64,
    /// Learning-rate multiplier for the delta thresholds; thresholds only
    /// ever receive upward pressure from the occupancy surrogate, so their
    /// step size controls how fast sparsity is traded in.
    pub theta_lr_scale: f64,
    /// Sliding-window length for anomaly-mode scoring; must be odd and >= 3.
    pub window: usize,
    pub stride: usize,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            patience: 10,
            lr: 1e-4,
            lr_decay: 0.5,
            batch_size: 4,
            w_mse: 1.0,
            mu: 0.1,
            tau: 0.05,
            theta_lr_scale: 1.0,
            window: 21,
            stride: 1,
            seed: 1,
            jobs: 1,
        }
    }
}

impl TrainConfig {
    pub fn scalarization(&self) -> ScalarizationConfig {
        ScalarizationConfig::new(self.w_mse, self.mu)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 {
            return Err(Error::data("patience must be >= 1".to_string()));
        }
        if !(0.0..=1.0).contains(&self.w_mse) {
            return Err(Error::data("w_mse must lie in [0, 1]".to_string()));
        }
        if self.mu <= 0.0 || self.tau <= 0.0 || self.theta_lr_scale < 0.0 {
            return Err(Error::data(
                "mu and tau must be positive; theta_lr_scale nonnegative".to_string(),
            ));
        }
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::data("window must be odd and >= 3".to_string()));
        }
        if self.batch_size < 1 || self.stride < 1 {
            return Err(Error::data("batch size and stride must be >= 1".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStats {
    pub loss: f64,
    pub mse: f64,
    /// Hard occupancy; absent for dense models.
    pub occupancy: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Absent on the initial (pre-training) evaluation record.
    pub train: Option<EpochStats>,
    pub val: EpochStats,
    pub lr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    /// Validation objectives of the restored best checkpoint.
    pub final_val: ObjectiveVector,
}

/// Per-sequence gradient work item result.
struct SeqResult {
    grads: Vec<Vec<f64>>,
    loss: f64,
    mse: f64,
    hard_occ: Vec<f64>,
}

fn sequence_gradients(
    model: &TrainableModel,
    seq: &Sequence,
    cfg: &TrainConfig,
    scale: f64,
) -> Result<SeqResult> {
    if seq.len() < 2 {
        return Err(Error::shape("training sequences need >= 2 frames".to_string()));
    }
    let inputs = &seq[..seq.len() - 1];
    let targets: Vec<DenseTensor> = seq[1..].to_vec();
    let mut local = model.clone();
    let mut tape = Tape::new();
    let fwd = forward_on_tape(&local, &mut tape, inputs, cfg.tau)?;
    let mse_node = tape.mse_frames(fwd.preds.clone(), targets)?;
    let loss_node = match model.layout.kind {
        CellKind::Dense => mse_node,
        CellKind::Sparsest => {
            let occ_node = tape.mean_scalars(fwd.soft_occ.clone())?;
            tape.stch_loss(mse_node, occ_node, cfg.scalarization())?
        }
    };
    let scaled = tape.scale(loss_node, scale)?;
    tape.backward(scaled, &mut local.store)?;
    Ok(SeqResult {
        grads: local
            .store
            .iter()
            .map(|p| p.grad.flat().to_vec())
            .collect(),
        loss: tape.scalar(loss_node)?,
        mse: tape.scalar(mse_node)?,
        hard_occ: fwd.hard_occ,
    })
}

/// Teacher-forced validation metrics: next-frame MSE and the hard delta
/// occupancy (sparse models only).
pub fn validation_objectives(
    model: &SequenceModel,
    seqs: &[Sequence],
) -> Result<ObjectiveVector> {
    if seqs.is_empty() {
        return Err(Error::data("empty validation set".to_string()));
    }
    let mut mses = Vec::with_capacity(seqs.len());
    let mut occs = Vec::new();
    for seq in seqs {
        let inputs = &seq[..seq.len() - 1];
        let targets = &seq[1..];
        let (preds, stats) = model.run(inputs)?;
        mses.push(mse(&preds, targets)?);
        occs.extend(stats.all_occupancies());
    }
    let occupancy = if occs.is_empty() {
        0.0
    } else {
        avg_unit_occupancy(&occs)?
    };
    Ok(ObjectiveVector {
        mse: mses.iter().sum::<f64>() / mses.len() as f64,
        occupancy,
    })
}

fn val_loss_of(kind: CellKind, obj: &ObjectiveVector, cfg: &TrainConfig) -> f64 {
    match kind {
        CellKind::Dense => obj.mse,
        CellKind::Sparsest => stch_scalarize(obj, &cfg.scalarization()),
    }
}

/// Train by backpropagation through time with Adam, minimizing the smooth
/// Tchebycheff composite (plain MSE for dense models). The best-validation
/// parameters (32-bit checkpoint precision) are restored before returning.
pub fn train_prediction(
    model: &mut TrainableModel,
    train: &[Sequence],
    val: &[Sequence],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::data("train and val splits must be nonempty".to_string()));
    }
    let kind = model.layout.kind;
    for lp in model.layout.layers.clone() {
        model.store.param_mut(lp.theta_x).lr_scale = cfg.theta_lr_scale;
        model.store.param_mut(lp.theta_h).lr_scale = cfg.theta_lr_scale;
    }
    let mut adam = Adam::new(&model.store, AdamConfig::default());
    let mut lr = cfg.lr;
    let mut rng = RngState::new(cfg.seed ^ 0x7261696e);

    let initial = validation_objectives(&model.to_sequence_model()?, val)?;
    let mut best_val_loss = val_loss_of(kind, &initial, cfg);
    let mut best_epoch = 0usize;
    let mut best_snapshot = model.store.snapshot_f32();
    let mut records = vec![EpochRecord {
        epoch: 0,
        train: None,
        val: EpochStats {
            loss: best_val_loss,
            mse: initial.mse,
            occupancy: match kind {
                CellKind::Dense => None,
                CellKind::Sparsest => Some(initial.occupancy),
            },
        },
        lr,
    }];

    let half_patience = cfg.patience.div_ceil(2);
    let mut plateau = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut mse_sum = 0.0;
        let mut occ_records = Vec::new();
        for batch in order.chunks(cfg.batch_size) {
            model.store.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            let results = run_batch(model, train, batch, cfg, scale)?;
            for r in results {
                if !r.loss.is_finite() {
                    return Err(Error::numeric(format!(
                        "training diverged at epoch {epoch}"
                    )));
                }
                loss_sum += r.loss;
                mse_sum += r.mse;
                occ_records.extend(r.hard_occ);
                for (p, g) in model.store.iter_mut().zip(&r.grads) {
                    for (a, b) in p.grad.flat_mut().iter_mut().zip(g) {
                        *a += b;
                    }
                }
            }
            adam.step(&mut model.store, lr)?;
        }

        let train_stats = EpochStats {
            loss: loss_sum / train.len() as f64,
            mse: mse_sum / train.len() as f64,
            occupancy: if occ_records.is_empty() {
                None
            } else {
                Some(avg_unit_occupancy(&occ_records)?)
            },
        };

        let val_obj = validation_objectives(&model.to_sequence_model()?, val)?;
        let val_loss = val_loss_of(kind, &val_obj, cfg);
        records.push(EpochRecord {
            epoch,
            train: Some(train_stats),
            val: EpochStats {
                loss: val_loss,
                mse: val_obj.mse,
                occupancy: match kind {
                    CellKind::Dense => None,
                    CellKind::Sparsest => Some(val_obj.occupancy),
                },
            },
            lr,
        });

        if val_loss < best_val_loss {
            best_val_loss = val_loss;
            best_epoch = epoch;
            best_snapshot = model.store.snapshot_f32();
            plateau = 0;
        } else {
            plateau += 1;
            if plateau >= cfg.patience {
                stopped_early = true;
                break;
            }
            if plateau.is_multiple_of(half_patience) {
                lr *= cfg.lr_decay;
            }
        }
    }

    model.store.restore_f32(&best_snapshot);
    let final_val = validation_objectives(&model.to_sequence_model()?, val)?;
    if !final_val.is_finite() {
        return Err(Error::numeric(
            "restored checkpoint produced non-finite validation objectives".to_string(),
        ));
    }
    Ok(TrainReport {
        records,
        best_epoch,
        best_val_loss,
        stopped_early,
        final_val,
    })
}

fn run_batch(
    model: &TrainableModel,
    train: &[Sequence],
    batch: &[usize],
    cfg: &TrainConfig,
    scale: f64,
) -> Result<Vec<SeqResult>> {
    let jobs = cfg.jobs.max(1).min(batch.len());
    if jobs <= 1 {
        return batch
            .iter()
            .map(|&i| sequence_gradients(model, &train[i], cfg, scale))
            .collect();
    }
    // Deterministic parallel reduction: workers own contiguous chunks and
    // results are concatenated in chunk order.
    let chunk = batch.len().div_ceil(jobs);
    let chunks: Vec<&[usize]> = batch.chunks(chunk).collect();
    let mut out: Vec<Vec<SeqResult>> = Vec::new();
    std::thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = chunks
            .iter()
            .map(|ids| {
                scope.spawn(move || {
                    ids.iter()
                        .map(|&i| sequence_gradients(model, &train[i], cfg, scale))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        for h in handles {
            out.push(h.join().map_err(|_| {
                Error::numeric("training worker panicked".to_string())
            })??);
        }
        Ok(())
    })?;
    Ok(out.into_iter().flatten().collect())
}

/// Recursive-rollout evaluation: MSE over the horizon plus the measured
/// cost report (mean active counts per unit).
pub fn evaluate_prediction(
    model: &SequenceModel,
    test: &[Sequence],
    warmup: usize,
    horizon: usize,
) -> Result<(f64, ModelCostReport)> {
    if test.is_empty() {
        return Err(Error::data("empty test set".to_string()));
    }
    let mut mses = Vec::with_capacity(test.len());
    let mut stats = crate::cell::RunStats::default();
    let (height, width) = (test[0][0].height(), test[0][0].width());
    for seq in test {
        if seq.len() < warmup + horizon {
            return Err(Error::shape(format!(
                "sequence of {} frames cannot cover warmup {} + horizon {}",
                seq.len(),
                warmup,
                horizon
            )));
        }
        let (preds, s) = model.rollout(seq, warmup, horizon)?;
        stats.merge(&s);
        mses.push(mse(&preds, &seq[warmup..warmup + horizon])?);
    }
    let test_mse = mses.iter().sum::<f64>() / mses.len() as f64;

    let k = model.cells[0].kernel_size();
    let units = match model.kind {
        CellKind::Dense => model
            .cells
            .iter()
            .enumerate()
            .map(|(l, c)| UnitCostReport::for_dense_unit(l, height, width, k, c.c_in(), c.hidden()))
            .collect(),
        CellKind::Sparsest => {
            let means = stats.mean_active();
            model
                .cells
                .iter()
                .enumerate()
                .map(|(l, c)| {
                    let (dx, dh) = means[l];
                    UnitCostReport::for_sparse_unit(
                        l,
                        height,
                        width,
                        k,
                        c.c_in(),
                        c.hidden(),
                        dx,
                        dh,
                    )
                })
                .collect()
        }
    };
    Ok((test_mse, ModelCostReport::from_units(units)))
}

/// Score of one frame: its index in the sequence plus the central-frame
/// prediction error of its window.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FrameScore {
    pub frame: usize,
    pub score: f64,
}

/// Slide a window over the sequence (given stride); for each window,
/// teacher-force the frames before the central frame and score the center
/// by its prediction MSE. Frames never at a window center get no score.
pub fn anomaly_scores(
    model: &SequenceModel,
    frames: &[DenseTensor],
    window: usize,
    stride: usize,
) -> Result<Vec<FrameScore>> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::data("window must be odd and >= 3".to_string()));
    }
    if frames.len() < window {
        return Err(Error::shape(format!(
            "sequence of {} frames is shorter than window {}",
            frames.len(),
            window
        )));
    }
    let center_offset = window / 2;
    let mut out = Vec::new();
    let mut start = 0usize;
    while start + window <= frames.len() {
        let center = start + center_offset;
        let inputs = &frames[start..center];
        let (preds, _) = model.run(inputs)?;
        let pred_center = preds.last().unwrap();
        let score = mse(
            std::slice::from_ref(pred_center),
            std::slice::from_ref(&frames[center]),
        )?;
        out.push(FrameScore { frame: center, score });
        start += stride;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::ConvKernel;
    use crate::tensor::occupancy;

    fn tiny_dataset(rng: &mut RngState, n: usize, frames: usize) -> Vec<Sequence> {
        let cfg = crate::data::BlobConfig {
            height: 8,
            width: 8,
            num_blobs: 1,
            blob_size: (2.0, 3.0),
            frames,
            train_sequences: n,
            val_sequences: 1,
            test_sequences: 1,
            seed: rng.next_u64(),
            ..Default::default()
        };
        crate::data::generate_blobs(&cfg).unwrap().train
    }

    #[test]
    fn tape_forward_matches_inference_path() {
        let mut rng = RngState::new(71);
        for kind in [CellKind::Dense, CellKind::Sparsest] {
            let mut model = TrainableModel::random(kind, 1, &[3, 2], 3, &mut rng).unwrap();
            // Nonzero thresholds on the sparse path.
            if kind == CellKind::Sparsest {
                for lp in model.layout.layers.clone() {
                    *model.store.param_mut(lp.theta_x).value.flat_mut().first_mut().unwrap() =
                        0.03;
                    *model.store.param_mut(lp.theta_h).value.flat_mut().first_mut().unwrap() =
                        0.02;
                }
            }
            let seqs = tiny_dataset(&mut rng, 1, 6);
            let frames = &seqs[0];
            let inference = model.to_sequence_model().unwrap();
            let (preds, stats) = inference.run(&frames[..5]).unwrap();

            let mut tape = Tape::new();
            let fwd = forward_on_tape(&model, &mut tape, &frames[..5], 0.05).unwrap();
            for (p, node) in preds.iter().zip(&fwd.preds) {
                let tv = tape.tensor(*node).unwrap();
                assert!(p.max_abs_diff(tv) <= 1e-12);
            }
            if kind == CellKind::Sparsest {
                // Same hard occupancies, interleaved per layer and stream.
                let mut from_stats = Vec::new();
                for t in 0..5 {
                    for l in 0..stats.layers.len() {
                        from_stats.push(stats.layers[l].occ_x[t]);
                        from_stats.push(stats.layers[l].occ_h[t]);
                    }
                }
                assert_eq!(fwd.hard_occ.len(), from_stats.len());
                for (a, b) in fwd.hard_occ.iter().zip(&from_stats) {
                    assert!((a - b).abs() <= 1e-15);
                }
            }
        }
    }

    #[test]
    fn sparsest_weight_gradients_match_finite_differences_at_zero_threshold() {
        let mut rng = RngState::new(72);
        let model = TrainableModel::random(CellKind::Sparsest, 1, &[2], 3, &mut rng).unwrap();
        let frames: Vec<DenseTensor> = (0..4)
            .map(|_| {
                DenseTensor::from_values(1, 4, 4, (0..16).map(|_| rng.uniform_in(0.1, 0.9)).collect())
                    .unwrap()
            })
            .collect();
        let inputs = &frames[..3];
        let targets: Vec<DenseTensor> = frames[1..].to_vec();

        let eval = |m: &TrainableModel| -> f64 {
            let mut tape = Tape::new();
            let fwd = forward_on_tape(m, &mut tape, inputs, 0.05).unwrap();
            let loss = tape.mse_frames(fwd.preds, targets.clone()).unwrap();
            tape.scalar(loss).unwrap()
        };

        let mut m = model.clone();
        let mut tape = Tape::new();
        let fwd = forward_on_tape(&m, &mut tape, inputs, 0.05).unwrap();
        let loss = tape.mse_frames(fwd.preds, targets.clone()).unwrap();
        tape.backward(loss, &mut m.store).unwrap();

        let eps = 1e-5;
        let n_params = m.store.len();
        for pid in 0..n_params {
            let id = crate::autodiff::ParamId(pid);
            let name = m.store.param(id).name.clone();
            if name.contains("theta") {
                continue; // thresholds get gradient only through the surrogate
            }
            let flat_len = m.store.value(id).flat().len();
            for i in (0..flat_len).step_by(7) {
                let orig = m.store.value(id).flat()[i];
                m.store.param_mut(id).value.flat_mut()[i] = orig + eps;
                let fp = eval(&m);
                m.store.param_mut(id).value.flat_mut()[i] = orig - eps;
                let fm = eval(&m);
                m.store.param_mut(id).value.flat_mut()[i] = orig;
                let fd = (fp - fm) / (2.0 * eps);
                let an = m.store.grad(id).flat()[i];
                let rel = (an - fd).abs() / fd.abs().max(1e-8);
                assert!(rel <= 1e-4, "{name}[{i}]: analytic {an} vs fd {fd}");
            }
        }
    }

    #[test]
    fn zero_epochs_yields_initial_record_only() {
        let mut rng = RngState::new(73);
        let mut model = TrainableModel::random(CellKind::Sparsest, 1, &[2], 3, &mut rng).unwrap();
        let data = tiny_dataset(&mut rng, 3, 5);
        let cfg = TrainConfig { epochs: 0, batch_size: 2, ..Default::default() };
        let report = train_prediction(&mut model, &data[..2], &data[2..], &cfg).unwrap();
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.records[0].epoch, 0);
        assert!(report.records[0].train.is_none());
        assert_eq!(report.best_epoch, 0);
    }

    #[test]
    fn first_epoch_matches_dense_baseline_at_full_mse_preference() {
        // Identical weights, zero thresholds, w_mse = 1: the sparse model's
        // first epoch reproduces the dense baseline's to fp accumulation
        // error.
        let mut rng = RngState::new(74);
        let base = SequenceModel::random(CellKind::Dense, 1, &[2], 3, &mut rng).unwrap();
        let sparse_seq = SequenceModel { kind: CellKind::Sparsest, ..base.clone() };
        let mut dense = TrainableModel::from_sequence_model(&base);
        let mut sparse = TrainableModel::from_sequence_model(&sparse_seq);
        let data = tiny_dataset(&mut rng, 6, 5);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 2,
            lr: 1e-3,
            w_mse: 1.0,
            seed: 99,
            ..Default::default()
        };
        let rd = train_prediction(&mut dense, &data[..4], &data[4..], &cfg).unwrap();
        let rs = train_prediction(&mut sparse, &data[..4], &data[4..], &cfg).unwrap();
        let ld = rd.records[1].train.unwrap().loss;
        let ls = rs.records[1].train.unwrap().loss;
        assert!((ld - ls).abs() <= 1e-9 * ld.abs().max(1.0), "{ld} vs {ls}");
    }

    #[test]
    fn early_stopping_respects_patience() {
        let mut rng = RngState::new(75);
        let mut model = TrainableModel::random(CellKind::Sparsest, 1, &[2], 3, &mut rng).unwrap();
        let data = tiny_dataset(&mut rng, 4, 5);
        // lr = 0 cannot improve validation, so training stops after
        // exactly `patience` stale epochs.
        let cfg = TrainConfig {
            epochs: 50,
            patience: 3,
            lr: 0.0,
            batch_size: 4,
            ..Default::default()
        };
        let report = train_prediction(&mut model, &data[..3], &data[3..], &cfg).unwrap();
        assert!(report.stopped_early);
        assert_eq!(report.records.len(), 1 + 3);
    }

    #[test]
    fn training_improves_over_constant_predictor() {
        let mut rng = RngState::new(76);
        let mut model = TrainableModel::random(CellKind::Sparsest, 1, &[4], 3, &mut rng).unwrap();
        let data = tiny_dataset(&mut rng, 10, 8);
        let cfg = TrainConfig {
            epochs: 6,
            batch_size: 4,
            lr: 3e-3,
            w_mse: 1.0,
            seed: 7,
            ..Default::default()
        };
        train_prediction(&mut model, &data[..8], &data[8..], &cfg).unwrap();
        let m = model.to_sequence_model().unwrap();
        let (test_mse, _) = evaluate_prediction(&m, &data[8..], 4, 4).unwrap();
        // Constant-0.5 predictor MSE on the same rollout targets.
        let mut baseline = 0.0;
        let mut count = 0.0;
        for seq in &data[8..] {
            for f in &seq[4..8] {
                for &v in f.values() {
                    baseline += (v - 0.5) * (v - 0.5);
                    count += 1.0;
                }
            }
        }
        baseline /= count;
        assert!(
            test_mse < baseline,
            "trained {test_mse} vs constant predictor {baseline}"
        );
    }

    #[test]
    fn evaluation_reports_ar_consistent_with_occupancy() {
        let mut rng = RngState::new(77);
        let mut model = TrainableModel::random(CellKind::Sparsest, 1, &[3], 3, &mut rng).unwrap();
        let lp = model.layout.layers[0].clone();
        *model.store.param_mut(lp.theta_x).value.flat_mut().first_mut().unwrap() = 0.05;
        *model.store.param_mut(lp.theta_h).value.flat_mut().first_mut().unwrap() = 0.03;
        let m = model.to_sequence_model().unwrap();
        let data = tiny_dataset(&mut rng, 2, 8);
        let (_, report) = evaluate_prediction(&m, &data, 4, 4).unwrap();
        let unit = &report.units[0];
        let hw = (unit.height * unit.width) as f64;
        let mean_occ = 0.5 * (unit.d_x / hw + unit.d_h / hw);
        assert!((unit.ar_approx.unwrap() - (1.0 - mean_occ)).abs() <= 1e-12);
        // Dense baseline reports AR as not applicable.
        let dense = SequenceModel::random(CellKind::Dense, 1, &[3], 3, &mut rng).unwrap();
        let (_, dreport) = evaluate_prediction(&dense, &data, 4, 4).unwrap();
        assert!(dreport.units[0].ar.is_none());
        assert!(dreport.ar_mean.is_none());
    }

    #[test]
    fn anomaly_scores_cover_exactly_the_window_centers() {
        let mut rng = RngState::new(78);
        let model = SequenceModel::random(CellKind::Sparsest, 1, &[2], 3, &mut rng).unwrap();
        let seq: Vec<DenseTensor> = (0..100)
            .map(|_| {
                DenseTensor::from_values(1, 6, 6, (0..36).map(|_| rng.uniform()).collect())
                    .unwrap()
            })
            .collect();
        let scores = anomaly_scores(&model, &seq, 21, 1).unwrap();
        assert_eq!(scores.len(), 80);
        assert_eq!(scores.first().unwrap().frame, 10);
        assert_eq!(scores.last().unwrap().frame, 89);
        assert!(anomaly_scores(&model, &seq[..10], 21, 1).is_err());
    }

    #[test]
    fn perfect_reconstruction_scores_zero() {
        // A sequence of identical frames that the model predicts exactly:
        // impossible in general, so check the degenerate direction instead.
        // A zero-weight model predicts 0.5 everywhere; feeding constant-0.5
        // frames gives zero reconstruction error at every center.
        let zeros = |c_out: usize, c_in: usize, k: usize| ConvKernel::zeros(c_out, c_in, k);
        let w = crate::cell::CellWeights::new(
            [zeros(2, 1, 3), zeros(2, 1, 3), zeros(2, 1, 3), zeros(2, 1, 3)],
            [zeros(2, 2, 3), zeros(2, 2, 3), zeros(2, 2, 3), zeros(2, 2, 3)],
        )
        .unwrap();
        let model = SequenceModel::new(CellKind::Sparsest, vec![w], zeros(1, 2, 1)).unwrap();
        let frames: Vec<DenseTensor> =
            (0..9).map(|_| DenseTensor::zeros(1, 4, 4).map(|_| 0.5)).collect();
        let scores = anomaly_scores(&model, &frames, 3, 1).unwrap();
        assert!(scores.iter().all(|s| s.score == 0.0));
    }

    #[test]
    fn zero_threshold_input_stream_tracks_raw_first_differences() {
        // With zero thresholds, the recorded input-delta occupancies are
        // exactly the occupancies of the data's first-order differences
        // (the first step fires on the raw frame).
        let mut rng = RngState::new(80);
        let model = SequenceModel::random(CellKind::Sparsest, 1, &[2], 3, &mut rng).unwrap();
        let seqs = tiny_dataset(&mut rng, 1, 6);
        let frames = &seqs[0];
        let (_, stats) = model.run(frames).unwrap();
        let mut expected = vec![occupancy(&frames[0])];
        for t in 1..frames.len() {
            expected.push(occupancy(&frames[t].sub(&frames[t - 1]).unwrap()));
        }
        assert_eq!(stats.layers[0].occ_x, expected);
    }

    #[test]
    fn occupancy_of_generated_deltas_matches_tensor_occupancy() {
        // Recorded hard occupancies are genuine site fractions.
        let mut rng = RngState::new(79);
        let model = SequenceModel::random(CellKind::Sparsest, 1, &[2], 3, &mut rng).unwrap();
        let seqs = tiny_dataset(&mut rng, 1, 5);
        let (_, stats) = model.run(&seqs[0]).unwrap();
        for occ in stats.all_occupancies() {
            assert!((0.0..=1.0).contains(&occ));
        }
        // First-step input delta occupancy equals the raw frame occupancy
        // (reference starts at zero and theta is zero).
        assert_eq!(stats.layers[0].occ_x[0], occupancy(&seqs[0][0]));
    }
}
