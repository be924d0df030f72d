//! Synthetic desk-scale video generators.
//!
//! Two dataset families, both deterministic per seed and valued in [0, 1]:
//!
//! - bouncing blobs: bright axis-aligned squares with one-pixel
//!   anti-aliased edges moving over a black background, reflecting off the
//!   frame walls with unchanged speed. Foreground is spatially sparse and
//!   changes slowly frame to frame.
//! - machine cycles: a carrier block sweeping a fixed horizontal path over
//!   a static textured background, with a cargo block riding on top.
//!   Anomaly injectors (stall, skip-load, off-path) perturb chosen frame
//!   windows of test sequences and label exactly those frames.

use serde::{Deserialize, Serialize};

use crate::rng::RngState;
use crate::tensor::DenseTensor;
use crate::{Error, Result};

pub type Sequence = Vec<DenseTensor>;

/// A test sequence with frame-level anomaly labels.
#[derive(Debug, Clone)]
pub struct LabeledSequence {
    pub frames: Sequence,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlobConfig {
    pub height: usize,
    pub width: usize,
    pub num_blobs: usize,
    /// Blob side length is drawn uniformly from this range.
    pub blob_size: (f64, f64),
    /// Per-step speed is drawn uniformly from this range.
    pub speed: (f64, f64),
    pub frames: usize,
    pub train_sequences: usize,
    pub val_sequences: usize,
    pub test_sequences: usize,
    pub seed: u64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        BlobConfig {
            height: 16,
            width: 16,
            num_blobs: 2,
            blob_size: (3.0, 5.0),
            speed: (0.6, 1.4),
            frames: 20,
            train_sequences: 200,
            val_sequences: 50,
            test_sequences: 100,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSplits {
    pub train: Vec<Sequence>,
    pub val: Vec<Sequence>,
    pub test: Vec<Sequence>,
}

/// Reflect a 1D position into [lo, hi], flipping the velocity sign on each
/// wall hit. Speed is conserved exactly: components only change sign.
pub(crate) fn reflect_interval(mut p: f64, mut v: f64, lo: f64, hi: f64) -> (f64, f64) {
    debug_assert!(hi >= lo);
    loop {
        if p < lo {
            p = 2.0 * lo - p;
            v = -v;
        } else if p > hi {
            p = 2.0 * hi - p;
            v = -v;
        } else {
            return (p, v);
        }
    }
}

/// Coverage of pixel cell `[i, i+1)` by interval `[a, a+len)`.
#[inline]
fn overlap(cell: usize, a: f64, len: f64) -> f64 {
    let lo = (cell as f64).max(a);
    let hi = ((cell + 1) as f64).min(a + len);
    (hi - lo).max(0.0)
}

/// Composite a bright square of side `size` at continuous top-left `(y, x)`
/// onto a frame: `pixel = pixel (1 - cov) + intensity * cov`, one-pixel
/// anti-aliased edges.
fn draw_square(frame: &mut DenseTensor, y: f64, x: f64, size: f64, intensity: f64) {
    let (_, height, width) = frame.dims();
    let r0 = y.floor().max(0.0) as usize;
    let c0 = x.floor().max(0.0) as usize;
    let r1 = ((y + size).ceil() as usize).min(height);
    let c1 = ((x + size).ceil() as usize).min(width);
    for r in r0..r1 {
        let oy = overlap(r, y, size);
        for c in c0..c1 {
            let cov = oy * overlap(c, x, size);
            if cov > 0.0 {
                let v = frame.at(0, r, c);
                *frame.at_mut(0, r, c) = v * (1.0 - cov) + intensity * cov;
            }
        }
    }
}

struct Blob {
    y: f64,
    x: f64,
    vy: f64,
    vx: f64,
    size: f64,
}

fn blob_sequence(cfg: &BlobConfig, rng: &mut RngState) -> Result<Sequence> {
    let mut blobs = Vec::with_capacity(cfg.num_blobs);
    for _ in 0..cfg.num_blobs {
        let size = rng.uniform_in(cfg.blob_size.0, cfg.blob_size.1);
        if size > cfg.height as f64 || size > cfg.width as f64 {
            return Err(Error::data(format!(
                "blob of size {size} does not fit a {}x{} frame",
                cfg.height, cfg.width
            )));
        }
        let y = rng.uniform_in(0.0, cfg.height as f64 - size);
        let x = rng.uniform_in(0.0, cfg.width as f64 - size);
        let angle = rng.uniform_in(0.0, std::f64::consts::TAU);
        let speed = rng.uniform_in(cfg.speed.0, cfg.speed.1);
        blobs.push(Blob {
            y,
            x,
            vy: speed * angle.sin(),
            vx: speed * angle.cos(),
            size,
        });
    }
    let mut frames = Vec::with_capacity(cfg.frames);
    for _ in 0..cfg.frames {
        let mut frame = DenseTensor::zeros(1, cfg.height, cfg.width);
        for b in &blobs {
            draw_square(&mut frame, b.y, b.x, b.size, 1.0);
        }
        frames.push(frame);
        for b in &mut blobs {
            let (y, vy) = reflect_interval(b.y + b.vy, b.vy, 0.0, cfg.height as f64 - b.size);
            let (x, vx) = reflect_interval(b.x + b.vx, b.vx, 0.0, cfg.width as f64 - b.size);
            b.y = y;
            b.vy = vy;
            b.x = x;
            b.vx = vx;
        }
    }
    Ok(frames)
}

/// Generate train/val/test splits of bouncing-blob sequences,
/// deterministically from the seed (each sequence derives its own stream).
pub fn generate_blobs(cfg: &BlobConfig) -> Result<DatasetSplits> {
    let root = RngState::new(cfg.seed);
    let make = |count: usize, salt: u64| -> Result<Vec<Sequence>> {
        (0..count)
            .map(|i| blob_sequence(cfg, &mut root.derive(salt * 1_000_003 + i as u64)))
            .collect()
    };
    Ok(DatasetSplits {
        train: make(cfg.train_sequences, 1)?,
        val: make(cfg.val_sequences, 2)?,
        test: make(cfg.test_sequences, 3)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// Carrier and cargo freeze in place.
    Stall,
    /// Cargo stays at the pickup dock while the carrier sweeps.
    SkipLoad,
    /// Carrier (and cargo) displaced off the nominal path.
    OffPath,
}

/// One anomaly window: frames `start..end` of a test sequence get the
/// perturbation and are labeled anomalous.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InjectorSpec {
    pub kind: AnomalyKind,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CycleConfig {
    pub height: usize,
    pub width: usize,
    /// Loop period in underlying path steps.
    pub period: usize,
    /// Emit every n-th path step.
    pub sample_every: usize,
    pub frames_train: usize,
    pub frames_test: usize,
    pub train_sequences: usize,
    pub val_sequences: usize,
    pub test_sequences: usize,
    /// Cycled over test sequences; an empty list means every test frame is
    /// normal. Entry `i % (len + 1) == len` leaves a sequence unperturbed so
    /// fully normal test sequences always exist when injectors are present.
    pub injectors: Vec<InjectorSpec>,
    pub seed: u64,
}

impl Default for CycleConfig {
    fn default() -> Self {
        CycleConfig {
            height: 16,
            width: 16,
            period: 24,
            sample_every: 1,
            frames_train: 21,
            frames_test: 61,
            train_sequences: 120,
            val_sequences: 30,
            test_sequences: 12,
            injectors: vec![
                InjectorSpec { kind: AnomalyKind::Stall, start: 26, end: 52 },
                InjectorSpec { kind: AnomalyKind::SkipLoad, start: 22, end: 52 },
                InjectorSpec { kind: AnomalyKind::OffPath, start: 30, end: 52 },
            ],
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CycleDataset {
    pub train: Vec<Sequence>,
    pub val: Vec<Sequence>,
    pub test: Vec<LabeledSequence>,
    /// The shared static background, kept for inspection.
    pub background: DenseTensor,
}

const CARRIER_SIZE: f64 = 3.0;
const CARGO_SIZE: f64 = 2.0;
const CARRIER_INTENSITY: f64 = 0.65;
const CARGO_INTENSITY: f64 = 1.0;

struct CycleScene {
    background: DenseTensor,
    x_min: f64,
    x_max: f64,
    row: f64,
    period: usize,
}

impl CycleScene {
    fn new(cfg: &CycleConfig, rng: &mut RngState) -> Self {
        // Static low-frequency texture: a tilted ramp with a seeded phase.
        let mut background = DenseTensor::zeros(1, cfg.height, cfg.width);
        let (pr, pc) = (rng.uniform(), rng.uniform());
        for r in 0..cfg.height {
            for c in 0..cfg.width {
                let ramp = 0.10 * (r as f64 / cfg.height as f64)
                    + 0.06 * (c as f64 / cfg.width as f64);
                let wave =
                    0.03 * (std::f64::consts::TAU * (r as f64 / 8.0 + pr)).sin()
                        * (std::f64::consts::TAU * (c as f64 / 8.0 + pc)).cos();
                *background.at_mut(0, r, c) = 0.08 + ramp + wave + 0.03;
            }
        }
        // Endpoints chosen so the sweep speed is exactly
        // (x_max - x_min) / (period / 2) = 1 pixel per path step for the
        // default 16-wide frame and period 24.
        CycleScene {
            background,
            x_min: 1.0,
            x_max: cfg.width as f64 - CARRIER_SIZE,
            row: cfg.height as f64 - CARRIER_SIZE - 1.0,
            period: cfg.period,
        }
    }

    /// Carrier x at path step `t`: triangle wave between the endpoints.
    fn carrier_x(&self, t: usize) -> f64 {
        let half = self.period / 2;
        let phase = t % self.period;
        let frac = if phase < half {
            phase as f64 / half as f64
        } else {
            (self.period - phase) as f64 / half as f64
        };
        self.x_min + frac * (self.x_max - self.x_min)
    }

    /// Render path step `t`. The cargo rides centered on top of the carrier;
    /// the optional anomaly repositions objects.
    fn render(&self, t: usize, anomaly: Option<AnomalyKind>) -> DenseTensor {
        let mut frame = self.background.clone();
        let carrier_x = self.carrier_x(t);
        let cargo_on_carrier = !matches!(anomaly, Some(AnomalyKind::SkipLoad));
        let row = match anomaly {
            Some(AnomalyKind::OffPath) => self.row - 4.0,
            _ => self.row,
        };
        draw_square(&mut frame, row, carrier_x, CARRIER_SIZE, CARRIER_INTENSITY);
        if cargo_on_carrier {
            let cx = carrier_x + (CARRIER_SIZE - CARGO_SIZE) / 2.0;
            draw_square(&mut frame, row - CARGO_SIZE, cx, CARGO_SIZE, CARGO_INTENSITY);
        } else {
            // Cargo abandoned at the left dock.
            let cx = self.x_min + (CARRIER_SIZE - CARGO_SIZE) / 2.0;
            draw_square(&mut frame, self.row - CARGO_SIZE, cx, CARGO_SIZE, CARGO_INTENSITY);
        }
        frame
    }

    fn sequence(
        &self,
        frames: usize,
        phase: usize,
        sample_every: usize,
        injector: Option<InjectorSpec>,
    ) -> LabeledSequence {
        let mut out = Vec::with_capacity(frames);
        let mut labels = vec![false; frames];
        // A stall freezes the path phase, so motion resumes smoothly from
        // the stalled position when the window ends.
        let mut t = phase;
        for f in 0..frames {
            let anomaly = injector.and_then(|inj| {
                if f >= inj.start && f < inj.end {
                    labels[f] = true;
                    Some(inj.kind)
                } else {
                    None
                }
            });
            out.push(self.render(t, anomaly));
            if !matches!(anomaly, Some(AnomalyKind::Stall)) {
                t += sample_every;
            }
        }
        LabeledSequence { frames: out, labels }
    }
}

/// Generate normal-only train/val splits and labeled test sequences.
pub fn generate_cycles(cfg: &CycleConfig) -> Result<CycleDataset> {
    if cfg.height < 10 || cfg.width < 10 {
        return Err(Error::data("cycle frames need at least 10x10 pixels".to_string()));
    }
    for inj in &cfg.injectors {
        if inj.end <= inj.start || inj.end > cfg.frames_test {
            return Err(Error::data(format!(
                "injector window {}..{} outside test length {}",
                inj.start, inj.end, cfg.frames_test
            )));
        }
    }
    let root = RngState::new(cfg.seed);
    let scene = CycleScene::new(cfg, &mut root.derive(0));
    let phase_for = |salt: u64, i: usize| -> usize {
        root.derive(salt * 7_000_003 + i as u64).below(cfg.period)
    };
    let normals = |count: usize, frames: usize, salt: u64| -> Vec<Sequence> {
        (0..count)
            .map(|i| {
                scene
                    .sequence(frames, phase_for(salt, i), cfg.sample_every, None)
                    .frames
            })
            .collect()
    };
    let train = normals(cfg.train_sequences, cfg.frames_train, 1);
    let val = normals(cfg.val_sequences, cfg.frames_train, 2);
    let mut test = Vec::with_capacity(cfg.test_sequences);
    let slots = cfg.injectors.len() + 1;
    for i in 0..cfg.test_sequences {
        let injector = if cfg.injectors.is_empty() {
            None
        } else {
            let slot = i % slots;
            cfg.injectors.get(slot).copied()
        };
        test.push(scene.sequence(
            cfg.frames_test,
            phase_for(3, i),
            cfg.sample_every,
            injector,
        ));
    }
    Ok(CycleDataset { train, val, test, background: scene.background.clone() })
}
