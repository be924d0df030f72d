//! On-disk formats: tensor-sequence datasets, model checkpoints, CSV and
//! JSON exports. All multi-byte values are little-endian; float payloads
//! are 32-bit.
//!
//! Dataset file (`SSTD`): magic `SSTD`, u32 version = 1, then u32 counts
//! `S, T, C, H, W`, then `S*T*C*H*W` f32 values in `(s, t, c, h, w)` order.
//!
//! Checkpoint file (`SSTM`): magic `SSTM`, u32 version = 1, u32 cell kind
//! (0 dense, 1 sparse), u32 layer count, u32 kernel size, u32 data
//! channels, then u32 hidden channels per layer, then the f32 weight
//! payload in declared order (per layer the four input-stream kernels then
//! the four hidden-stream kernels, then the head), then per layer the two
//! thresholds (written as zeros by dense models).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::cell::{CellKind, CellWeights, SequenceModel};
use crate::conv::ConvKernel;
use crate::data::Sequence;
use crate::tensor::DenseTensor;
use crate::train::TrainableModel;
use crate::{Error, Result};

const DATASET_MAGIC: &[u8; 4] = b"SSTD";
const CHECKPOINT_MAGIC: &[u8; 4] = b"SSTM";
const FORMAT_VERSION: u32 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f32(w: &mut impl Write, v: f32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f32(r: &mut impl Read) -> Result<f32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(f32::from_le_bytes(buf))
}

/// Write sequences (all with identical `(T, C, H, W)`) as one dataset file.
pub fn write_dataset(path: &Path, sequences: &[Sequence]) -> Result<()> {
    if sequences.is_empty() || sequences[0].is_empty() {
        return Err(Error::data("cannot write an empty dataset".to_string()));
    }
    let t = sequences[0].len();
    let (c, h, w) = sequences[0][0].dims();
    for seq in sequences {
        if seq.len() != t {
            return Err(Error::data("sequences have differing lengths".to_string()));
        }
        for frame in seq {
            if frame.dims() != (c, h, w) {
                return Err(Error::data("frames have differing dims".to_string()));
            }
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(DATASET_MAGIC)?;
    write_u32(&mut out, FORMAT_VERSION)?;
    for v in [sequences.len(), t, c, h, w] {
        write_u32(&mut out, v as u32)?;
    }
    for seq in sequences {
        for frame in seq {
            for &v in frame.values() {
                write_f32(&mut out, v as f32)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Read a dataset file back into sequences of 64-bit tensors.
pub fn read_dataset(path: &Path) -> Result<Vec<Sequence>> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::data(format!(
            "{} is not a dataset file (bad magic)",
            path.display()
        )));
    }
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        return Err(Error::data(format!("unsupported dataset version {version}")));
    }
    let s = read_u32(&mut input)? as usize;
    let t = read_u32(&mut input)? as usize;
    let c = read_u32(&mut input)? as usize;
    let h = read_u32(&mut input)? as usize;
    let w = read_u32(&mut input)? as usize;
    if s == 0 || t == 0 || c == 0 || h == 0 || w == 0 {
        return Err(Error::data("dataset header has zero dimension".to_string()));
    }
    let mut sequences = Vec::with_capacity(s);
    for _ in 0..s {
        let mut seq = Vec::with_capacity(t);
        for _ in 0..t {
            let mut values = Vec::with_capacity(c * h * w);
            for _ in 0..c * h * w {
                values.push(read_f32(&mut input)? as f64);
            }
            seq.push(DenseTensor::from_values(c, h, w, values)?);
        }
        sequences.push(seq);
    }
    Ok(sequences)
}

fn kind_code(kind: CellKind) -> u32 {
    match kind {
        CellKind::Dense => 0,
        CellKind::Sparsest => 1,
    }
}

/// Serialize a model checkpoint (32-bit weights, declared order).
pub fn write_checkpoint(path: &Path, model: &TrainableModel) -> Result<()> {
    let layout = &model.layout;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(CHECKPOINT_MAGIC)?;
    write_u32(&mut out, FORMAT_VERSION)?;
    write_u32(&mut out, kind_code(layout.kind))?;
    write_u32(&mut out, layout.layers.len() as u32)?;
    write_u32(&mut out, layout.kernel_size as u32)?;
    write_u32(&mut out, layout.data_channels as u32)?;
    for &h in &layout.hidden {
        write_u32(&mut out, h as u32)?;
    }
    for lp in &layout.layers {
        for id in lp.wx.iter().chain(lp.wh.iter()) {
            for &v in model.store.value(*id).flat() {
                write_f32(&mut out, v as f32)?;
            }
        }
    }
    for &v in model.store.value(layout.head).flat() {
        write_f32(&mut out, v as f32)?;
    }
    for lp in &layout.layers {
        write_f32(&mut out, model.store.value(lp.theta_x).as_scalar()? as f32)?;
        write_f32(&mut out, model.store.value(lp.theta_h).as_scalar()? as f32)?;
    }
    out.flush()?;
    Ok(())
}

/// Load a checkpoint back into a trainable model.
pub fn read_checkpoint(path: &Path) -> Result<TrainableModel> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::data(format!(
            "{} is not a checkpoint file (bad magic)",
            path.display()
        )));
    }
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        return Err(Error::data(format!("unsupported checkpoint version {version}")));
    }
    let kind = match read_u32(&mut input)? {
        0 => CellKind::Dense,
        1 => CellKind::Sparsest,
        k => return Err(Error::data(format!("unknown cell kind {k}"))),
    };
    let n_layers = read_u32(&mut input)? as usize;
    let kernel_size = read_u32(&mut input)? as usize;
    let data_channels = read_u32(&mut input)? as usize;
    if n_layers == 0 || kernel_size == 0 || data_channels == 0 {
        return Err(Error::data("checkpoint header has zero field".to_string()));
    }
    let mut hidden = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        hidden.push(read_u32(&mut input)? as usize);
    }
    let read_kernel =
        |input: &mut BufReader<File>, c_out: usize, c_in: usize, k: usize| -> Result<ConvKernel> {
            let mut weights = Vec::with_capacity(c_out * c_in * k * k);
            for _ in 0..c_out * c_in * k * k {
                weights.push(read_f32(input)? as f64);
            }
            ConvKernel::new(c_out, c_in, k, weights)
        };
    let mut cells = Vec::with_capacity(n_layers);
    let mut c_in = data_channels;
    for &h in &hidden {
        let wx = [
            read_kernel(&mut input, h, c_in, kernel_size)?,
            read_kernel(&mut input, h, c_in, kernel_size)?,
            read_kernel(&mut input, h, c_in, kernel_size)?,
            read_kernel(&mut input, h, c_in, kernel_size)?,
        ];
        let wh = [
            read_kernel(&mut input, h, h, kernel_size)?,
            read_kernel(&mut input, h, h, kernel_size)?,
            read_kernel(&mut input, h, h, kernel_size)?,
            read_kernel(&mut input, h, h, kernel_size)?,
        ];
        cells.push(CellWeights::new(wx, wh)?);
        c_in = h;
    }
    let head = read_kernel(&mut input, data_channels, c_in, 1)?;
    for cell in cells.iter_mut() {
        cell.theta_x = read_f32(&mut input)? as f64;
        cell.theta_h = read_f32(&mut input)? as f64;
        if cell.theta_x < 0.0 || cell.theta_h < 0.0 {
            return Err(Error::data("negative threshold in checkpoint".to_string()));
        }
    }
    let model = SequenceModel::new(kind, cells, head)?;
    Ok(TrainableModel::from_sequence_model(&model))
}

/// Write a CSV with a header row. Floats use Rust's shortest round-trip
/// formatting.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::data(format!(
                "csv row has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Pretty-printed JSON document.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// JSON-lines: one compact record per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn tmpdir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "sparsest-io-test-{}-{:x}",
            std::process::id(),
            RngState::new(std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .subsec_nanos() as u64)
            .next_u64()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn dataset_roundtrip_is_byte_identical() {
        let dir = tmpdir();
        let cfg = crate::data::BlobConfig {
            train_sequences: 3,
            val_sequences: 1,
            test_sequences: 1,
            frames: 4,
            height: 6,
            width: 6,
            ..Default::default()
        };
        let d = crate::data::generate_blobs(&cfg).unwrap();
        let p1 = dir.join("a.sstd");
        let p2 = dir.join("b.sstd");
        write_dataset(&p1, &d.train).unwrap();
        let back = read_dataset(&p1).unwrap();
        write_dataset(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn bad_magic_and_version_rejected() {
        let dir = tmpdir();
        let p = dir.join("bad.sstd");
        std::fs::write(&p, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::Data(_))));
        let mut bytes = b"SSTD".to_vec();
        bytes.extend(9u32.to_le_bytes());
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::Data(_))));
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn checkpoint_roundtrip_preserves_values() {
        let dir = tmpdir();
        let mut rng = RngState::new(91);
        let mut model =
            TrainableModel::random(CellKind::Sparsest, 1, &[3, 2], 3, &mut rng).unwrap();
        let lp = model.layout.layers[0].clone();
        *model.store.param_mut(lp.theta_x).value.flat_mut().first_mut().unwrap() = 0.125;
        let p1 = dir.join("a.sstm");
        let p2 = dir.join("b.sstm");
        write_checkpoint(&p1, &model).unwrap();
        let back = read_checkpoint(&p1).unwrap();
        assert_eq!(back.layout.hidden, vec![3, 2]);
        assert_eq!(back.layout.kind, CellKind::Sparsest);
        assert_eq!(
            back.store
                .value(back.layout.layers[0].theta_x)
                .as_scalar()
                .unwrap(),
            0.125
        );
        // Write-after-read is byte identical (f32 payload is stable).
        write_checkpoint(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        // And the values survive at 32-bit precision.
        for (a, b) in model.store.snapshot_f32().iter().zip(back.store.snapshot_f32()) {
            assert_eq!(*a, b);
        }
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn csv_rows_must_match_header() {
        let dir = tmpdir();
        let p = dir.join("t.csv");
        let rows = vec![vec!["1".to_string(), "2".to_string()]];
        write_csv(&p, &["a", "b"], &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("a,b\n"));
        assert!(write_csv(&p, &["a"], &rows).is_err());
        std::fs::remove_dir_all(dir).unwrap();
    }
}
