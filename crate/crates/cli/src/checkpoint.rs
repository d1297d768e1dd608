//! Binary checkpoint of a trained ensemble.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "DCEN" u32 version u64 seed u8 combiner f64×3 mean f64×3 std u32 members
//! per member:
//!   u8 id  u32×3 input shape  u32 classes  f64 weight
//!   u32 layers, each: u8 tag + fields (u32, dropout rate f64)
//!   u32 tensors, each: u32 rank, u32×rank dims, u64 count, f32×count
//! ```

use std::path::Path;

use wbc_core::data::StandardizationStats;
use wbc_core::ensemble::{CombinerMode, EnsembleModel, Member, MemberConfig, MemberId};
use wbc_core::nn::{ComputeGraph, LayerSpec};

use crate::error::{CliError, Result};
use crate::fsutil;

pub const MAGIC: &[u8; 4] = b"DCEN";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("dimension fits in u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            CliError::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.array::<1>(what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.array(what)?) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }
}

fn combiner_tag(c: CombinerMode) -> u8 {
    match c {
        CombinerMode::Average => 0,
        CombinerMode::Weighted => 1,
        CombinerMode::MaxConfidence => 2,
    }
}

fn write_layer(w: &mut Writer, spec: &LayerSpec) {
    match *spec {
        LayerSpec::Conv2d {
            filters,
            kernel,
            stride,
            padding,
        } => {
            w.u8(0);
            for v in [filters, kernel, stride, padding] {
                w.u32(v);
            }
        }
        LayerSpec::MaxPool2d { window, stride } => {
            w.u8(1);
            w.u32(window);
            w.u32(stride);
        }
        LayerSpec::Relu => w.u8(2),
        LayerSpec::Dense { units } => {
            w.u8(3);
            w.u32(units);
        }
        LayerSpec::Dropout { rate } => {
            w.u8(4);
            w.f64(rate);
        }
        LayerSpec::Softmax => w.u8(5),
    }
}

fn read_layer(r: &mut Reader) -> Result<LayerSpec> {
    Ok(match r.u8("layer tag")? {
        0 => LayerSpec::Conv2d {
            filters: r.u32("conv filters")?,
            kernel: r.u32("conv kernel")?,
            stride: r.u32("conv stride")?,
            padding: r.u32("conv padding")?,
        },
        1 => LayerSpec::MaxPool2d {
            window: r.u32("pool window")?,
            stride: r.u32("pool stride")?,
        },
        2 => LayerSpec::Relu,
        3 => LayerSpec::Dense {
            units: r.u32("dense units")?,
        },
        4 => LayerSpec::Dropout {
            rate: r.f64("dropout rate")?,
        },
        5 => LayerSpec::Softmax,
        tag => return Err(CliError::Checkpoint(format!("unknown layer tag {tag}"))),
    })
}

pub fn to_bytes(model: &EnsembleModel) -> Vec<u8> {
    let mut w = Writer(MAGIC.to_vec());
    w.u32(VERSION as usize);
    w.u64(model.seed);
    w.u8(combiner_tag(model.combiner));
    for v in model.stats.mean.iter().chain(&model.stats.std) {
        w.f64(*v);
    }
    w.u32(model.members.len());
    for (member, &weight) in model.members.iter().zip(&model.weights) {
        let c = &member.config;
        w.u8(c.id.index() as u8);
        for d in c.input_shape {
            w.u32(d);
        }
        w.u32(c.classes);
        w.f64(weight);
        w.u32(c.layers.len());
        for spec in &c.layers {
            write_layer(&mut w, spec);
        }
        let params: Vec<_> = member.graph.params().collect();
        w.u32(params.len());
        for p in params {
            w.u32(p.shape().len());
            for &d in p.shape() {
                w.u32(d);
            }
            w.u64(p.numel() as u64);
            for v in p.values() {
                w.0.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    w.0
}

pub fn from_bytes(bytes: &[u8]) -> Result<EnsembleModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(CliError::Checkpoint("not a DCEN checkpoint".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(CliError::Checkpoint(format!(
            "format version {version}, this build reads version {VERSION}"
        )));
    }
    let seed = r.u64("seed")?;
    let combiner = match r.u8("combiner")? {
        0 => CombinerMode::Average,
        1 => CombinerMode::Weighted,
        2 => CombinerMode::MaxConfidence,
        tag => return Err(CliError::Checkpoint(format!("unknown combiner tag {tag}"))),
    };
    let mut stats = StandardizationStats::identity();
    for v in stats.mean.iter_mut().chain(stats.std.iter_mut()) {
        *v = r.f64("standardization stats")?;
    }
    let count = r.u32("member count")?;
    let mut members = Vec::with_capacity(count.min(16));
    let mut weights = Vec::with_capacity(count.min(16));
    for m in 0..count {
        let id = match r.u8("member id")? {
            0 => MemberId::A,
            1 => MemberId::B,
            2 => MemberId::C,
            tag => return Err(CliError::Checkpoint(format!("unknown member id {tag}"))),
        };
        let input_shape = [r.u32("input shape")?, r.u32("input shape")?, r.u32("input shape")?];
        let classes = r.u32("class count")?;
        weights.push(r.f64("member weight")?);
        let n_layers = r.u32("layer count")?;
        let layers = (0..n_layers)
            .map(|_| read_layer(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let mut graph = ComputeGraph::<f32>::zeroed(&input_shape, &layers)
            .map_err(|e| CliError::Checkpoint(format!("member {m}: {e}")))?;
        let expected: Vec<Vec<usize>> = graph.params().map(|p| p.shape().to_vec()).collect();
        let n_tensors = r.u32("tensor count")?;
        if n_tensors != expected.len() {
            return Err(CliError::Checkpoint(format!(
                "member {m}: {n_tensors} tensors, architecture needs {}",
                expected.len()
            )));
        }
        let mut values = Vec::with_capacity(n_tensors);
        for want in &expected {
            let rank = r.u32("tensor rank")?;
            let shape = (0..rank)
                .map(|_| r.u32("tensor shape"))
                .collect::<Result<Vec<_>>>()?;
            if &shape != want {
                return Err(CliError::Checkpoint(format!(
                    "member {m}: tensor shape {shape:?}, architecture needs {want:?}"
                )));
            }
            let n = r.u64("tensor length")?;
            if n != shape.iter().product::<usize>() as u64 {
                return Err(CliError::Checkpoint(format!(
                    "member {m}: tensor of shape {shape:?} declares {n} values"
                )));
            }
            let raw = r.take(n as usize * 4, "tensor data")?;
            values.push(
                raw.chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                    .collect(),
            );
        }
        graph
            .set_params(values)
            .map_err(|e| CliError::Checkpoint(format!("member {m}: {e}")))?;
        members.push(Member {
            config: MemberConfig {
                id,
                layers,
                input_shape,
                classes,
            },
            graph,
        });
    }
    if r.pos != bytes.len() {
        return Err(CliError::Checkpoint(format!(
            "{} trailing bytes after the last member",
            bytes.len() - r.pos
        )));
    }
    if combiner == CombinerMode::Weighted {
        wbc_core::ensemble::validate_weights(&weights, members.len())
            .map_err(|e| CliError::Checkpoint(e.to_string()))?;
    }
    Ok(EnsembleModel {
        members,
        stats,
        combiner,
        weights,
        seed,
    })
}

pub fn save(model: &EnsembleModel, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, &to_bytes(model))
}

pub fn load(path: &Path) -> Result<EnsembleModel> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    from_bytes(&bytes).map_err(|e| match e {
        CliError::Checkpoint(m) => CliError::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}
