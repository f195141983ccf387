//! A trained (or freshly initialised) flow model and its on-disk checkpoint.
//!
//! Checkpoint byte layout, all integers little-endian:
//!
//! | bytes        | content                                            |
//! |--------------|----------------------------------------------------|
//! | `0..8`       | magic `TPCFLOW1`                                   |
//! | `8..16`      | `u64` header length `H`                            |
//! | `16..16+H`   | UTF-8 JSON header (arch, pairing, seed, step, layout) |
//! | rest         | `f64` weights in layout order, 8 bytes each        |

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::pairing::PairingSpec;
use crate::params::{ParamVector, Segment};
use crate::velocity::{init_params, Arch, VelocityNet};

pub const MAGIC: &[u8; 8] = b"TPCFLOW1";

/// Velocity network plus pairing parameters in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    arch: Arch,
    pairing: PairingSpec,
    params: ParamVector,
    net: VelocityNet,
}

impl FlowModel {
    pub fn init(arch: Arch, pairing: PairingSpec, seed: u64) -> Result<Self> {
        pairing.validate()?;
        let velocity = init_params(&arch, seed)?;
        let mut extra = ParamVector::zeros(&pairing.segments())?;
        pairing.init(&mut extra)?;
        Self::from_params(arch, pairing, velocity.concat(&extra)?)
    }

    pub fn from_params(arch: Arch, pairing: PairingSpec, params: ParamVector) -> Result<Self> {
        let net = VelocityNet::new(arch, &params)?;
        for (name, len) in pairing.segments() {
            match params.find(&name) {
                Some(s) if s.len == len => {}
                _ => return Err(Error::Config(format!("pairing segment `{name}` missing or mis-sized"))),
            }
        }
        Ok(Self {
            arch,
            pairing,
            params,
            net,
        })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn pairing(&self) -> &PairingSpec {
        &self.pairing
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn net(&self) -> &VelocityNet {
        &self.net
    }
}

impl VelocityField for FlowModel {
    fn dim(&self) -> usize {
        self.arch.dim
    }

    fn velocity(&self, x: &[f64], t: f64) -> Vec<f64> {
        // Integrators only query t inside [0, 1]; clamp rounding spill.
        let t = t.clamp(0.0, 1.0);
        match self.net.forward_batch(self.params.values(), x, &[t]) {
            Ok(tape) => tape.output().to_vec(),
            Err(_) => vec![f64::NAN; self.arch.dim],
        }
    }

    fn velocity_and_divergence(&self, x: &[f64], t: f64) -> (Vec<f64>, f64) {
        self.net
            .velocity_and_divergence(self.params.values(), x, t.clamp(0.0, 1.0))
    }

    fn velocity_batch(&self, xs: &[f64], ts: &[f64]) -> Vec<f64> {
        let ts: Vec<f64> = ts.iter().map(|t| t.clamp(0.0, 1.0)).collect();
        match self.net.forward_batch(self.params.values(), xs, &ts) {
            Ok(tape) => tape.output().to_vec(),
            Err(_) => vec![f64::NAN; xs.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: FlowModel,
    pub seed: u64,
    pub step: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    arch: Arch,
    pairing: PairingSpec,
    seed: u64,
    step: u64,
    layout: Vec<Segment>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            format_version: 1,
            arch: self.model.arch,
            pairing: self.model.pairing,
            seed: self.seed,
            step: self.step,
            layout: self.model.params.layout().to_vec(),
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + 8 * self.model.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in self.model.params.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Data(format!("malformed checkpoint: {m}"));
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let blob = &bytes[16 + hlen..];
        if !blob.len().is_multiple_of(8) {
            return Err(bad("weight blob is not a whole number of f64"));
        }
        let values = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let params = ParamVector::from_parts(values, header.layout)?;
        Ok(Self {
            model: FlowModel::from_params(header.arch, header.pairing, params)?,
            seed: header.seed,
            step: header.step,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
