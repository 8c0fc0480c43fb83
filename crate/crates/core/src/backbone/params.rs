use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BackboneConfig, Implementation};
use crate::datamodel::sidecar::{decode_framed, encode_framed, f32s_to_le, le_to_f32s};
use crate::error::{ensure_arg, Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Localizer,
    Answerer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamArray {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub values: Vec<f64>,
}

impl ParamArray {
    fn zeros(name: &str, shape: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
            values: vec![0.0; shape.iter().product()],
        }
    }
}

/// Trainable adapter weights. Everything else in a backbone is frozen.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterParams {
    pub role: Role,
    /// Number of optimizer updates applied since initialization.
    pub version: u64,
    arrays: Vec<ParamArray>,
}

pub(crate) const W_IN: usize = 0;
pub(crate) const B_IN: usize = 1;
pub(crate) const W_OUT: usize = 2;
pub(crate) const B_OUT: usize = 3;

impl AdapterParams {
    /// Seeded initialization. The synthetic oracle has no trainable arrays.
    pub fn init(config: &BackboneConfig, role: Role, seed: u64) -> Self {
        let mut params = Self::zeros(config, role);
        if config.implementation == Implementation::TrainableToy {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ role_salt(role));
            let fan_in = [config.feature_dim, 1, config.hidden_dim, 1];
            for (idx, array) in params.arrays.iter_mut().enumerate() {
                if idx == B_IN || idx == B_OUT {
                    continue;
                }
                let std = (1.0 / fan_in[idx] as f64).sqrt();
                let dist = Normal::new(0.0, std).expect("positive std");
                array.values.iter_mut().for_each(|v| *v = f64::from(dist.sample(&mut rng) as f32));
            }
        }
        params
    }

    pub fn zeros(config: &BackboneConfig, role: Role) -> Self {
        let arrays = match config.implementation {
            Implementation::SyntheticOracle => Vec::new(),
            Implementation::TrainableToy => vec![
                ParamArray::zeros("w_in", &[config.hidden_dim, config.feature_dim]),
                ParamArray::zeros("b_in", &[config.hidden_dim]),
                ParamArray::zeros("w_out", &[config.query_dim, config.hidden_dim]),
                ParamArray::zeros("b_out", &[config.query_dim]),
            ],
        };
        Self {
            role,
            version: 0,
            arrays,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            role: self.role,
            version: 0,
            arrays: self
                .arrays
                .iter()
                .map(|a| ParamArray::zeros(&a.name, &a.shape))
                .collect(),
        }
    }

    pub fn arrays(&self) -> &[ParamArray] {
        &self.arrays
    }

    pub fn get(&self, name: &str) -> Option<&ParamArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub(crate) fn array(&self, idx: usize) -> &[f64] {
        &self.arrays[idx].values
    }

    pub(crate) fn array_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.arrays[idx].values
    }

    pub fn num_values(&self) -> usize {
        self.arrays.iter().map(|a| a.values.len()).sum()
    }

    /// All values in array order.
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.arrays.iter().flat_map(|a| a.values.iter().copied())
    }

    pub fn flat_get(&self, mut index: usize) -> f64 {
        for a in &self.arrays {
            if index < a.values.len() {
                return a.values[index];
            }
            index -= a.values.len();
        }
        panic!("flat parameter index out of range")
    }

    pub fn flat_set(&mut self, mut index: usize, value: f64) {
        for a in &mut self.arrays {
            if index < a.values.len() {
                a.values[index] = value;
                return;
            }
            index -= a.values.len();
        }
        panic!("flat parameter index out of range")
    }

    pub fn same_shapes(&self, other: &Self) -> bool {
        self.arrays.len() == other.arrays.len()
            && self
                .arrays
                .iter()
                .zip(&other.arrays)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    /// `self + scale * other`, element-wise.
    pub fn add_scaled(&self, other: &Self, scale: f64) -> Result<Self> {
        ensure_arg!(self.same_shapes(other), "parameter shapes differ");
        let mut out = self.clone();
        for (a, b) in out.arrays.iter_mut().zip(&other.arrays) {
            a.values
                .iter_mut()
                .zip(&b.values)
                .for_each(|(x, y)| *x += scale * y);
        }
        Ok(out)
    }

    pub(crate) fn scale_in_place(&mut self, scale: f64) {
        for a in &mut self.arrays {
            a.values.iter_mut().for_each(|x| *x *= scale);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.flat().all(f64::is_finite)
    }

    /// Rounds every value to the nearest `f32`, making checkpoint storage
    /// lossless.
    pub fn rounded_to_f32(&self) -> Self {
        let mut out = self.clone();
        for a in &mut out.arrays {
            a.values.iter_mut().for_each(|x| *x = f64::from(*x as f32));
        }
        out
    }

    /// Little-endian `f32` bytes of every array in order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.num_values() * 4);
        f32s_to_le(self.flat().map(|x| x as f32), &mut out);
        out
    }

    pub fn save(&self, path: &Path, config: &BackboneConfig) -> Result<()> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_FORMAT_VERSION,
            role: self.role,
            update_count: self.version,
            shapes: self.arrays.clone(),
            config: config.clone(),
        };
        let bytes = encode_framed(&header, &self.to_le_bytes())?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, BackboneConfig)> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (header, payload) = decode_framed(&bytes)?;
        let header: CheckpointHeader = serde_json::from_slice(header)
            .map_err(|e| Error::Format(format!("{}: bad checkpoint header: {e}", path.display())))?;
        if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported checkpoint {} v{}",
                path.display(),
                header.format,
                header.version
            )));
        }
        header.config.validate()?;
        let expected = Self::zeros(&header.config, header.role);
        let mut params = Self {
            role: header.role,
            version: header.update_count,
            arrays: header.shapes,
        };
        if !params.same_shapes(&expected) {
            return Err(Error::Format(format!(
                "{}: array shapes do not match the backbone config",
                path.display()
            )));
        }
        let values = le_to_f32s(payload);
        if values.len() != expected.num_values() || payload.len() % 4 != 0 {
            return Err(Error::Format(format!(
                "{}: payload holds {} values, header declares {}",
                path.display(),
                values.len(),
                expected.num_values()
            )));
        }
        let mut it = values.into_iter();
        for a in &mut params.arrays {
            a.values = it.by_ref().take(a.shape.iter().product()).map(f64::from).collect();
        }
        if !params.is_finite() {
            return Err(Error::Format(format!("{}: non-finite parameters", path.display())));
        }
        Ok((params, header.config))
    }
}

const CHECKPOINT_FORMAT: &str = "vidchain-adapter";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    role: Role,
    update_count: u64,
    shapes: Vec<ParamArray>,
    config: BackboneConfig,
}

fn role_salt(role: Role) -> u64 {
    match role {
        Role::Localizer => 0x10c4_11e4,
        Role::Answerer => 0xa45e_e4e4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_lossless_after_rounding() {
        let cfg = BackboneConfig::default();
        let p = AdapterParams::init(&cfg, Role::Answerer, 3).rounded_to_f32();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        p.save(&path, &cfg).unwrap();
        let (back, back_cfg) = AdapterParams::load(&path).unwrap();
        assert_eq!(back, p);
        assert_eq!(back_cfg, cfg);
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let cfg = BackboneConfig::default();
        let p = AdapterParams::init(&cfg, Role::Localizer, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.ckpt");
        p.save(&path, &cfg).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(AdapterParams::load(&path), Err(Error::Format(_))));
    }

    #[test]
    fn add_scaled_checks_shapes() {
        let cfg = BackboneConfig::default();
        let a = AdapterParams::init(&cfg, Role::Localizer, 0);
        let small = BackboneConfig {
            hidden_dim: 4,
            ..cfg.clone()
        };
        let b = AdapterParams::init(&small, Role::Localizer, 0);
        assert!(a.add_scaled(&b, 1.0).is_err());
        let twice = a.add_scaled(&a, 1.0).unwrap();
        assert_eq!(twice.flat_get(5), 2.0 * a.flat_get(5));
    }

    #[test]
    fn init_is_seeded() {
        let cfg = BackboneConfig::default();
        let a = AdapterParams::init(&cfg, Role::Localizer, 1);
        assert_eq!(a, AdapterParams::init(&cfg, Role::Localizer, 1));
        assert_ne!(a, AdapterParams::init(&cfg, Role::Localizer, 2));
        assert_ne!(a.flat().collect::<Vec<_>>(), AdapterParams::init(&cfg, Role::Answerer, 1).flat().collect::<Vec<_>>());
    }
}
