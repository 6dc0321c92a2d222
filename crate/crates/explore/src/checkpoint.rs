//! Binary checkpoints for networks and network ensembles.
//!
//! All integers are little-endian `u32`/`u64`, all reals little-endian `f64`.
//!
//! Network block:
//!
//! ```text
//! magic      4 bytes  "MLP1"
//! activation u8       0 tanh, 1 swish
//! head       u8       0 linear, 1 categorical, 2 gaussian-diag
//! logvar     f64 f64  log-variance bounds (min, max)
//! layers     u32      number of widths, then that many u32 widths
//! params     u64      parameter count, then that many f64
//! ```
//!
//! Ensemble file:
//!
//! ```text
//! magic      4 bytes  "ENS1"
//! states     u8 u64   0 discrete (count) | 1 continuous (dimension)
//! actions    u8 u64   0 discrete (count) | 1 continuous (dimension),
//!                     followed for continuous by low[dim] and high[dim]
//! stats      u8       0 none | 1 present: state, action, delta normalizers,
//!                     each u64 dimension then mean[dim] and std[dim]
//! members    u32      member count, then one network block per member
//! ```
//!
//! Optimizer state is not stored; loaded members get a fresh optimizer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use max_core::models::{Member, ModelEnsemble, NetworkModel, NormStats, Normalizer};
use max_core::netcore::{Activation, HeadKind, LogVarBounds, Mlp, MlpSpec, Optimizer, OptimizerConfig};
use max_core::{ActionSpace, StateSpace};

use crate::HarnessError;

const MLP_MAGIC: &[u8; 4] = b"MLP1";
const ENSEMBLE_MAGIC: &[u8; 4] = b"ENS1";
/// Guards against allocating absurd buffers from a corrupt length field.
const MAX_LEN: u64 = 1 << 32;

fn format_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Format(msg.into())
}

fn put_u8(w: &mut impl Write, x: u8) -> Result<(), HarnessError> {
    Ok(w.write_all(&[x])?)
}

fn put_u32(w: &mut impl Write, x: u32) -> Result<(), HarnessError> {
    Ok(w.write_all(&x.to_le_bytes())?)
}

fn put_u64(w: &mut impl Write, x: u64) -> Result<(), HarnessError> {
    Ok(w.write_all(&x.to_le_bytes())?)
}

fn put_f64s(w: &mut impl Write, xs: &[f64]) -> Result<(), HarnessError> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn get<const N: usize>(r: &mut impl Read) -> Result<[u8; N], HarnessError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn get_u8(r: &mut impl Read) -> Result<u8, HarnessError> {
    Ok(get::<1>(r)?[0])
}

fn get_u32(r: &mut impl Read) -> Result<u32, HarnessError> {
    Ok(u32::from_le_bytes(get(r)?))
}

fn get_len(r: &mut impl Read) -> Result<usize, HarnessError> {
    let n = u64::from_le_bytes(get(r)?);
    if n > MAX_LEN {
        return Err(format_err(format!("length field {n} is implausibly large")));
    }
    Ok(n as usize)
}

fn get_f64(r: &mut impl Read) -> Result<f64, HarnessError> {
    Ok(f64::from_le_bytes(get(r)?))
}

fn get_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>, HarnessError> {
    (0..n).map(|_| get_f64(r)).collect()
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<(), HarnessError> {
    let got: [u8; 4] = get(r)?;
    if &got != magic {
        return Err(format_err(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

pub fn write_mlp(net: &Mlp, w: &mut impl Write) -> Result<(), HarnessError> {
    let spec = net.spec();
    w.write_all(MLP_MAGIC)?;
    put_u8(w, match spec.activation {
        Activation::Tanh => 0,
        Activation::Swish => 1,
    })?;
    put_u8(w, match spec.head {
        HeadKind::Linear => 0,
        HeadKind::Categorical => 1,
        HeadKind::GaussianDiag => 2,
    })?;
    put_f64s(w, &[spec.log_var_bounds.min, spec.log_var_bounds.max])?;
    put_u32(w, spec.widths.len() as u32)?;
    for &width in &spec.widths {
        put_u32(w, width as u32)?;
    }
    put_u64(w, net.num_params() as u64)?;
    put_f64s(w, net.params())
}

pub fn read_mlp(r: &mut impl Read) -> Result<Mlp, HarnessError> {
    expect_magic(r, MLP_MAGIC)?;
    let activation = match get_u8(r)? {
        0 => Activation::Tanh,
        1 => Activation::Swish,
        k => return Err(format_err(format!("unknown activation code {k}"))),
    };
    let head = match get_u8(r)? {
        0 => HeadKind::Linear,
        1 => HeadKind::Categorical,
        2 => HeadKind::GaussianDiag,
        k => return Err(format_err(format!("unknown head code {k}"))),
    };
    let bounds = LogVarBounds { min: get_f64(r)?, max: get_f64(r)? };
    let n_widths = get_u32(r)? as usize;
    if n_widths > 1024 {
        return Err(format_err(format!("{n_widths} layers is implausible")));
    }
    let widths = (0..n_widths)
        .map(|_| get_u32(r).map(|x| x as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let n_params = get_len(r)?;
    let params = get_f64s(r, n_params)?;
    let mut spec = MlpSpec::new(widths, activation, head);
    spec.log_var_bounds = bounds;
    Ok(Mlp::from_params(spec, params)?)
}

fn write_normalizer(w: &mut impl Write, n: &Normalizer) -> Result<(), HarnessError> {
    put_u64(w, n.mean.len() as u64)?;
    put_f64s(w, &n.mean)?;
    put_f64s(w, &n.std)
}

fn read_normalizer(r: &mut impl Read) -> Result<Normalizer, HarnessError> {
    let dim = get_len(r)?;
    Ok(Normalizer { mean: get_f64s(r, dim)?, std: get_f64s(r, dim)? })
}

pub fn write_ensemble(ens: &ModelEnsemble, w: &mut impl Write) -> Result<(), HarnessError> {
    w.write_all(ENSEMBLE_MAGIC)?;
    match ens.state_space() {
        StateSpace::Discrete { n } => {
            put_u8(w, 0)?;
            put_u64(w, *n as u64)?;
        }
        StateSpace::Continuous { dim } => {
            put_u8(w, 1)?;
            put_u64(w, *dim as u64)?;
        }
    }
    match ens.action_space() {
        ActionSpace::Discrete { n } => {
            put_u8(w, 0)?;
            put_u64(w, *n as u64)?;
        }
        ActionSpace::Continuous { low, high } => {
            put_u8(w, 1)?;
            put_u64(w, low.len() as u64)?;
            put_f64s(w, low)?;
            put_f64s(w, high)?;
        }
    }
    match ens.stats() {
        None => put_u8(w, 0)?,
        Some(stats) => {
            put_u8(w, 1)?;
            write_normalizer(w, &stats.state)?;
            write_normalizer(w, &stats.action)?;
            write_normalizer(w, &stats.delta)?;
        }
    }
    put_u32(w, ens.len() as u32)?;
    for (i, member) in ens.members().iter().enumerate() {
        match member {
            Member::Network(m) => write_mlp(&m.net, w)?,
            Member::Tabular(_) => {
                return Err(format_err(format!(
                    "member {i} is a count table; only network members are checkpointed"
                )))
            }
        }
    }
    Ok(())
}

/// Reads an ensemble and marks it trained. Members get fresh optimizers
/// built from `optimizer`.
pub fn read_ensemble(r: &mut impl Read, optimizer: OptimizerConfig) -> Result<ModelEnsemble, HarnessError> {
    expect_magic(r, ENSEMBLE_MAGIC)?;
    let state_space = match get_u8(r)? {
        0 => StateSpace::Discrete { n: get_len(r)? },
        1 => StateSpace::Continuous { dim: get_len(r)? },
        k => return Err(format_err(format!("unknown state space code {k}"))),
    };
    let action_space = match get_u8(r)? {
        0 => ActionSpace::Discrete { n: get_len(r)? },
        1 => {
            let dim = get_len(r)?;
            ActionSpace::Continuous { low: get_f64s(r, dim)?, high: get_f64s(r, dim)? }
        }
        k => return Err(format_err(format!("unknown action space code {k}"))),
    };
    let stats = match get_u8(r)? {
        0 => None,
        1 => Some(NormStats {
            state: read_normalizer(r)?,
            action: read_normalizer(r)?,
            delta: read_normalizer(r)?,
        }),
        k => return Err(format_err(format!("unknown statistics flag {k}"))),
    };
    let n = get_u32(r)? as usize;
    let mut members = Vec::with_capacity(n.min(1024));
    let mut bounds = LogVarBounds::default();
    for _ in 0..n {
        let net = read_mlp(r)?;
        bounds = net.spec().log_var_bounds;
        let opt = Optimizer::new(optimizer, net.num_params())?;
        members.push(Member::Network(NetworkModel { net, opt }));
    }
    let mut ens = ModelEnsemble::from_members(state_space, action_space, members, bounds)?;
    ens.assume_trained(stats)?;
    Ok(ens)
}

pub fn save_ensemble(ens: &ModelEnsemble, path: &Path) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ensemble(ens, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_ensemble(path: &Path, optimizer: OptimizerConfig) -> Result<ModelEnsemble, HarnessError> {
    read_ensemble(&mut BufReader::new(File::open(path)?), optimizer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use max_core::envs::{ChainConfig, ChainEnv, Environment};
    use max_core::models::{EnsembleConfig, History, TrainConfig, Transition};
    use max_core::rng::SeedTree;
    use max_core::{Action, State};

    fn trained_chain_ensemble() -> ModelEnsemble {
        let mut env = ChainEnv::new(ChainConfig::new(6), 3).unwrap();
        let mut cfg = EnsembleConfig::discrete_default();
        cfg.member = max_core::models::MemberKind::Network { hidden: vec![8], activation: Activation::Tanh };
        let mut ens = ModelEnsemble::new(env.state_space(), env.action_space(), &cfg, SeedTree::new(1)).unwrap();
        let mut h = History::new();
        let mut s = env.reset();
        for t in 0..10 {
            let a = Action::Discrete(t % 2);
            let st = env.step(&a).unwrap();
            h.push(Transition::new(s, a, st.state.clone()));
            s = st.state;
        }
        ens.train(&h, &TrainConfig { epochs: 5, ..TrainConfig::default() }).unwrap();
        ens
    }

    #[test]
    fn mlp_round_trips_bit_for_bit() {
        let mut rng = SeedTree::new(4).rng("net");
        let mut spec = MlpSpec::new(vec![3, 5, 4], Activation::Swish, HeadKind::GaussianDiag);
        spec.log_var_bounds = LogVarBounds { min: -7.0, max: 0.5 };
        let net = Mlp::new(spec, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_mlp(&net, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"MLP1");
        assert_eq!(read_mlp(&mut buf.as_slice()).unwrap(), net);
    }

    #[test]
    fn ensemble_predictions_survive_a_round_trip() {
        let ens = trained_chain_ensemble();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ens.bin");
        save_ensemble(&ens, &path).unwrap();
        let back = load_ensemble(&path, OptimizerConfig::adam(1e-3)).unwrap();
        for s in 0..6 {
            for a in 0..2 {
                let (s, a) = (State::Discrete(s), Action::Discrete(a));
                assert_eq!(ens.predict_all(&s, &a).unwrap(), back.predict_all(&s, &a).unwrap());
            }
        }
    }

    #[test]
    fn corrupt_input_is_a_format_error() {
        let err = read_mlp(&mut &b"NOPE"[..]).unwrap_err();
        assert_eq!(err.kind(), "format");
        let mut buf = Vec::new();
        let ens = trained_chain_ensemble();
        let Member::Network(m) = &ens.members()[0] else { unreachable!() };
        write_mlp(&m.net, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_mlp(&mut buf.as_slice()).is_err());
    }
}
