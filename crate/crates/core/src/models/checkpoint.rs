//! Binary checkpoint files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "QIFNETCK"
//! version    u32      1
//! n_nets     u32      1 for an MLP, 2 for a DeepONet (branch, trunk)
//! per net:
//!   n_sizes  u32
//!   sizes    u32 * n_sizes
//!   weights  f64 per layer, [post][pre] row-major
//!   phases   f64 per network neuron, layer by layer
//! meta_len   u64
//! meta       JSON: model kind, neuron parameters, trial length, decode
//!            pairs, encodings, target maps and caller metadata
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::deeponet::DeepOnetModel;
use super::mlp::MlpModel;
use crate::codec::{EncodingSpec, TargetAffine};
use crate::engine::NetworkSpec;
use crate::error::{Error, Result};
use crate::qif::NeuronParams;

pub const MAGIC: &[u8; 8] = b"QIFNETCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Mlp(MlpModel),
    DeepOnet(DeepOnetModel),
}

impl Checkpoint {
    fn models(&self) -> Vec<&MlpModel> {
        match self {
            Checkpoint::Mlp(m) => vec![m],
            Checkpoint::DeepOnet(d) => vec![&d.branch, &d.trunk],
        }
    }
}

#[derive(Serialize, Deserialize)]
struct NetMeta {
    params: NeuronParams,
    trial_t: f64,
    decode_pairs: Vec<(usize, usize)>,
    encoding: Vec<EncodingSpec>,
    target_affine: Vec<TargetAffine>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: String,
    nets: Vec<NetMeta>,
    #[serde(default)]
    extra: serde_json::Value,
}

pub fn write_checkpoint(w: &mut impl Write, ck: &Checkpoint, extra: &serde_json::Value) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    let models = ck.models();
    w.write_u32::<LittleEndian>(models.len() as u32)?;
    let mut nets = Vec::new();
    for m in &models {
        let net = &m.net;
        w.write_u32::<LittleEndian>(net.layer_sizes.len() as u32)?;
        for &s in &net.layer_sizes {
            w.write_u32::<LittleEndian>(s as u32)?;
        }
        for x in net.weights.iter().flat_map(|l| l.iter()) {
            w.write_f64::<LittleEndian>(*x)?;
        }
        for x in net.initial_phase.iter().flatten() {
            w.write_f64::<LittleEndian>(*x)?;
        }
        nets.push(NetMeta {
            params: net.params,
            trial_t: net.trial_t,
            decode_pairs: net.decode_pairs.clone(),
            encoding: m.encoding.clone(),
            target_affine: m.target_affine.clone(),
        });
    }
    let meta = Meta {
        kind: match ck {
            Checkpoint::Mlp(_) => "mlp".into(),
            Checkpoint::DeepOnet(_) => "deeponet".into(),
        },
        nets,
        extra: extra.clone(),
    };
    let bytes = serde_json::to_vec(&meta)?;
    w.write_u64::<LittleEndian>(bytes.len() as u64)?;
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<(Checkpoint, serde_json::Value)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n_nets = r.read_u32::<LittleEndian>()? as usize;
    if n_nets == 0 || n_nets > 2 {
        return Err(Error::Checkpoint(format!("{n_nets} networks")));
    }
    let mut raw = Vec::with_capacity(n_nets);
    for _ in 0..n_nets {
        let n_sizes = r.read_u32::<LittleEndian>()? as usize;
        if !(2..=64).contains(&n_sizes) {
            return Err(Error::Checkpoint(format!("{n_sizes} layers")));
        }
        let sizes = (0..n_sizes)
            .map(|_| r.read_u32::<LittleEndian>().map(|s| s as usize))
            .collect::<std::io::Result<Vec<_>>>()?;
        let mut weights = Vec::with_capacity(n_sizes - 1);
        for l in 0..n_sizes - 1 {
            let (rows, cols) = (sizes[l + 1], sizes[l]);
            let mut data = vec![0.0; rows * cols];
            r.read_f64_into::<LittleEndian>(&mut data)?;
            weights.push(Array2::from_shape_vec((rows, cols), data).expect("shape matches length"));
        }
        let mut phases = Vec::with_capacity(n_sizes - 1);
        for &n in &sizes[1..] {
            let mut v = vec![0.0; n];
            r.read_f64_into::<LittleEndian>(&mut v)?;
            phases.push(v);
        }
        raw.push((sizes, weights, phases));
    }
    let len = r.read_u64::<LittleEndian>()? as usize;
    let mut bytes = vec![0u8; len];
    r.read_exact(&mut bytes)?;
    let meta: Meta = serde_json::from_slice(&bytes)?;
    if meta.nets.len() != n_nets {
        return Err(Error::Checkpoint("metadata does not match network count".into()));
    }
    let mut models = Vec::with_capacity(n_nets);
    for ((layer_sizes, weights, initial_phase), nm) in raw.into_iter().zip(meta.nets) {
        let model = MlpModel {
            net: NetworkSpec {
                layer_sizes,
                weights,
                params: nm.params,
                trial_t: nm.trial_t,
                initial_phase,
                decode_pairs: nm.decode_pairs,
            },
            encoding: nm.encoding,
            target_affine: nm.target_affine,
        };
        model.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        models.push(model);
    }
    let ck = match (meta.kind.as_str(), models.len()) {
        ("mlp", 1) => Checkpoint::Mlp(models.pop().expect("one model")),
        ("deeponet", 2) => {
            let trunk = models.pop().expect("two models");
            let branch = models.pop().expect("two models");
            Checkpoint::DeepOnet(DeepOnetModel::new(branch, trunk)?)
        }
        (k, n) => return Err(Error::Checkpoint(format!("kind {k} with {n} networks"))),
    };
    Ok((ck, meta.extra))
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint, extra: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, ck, extra)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, serde_json::Value)> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::PhaseInit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64, n_in: usize, p: usize) -> MlpModel {
        let np = NeuronParams::with_period(1.0, 2.0).unwrap();
        let mut m = MlpModel::new(vec![EncodingSpec::direct(-1.0, 1.0, 2.0); n_in], &[3, 4], p, np, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        m.init_weights(&mut rng, 0.5);
        m.init_phases(&mut rng, PhaseInit::Uniform { lo: 0.0, hi: 0.5 });
        m.target_affine = vec![TargetAffine::for_trial(0.0, 3.0, 2.0); p];
        m
    }

    #[test]
    fn mlp_round_trip_is_bit_exact() {
        let ck = Checkpoint::Mlp(model(1, 2, 1));
        let extra = serde_json::json!({"task": "parabola"});
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ck, &extra).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), VERSION);
        let (back, ex) = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(ex, extra);
    }

    #[test]
    fn deeponet_round_trip() {
        let d = DeepOnetModel::new(model(2, 3, 2), model(3, 1, 2)).unwrap();
        let ck = Checkpoint::DeepOnet(d);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ck, &serde_json::Value::Null).unwrap();
        assert_eq!(read_checkpoint(&mut buf.as_slice()).unwrap().0, ck);
    }

    #[test]
    fn first_weight_is_little_endian_after_sizes() {
        let m = model(4, 1, 1);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &Checkpoint::Mlp(m.clone()), &serde_json::Value::Null).unwrap();
        // magic, version, n_nets, n_sizes, 4 sizes
        let off = 8 + 4 + 4 + 4 + 4 * 4;
        let w = f64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
        assert_eq!(w, m.net.weights[0][[0, 0]]);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &Checkpoint::Mlp(model(5, 1, 1)), &serde_json::Value::Null).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(&mut bad.as_slice()), Err(Error::Checkpoint(_))));
        let truncated = &buf[..buf.len() - 10];
        assert!(read_checkpoint(&mut &truncated[..]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ck");
        let ck = Checkpoint::Mlp(model(6, 2, 1));
        save_checkpoint(&path, &ck, &serde_json::Value::Null).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap().0, ck);
    }
}
