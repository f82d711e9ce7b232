//! On-disk formats.
//!
//! * MPS blob (`.mps`): little-endian. Magic `b"TNMPS\0\0\x01"`, `u64` site
//!   count, then per site `u64 left`, `u64 right` and `left·2·right` complex
//!   entries as `(re: f64, im: f64)`, index order `(left, physical, right)`
//!   row-major. The truncation policy lives in the accompanying manifest.
//! * Circuit checkpoint (JSON, schema `tnhvp.circuit/1`): layout plus every
//!   stored gate as 16 row-major `[re, im]` pairs.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tnhvp::circuit::build_brickwall;
use tnhvp::complex::unitarity_residual;
use tnhvp::mps::SiteTensor;
use tnhvp::{BrickwallCircuit, CMat4, Mps, TruncationPolicy, C64};

use crate::error::CliError;

pub const MPS_MAGIC: [u8; 8] = *b"TNMPS\0\0\x01";
pub const CIRCUIT_SCHEMA: &str = "tnhvp.circuit/1";

pub fn write_mps(w: &mut impl Write, m: &Mps) -> std::io::Result<()> {
    w.write_all(&MPS_MAGIC)?;
    w.write_all(&(m.n_sites() as u64).to_le_bytes())?;
    for s in m.sites() {
        w.write_all(&(s.left_bond() as u64).to_le_bytes())?;
        w.write_all(&(s.right_bond() as u64).to_le_bytes())?;
        for z in s.data() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_mps(r: &mut impl Read, policy: TruncationPolicy) -> Result<Mps, CliError> {
    let bad = |m: String| CliError::Config(format!("malformed MPS blob: {m}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| bad(e.to_string()))?;
    if magic != MPS_MAGIC {
        return Err(bad("wrong magic".into()));
    }
    let n = read_u64(r).map_err(|e| bad(e.to_string()))? as usize;
    if n == 0 || n > 4096 {
        return Err(bad(format!("site count {n}")));
    }
    let mut sites = Vec::with_capacity(n);
    for _ in 0..n {
        let l = read_u64(r).map_err(|e| bad(e.to_string()))? as usize;
        let rr = read_u64(r).map_err(|e| bad(e.to_string()))? as usize;
        if l == 0 || rr == 0 || l > 1 << 16 || rr > 1 << 16 {
            return Err(bad(format!("bond dimensions {l}x{rr}")));
        }
        let mut data = Vec::with_capacity(2 * l * rr);
        for _ in 0..2 * l * rr {
            let re = read_f64(r).map_err(|e| bad(e.to_string()))?;
            let im = read_f64(r).map_err(|e| bad(e.to_string()))?;
            data.push(C64::new(re, im));
        }
        sites.push(SiteTensor::new(l, rr, data).map_err(|e| bad(e.to_string()))?);
    }
    Mps::new(sites, policy).map_err(|e| bad(e.to_string()))
}

pub fn save_mps(path: &Path, m: &Mps) -> Result<(), CliError> {
    let f = std::fs::File::create(path).map_err(|e| CliError::io(path.display(), e))?;
    let mut w = std::io::BufWriter::new(f);
    write_mps(&mut w, m).and_then(|_| w.flush()).map_err(|e| CliError::io(path.display(), e))
}

pub fn load_mps(path: &Path, policy: TruncationPolicy) -> Result<Mps, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
    read_mps(&mut std::io::BufReader::new(f), policy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitCheckpoint {
    pub schema: String,
    pub config_hash: String,
    /// Optimizer iteration the gates belong to; `None` for an initial circuit.
    pub iteration: Option<usize>,
    pub n_qubits: usize,
    pub n_layers: usize,
    pub ti: bool,
    pub gates: Vec<Vec<[f64; 2]>>,
}

impl CircuitCheckpoint {
    pub fn new(c: &BrickwallCircuit, config_hash: &str, iteration: Option<usize>) -> Self {
        let gates = c
            .gates()
            .iter()
            .map(|g| (0..16).map(|i| {
                let z = g[(i / 4, i % 4)];
                [z.re, z.im]
            }).collect())
            .collect();
        CircuitCheckpoint {
            schema: CIRCUIT_SCHEMA.into(),
            config_hash: config_hash.into(),
            iteration,
            n_qubits: c.n_qubits(),
            n_layers: c.n_layers(),
            ti: c.ti(),
            gates,
        }
    }

    pub fn to_circuit(&self) -> Result<BrickwallCircuit, CliError> {
        if self.schema != CIRCUIT_SCHEMA {
            return Err(CliError::Config(format!("unsupported circuit schema {:?}", self.schema)));
        }
        let mut gates = Vec::with_capacity(self.gates.len());
        for (p, g) in self.gates.iter().enumerate() {
            if g.len() != 16 {
                return Err(CliError::Config(format!("gate {p} has {} entries, expected 16", g.len())));
            }
            let m = CMat4::from_fn(|r, c| {
                let [re, im] = g[4 * r + c];
                C64::new(re, im)
            });
            let res = unitarity_residual(&m);
            if !(res <= 1e-8) {
                return Err(CliError::Config(format!("gate {p} is not unitary (residual {res:.3e})")));
            }
            gates.push(m);
        }
        build_brickwall(self.n_qubits, self.n_layers, gates, self.ti).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let s = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&s).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        std::fs::write(path, s + "\n").map_err(|e| CliError::io(path.display(), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tnhvp::complex::{haar_product_state, haar_unitary_gate};

    #[test]
    fn mps_blob_roundtrip() {
        let c = build_brickwall(5, 3, (0..6).map(haar_unitary_gate).collect(), false).unwrap();
        let psi = haar_product_state(5, 3, TruncationPolicy::default()).unwrap();
        let m = tnhvp::circuit::apply_circuit(&c, &psi, false).unwrap();
        let mut buf = Vec::new();
        write_mps(&mut buf, &m).unwrap();
        let back = read_mps(&mut buf.as_slice(), m.policy()).unwrap();
        assert_eq!(back.to_dense(), m.to_dense());
        assert_eq!(back.bond_dims(), m.bond_dims());
        buf[3] = b'X';
        assert!(read_mps(&mut buf.as_slice(), m.policy()).is_err());
        assert!(read_mps(&mut &buf[..20], m.policy()).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let c = build_brickwall(6, 3, (10..13).map(haar_unitary_gate).collect(), true).unwrap();
        let ck = CircuitCheckpoint::new(&c, "abc", Some(4));
        let s = serde_json::to_string(&ck).unwrap();
        let back: CircuitCheckpoint = serde_json::from_str(&s).unwrap();
        assert_eq!(back.to_circuit().unwrap(), c);
        let mut bad = ck.clone();
        bad.gates[0][0] = [2.0, 0.0];
        assert!(bad.to_circuit().is_err());
    }
}
