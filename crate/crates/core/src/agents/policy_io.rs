//! Versioned text format for trained policies. Weights are written as the
//! hex of their IEEE-754 bit patterns so that a round trip is bit-exact.
//!
//! ```text
//! rlmut-policy v1
//! algo QNet
//! activation ReLU
//! seed 42
//! provenance <sha256 of env + mutation>
//! env {"env_id":"CartPole",...}
//! mutation healthy
//! shape 4 32 32 2
//! w0 <hex> <hex> ...
//! b0 <hex> ...
//! ...
//! end
//! ```

use thiserror::Error;

use super::{AlgoId, Provenance, TrainedPolicy};
use crate::nn::{Activation, Layer};
use crate::Mlp;

const MAGIC: &str = "rlmut-policy v1";

#[derive(Debug, Error, PartialEq)]
pub enum PolicyFormatError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("provenance hash mismatch: header {header}, computed {computed}")]
    ProvenanceMismatch { header: String, computed: String },
}

fn hex_values(values: &[f64]) -> String {
    values.iter().map(|v| format!("{:016x}", v.to_bits())).collect::<Vec<_>>().join(" ")
}

pub(super) fn write(policy: &TrainedPolicy) -> String {
    let net = &policy.network;
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("algo {}\n", policy.algo_id));
    out.push_str(&format!("activation {}\n", net.activation));
    out.push_str(&format!("seed {}\n", policy.seed));
    out.push_str(&format!("provenance {}\n", policy.provenance.hash()));
    out.push_str(&format!("env {}\n", serde_json::to_string(&policy.provenance.env).expect("env serializes")));
    out.push_str(&format!("mutation {}\n", policy.provenance.label()));
    let shape: Vec<String> = net.shape().iter().map(ToString::to_string).collect();
    out.push_str(&format!("shape {}\n", shape.join(" ")));
    for (i, layer) in net.layers.iter().enumerate() {
        out.push_str(&format!("w{i} {}\n", hex_values(&layer.weights)));
        out.push_str(&format!("b{i} {}\n", hex_values(&layer.bias)));
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn field(&mut self, key: &str) -> Result<(usize, &'a str), PolicyFormatError> {
        let (idx, line) = self
            .inner
            .next()
            .ok_or_else(|| PolicyFormatError::Malformed { line: 0, message: format!("missing {key:?}") })?;
        let line_no = idx + 1;
        let rest = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' ').or_else(|| r.is_empty().then_some("")))
            .ok_or_else(|| PolicyFormatError::Malformed { line: line_no, message: format!("expected {key:?}") })?;
        Ok((line_no, rest))
    }
}

fn malformed(line: usize, message: impl Into<String>) -> PolicyFormatError {
    PolicyFormatError::Malformed { line, message: message.into() }
}

fn parse_hex(line: usize, text: &str, expected: usize) -> Result<Vec<f64>, PolicyFormatError> {
    let values = text
        .split_whitespace()
        .map(|tok| u64::from_str_radix(tok, 16).map(f64::from_bits).map_err(|_| malformed(line, format!("bad hex {tok:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != expected {
        return Err(malformed(line, format!("expected {expected} values, found {}", values.len())));
    }
    Ok(values)
}

pub(super) fn read(text: &str) -> Result<TrainedPolicy, PolicyFormatError> {
    let mut lines = Lines { inner: text.lines().enumerate() };
    match lines.inner.next() {
        Some((_, MAGIC)) => {}
        _ => return Err(malformed(1, format!("expected header {MAGIC:?}"))),
    }
    let (l, algo) = lines.field("algo")?;
    let algo: AlgoId = algo.parse().map_err(|e: String| malformed(l, e))?;
    let (l, act) = lines.field("activation")?;
    let activation: Activation = act.parse().map_err(|e: String| malformed(l, e))?;
    let (l, seed) = lines.field("seed")?;
    let seed: u64 = seed.parse().map_err(|_| malformed(l, "bad seed"))?;
    let (_, header_hash) = lines.field("provenance")?;
    let (l, env) = lines.field("env")?;
    let env = serde_json::from_str(env).map_err(|e| malformed(l, e.to_string()))?;
    let (_, mutation) = lines.field("mutation")?;
    let mutation = (mutation != "healthy").then(|| mutation.to_string());
    let provenance = Provenance { env, mutation };
    let computed = provenance.hash();
    if computed != header_hash {
        return Err(PolicyFormatError::ProvenanceMismatch { header: header_hash.to_string(), computed });
    }
    let (l, shape) = lines.field("shape")?;
    let shape: Vec<usize> = shape
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| malformed(l, "bad layer width")))
        .collect::<Result<_, _>>()?;
    if shape.len() < 2 {
        return Err(malformed(l, "network needs at least two layer widths"));
    }
    let mut layers = Vec::new();
    for (i, w) in shape.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let (l, ws) = lines.field(&format!("w{i}"))?;
        let weights = parse_hex(l, ws, n_in * n_out)?;
        let (l, bs) = lines.field(&format!("b{i}"))?;
        let bias = parse_hex(l, bs, n_out)?;
        layers.push(Layer { n_in, n_out, weights, bias });
    }
    lines.field("end")?;
    Ok(TrainedPolicy { algo_id: algo, network: Mlp { layers, activation }, seed, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvironmentConfig;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn policy(seed: u64, mutation: Option<&str>) -> TrainedPolicy {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        TrainedPolicy {
            algo_id: AlgoId::PG,
            network: Mlp::new(&[4, 3, 2], Activation::Sigmoid, &mut rng),
            seed,
            provenance: Provenance { env: EnvironmentConfig::cartpole(), mutation: mutation.map(String::from) },
        }
    }

    #[test]
    fn detects_tampering() {
        let text = write(&policy(1, None));
        let tampered = text.replace("mutation healthy", "mutation ILF");
        assert!(matches!(read(&tampered), Err(PolicyFormatError::ProvenanceMismatch { .. })));
        let truncated: String = text.lines().take(9).collect::<Vec<_>>().join("\n");
        assert!(read(&truncated).is_err());
        assert!(read("not a policy").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), mutated in any::<bool>(), special in any::<f64>()) {
            let mut p = policy(seed, mutated.then_some("PAC_ReLU+NDF"));
            // arbitrary bit patterns (NaN payloads, subnormals) survive too
            p.network.layers[0].weights[0] = special;
            let back = read(&write(&p)).unwrap();
            prop_assert_eq!(back.network.layers[0].weights[0].to_bits(), special.to_bits());
            p.network.layers[0].weights[0] = 0.0;
            let mut back = back;
            back.network.layers[0].weights[0] = 0.0;
            prop_assert_eq!(back, p);
        }
    }
}
