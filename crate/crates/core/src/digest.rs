//! Content hashes for models, datasets and configurations.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::TabularDataset;
use crate::nn::NetworkParams;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the architecture and every parameter's bit pattern.
pub fn params_digest(params: &NetworkParams) -> String {
    let mut h = Sha256::new();
    h.update((params.spec.input_dim as u64).to_le_bytes());
    h.update((params.spec.hidden_widths.len() as u64).to_le_bytes());
    for &w in &params.spec.hidden_widths {
        h.update((w as u64).to_le_bytes());
    }
    for layer in &params.layers {
        h.update((layer.rows as u64).to_le_bytes());
        h.update((layer.cols as u64).to_le_bytes());
        for v in layer.weights.iter().chain(&layer.bias) {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Hash of the encoded features, labels and protected index.
pub fn dataset_digest(data: &TabularDataset) -> String {
    let mut h = Sha256::new();
    h.update((data.n_features() as u64).to_le_bytes());
    h.update((data.protected_index() as u64).to_le_bytes());
    for v in data.features() {
        h.update(v.to_bits().to_le_bytes());
    }
    h.update(data.labels());
    hex::encode(h.finalize())
}

/// Hash of a value's compact JSON serialization.
pub fn json_digest<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable value");
    sha256_hex(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_network, NetworkSpec};

    #[test]
    fn params_digest_tracks_every_bit() {
        let a = init_network(&NetworkSpec::new(3, vec![4], 1)).unwrap();
        let mut b = a.clone();
        assert_eq!(params_digest(&a), params_digest(&b));
        b.layers[1].bias[0] = f64::from_bits(b.layers[1].bias[0].to_bits() ^ 1);
        assert_ne!(params_digest(&a), params_digest(&b));
    }
}
