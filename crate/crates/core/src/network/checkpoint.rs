//! Checkpoint container: a safetensors file holding every parameter as a
//! little-endian `F64` tensor keyed by layer path. The single metadata key
//! `covseg` carries `{"format": "covseg-checkpoint/1", "network_config": {...}}`.
//! One key only: safetensors writes metadata in hash-map order, and
//! checkpoints must be byte-identical across runs.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::config::NetworkConfig;
use crate::network::model::AttentionUNet;
use crate::params::ParameterSet;
use crate::tensor::Tensor;

const METADATA_KEY: &str = "covseg";
const FORMAT_VALUE: &str = "covseg-checkpoint/1";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    network_config: NetworkConfig,
}

fn st_err(e: safetensors::SafeTensorError) -> Error {
    Error::Checkpoint(e.to_string())
}

pub fn encode_checkpoint(config: &NetworkConfig, params: &ParameterSet) -> Result<Vec<u8>> {
    AttentionUNet::new(config.clone())?.check_params(params)?;
    let bytes: Vec<(String, Vec<usize>, Vec<u8>)> = params
        .iter()
        .map(|(path, t)| {
            let raw = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
            (path.to_string(), t.shape().to_vec(), raw)
        })
        .collect();
    let views = bytes
        .iter()
        .map(|(path, shape, raw)| {
            TensorView::new(Dtype::F64, shape.clone(), raw).map(|v| (path.clone(), v))
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(st_err)?;
    let header = Header { format: FORMAT_VALUE.into(), network_config: config.clone() };
    let metadata = HashMap::from([(METADATA_KEY.to_string(), serde_json::to_string(&header)?)]);
    safetensors::serialize(views, Some(metadata)).map_err(st_err)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(NetworkConfig, ParameterSet)> {
    let (_, meta) = SafeTensors::read_metadata(bytes).map_err(st_err)?;
    let info = meta.metadata().as_ref().ok_or_else(|| {
        Error::Checkpoint("missing metadata; not a covseg checkpoint".into())
    })?;
    let header: Header = info
        .get(METADATA_KEY)
        .ok_or_else(|| Error::Checkpoint("missing `covseg` metadata".into()))
        .and_then(|json| serde_json::from_str(json).map_err(Error::from))?;
    if header.format != FORMAT_VALUE {
        return Err(Error::Checkpoint(format!("unsupported format `{}`", header.format)));
    }
    let config = header.network_config;
    let net = AttentionUNet::new(config.clone())?;

    let st = SafeTensors::deserialize(bytes).map_err(st_err)?;
    let layout = net.parameter_layout();
    if st.len() != layout.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} tensors, network expects {}",
            st.len(),
            layout.len()
        )));
    }
    let mut params = ParameterSet::new();
    for spec in layout {
        let view = st
            .tensor(&spec.path)
            .map_err(|_| Error::Checkpoint(format!("missing parameter `{}`", spec.path)))?;
        if view.dtype() != Dtype::F64 || view.shape() != spec.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "parameter `{}` is {:?}{:?}, expected F64{:?}",
                spec.path,
                view.dtype(),
                view.shape(),
                spec.shape
            )));
        }
        let data = view
            .data()
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        params.insert(spec.path, Tensor::from_vec(view.shape(), data)?)?;
    }
    Ok((config, params))
}

pub fn save_checkpoint(path: &Path, config: &NetworkConfig, params: &ParameterSet) -> Result<()> {
    let bytes = encode_checkpoint(config, params)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(NetworkConfig, ParameterSet)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> NetworkConfig {
        NetworkConfig { levels: 3, base_filters: 4, input_size: (16, 16), ..Default::default() }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = config();
        let net = AttentionUNet::new(cfg.clone()).unwrap();
        let params = net.init_params();
        let bytes = encode_checkpoint(&cfg, &params).unwrap();
        let (cfg2, params2) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(params, params2);
        let image = Tensor::full(&[1, 16, 16], 0.3);
        let a = net.predict(&params, &image).unwrap();
        let b = AttentionUNet::new(cfg2).unwrap().predict(&params2, &image).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        // encoding is a pure function of (config, params)
        assert_eq!(bytes, encode_checkpoint(&cfg, &params2).unwrap());
    }

    #[test]
    fn mismatched_params_are_rejected() {
        let cfg = config();
        let other = AttentionUNet::new(NetworkConfig { attention_enabled: false, ..config() })
            .unwrap()
            .init_params();
        assert!(encode_checkpoint(&cfg, &other).is_err());
        assert!(decode_checkpoint(b"not a checkpoint").is_err());
    }

    #[test]
    fn save_and_load_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/ck.safetensors");
        let cfg = config();
        let params = AttentionUNet::new(cfg.clone()).unwrap().init_params();
        save_checkpoint(&path, &cfg, &params).unwrap();
        let (_, loaded) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, params);
        assert!(load_checkpoint(&dir.path().join("missing")).is_err());
    }
}
