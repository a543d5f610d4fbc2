//! On-disk model directory: `config.json`, `tokenizer.json`,
//! `model.safetensors`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use safetensors::tensor::TensorView;
use safetensors::SafeTensors;

use super::model::{CausalLm, LmConfig};
use super::tokenizer::WordTokenizer;
use super::LmError;
use crate::scalar::{from_le_bytes, to_le_bytes, Scalar};

pub const CONFIG_FILE: &str = "config.json";
pub const TOKENIZER_FILE: &str = "tokenizer.json";
pub const WEIGHTS_FILE: &str = "model.safetensors";

pub(crate) fn tensor_bytes<T: Scalar>(name: &str, shape: &[usize], values: &[T]) -> (String, Vec<usize>, Vec<u8>) {
    (name.to_string(), shape.to_vec(), to_le_bytes(values))
}

/// Serialise named tensors of one dtype to safetensors bytes.
pub(crate) fn serialize_tensors<T: Scalar>(
    tensors: &[(String, Vec<usize>, Vec<u8>)],
) -> Result<Vec<u8>, safetensors::SafeTensorError> {
    let views: Vec<(String, TensorView<'_>)> = tensors
        .iter()
        .map(|(name, shape, bytes)| TensorView::new(T::DTYPE, shape.clone(), bytes).map(|v| (name.clone(), v)))
        .collect::<Result<_, _>>()?;
    safetensors::serialize(views, &None::<HashMap<String, String>>)
}

/// Read one tensor, checking dtype and shape.
pub(crate) fn read_tensor<T: Scalar>(st: &SafeTensors<'_>, name: &str, shape: &[usize]) -> Result<Vec<T>, String> {
    let view = st.tensor(name).map_err(|e| format!("tensor {name}: {e}"))?;
    if view.dtype() != T::DTYPE {
        return Err(format!(
            "tensor {name}: dtype {:?}, expected {:?}",
            view.dtype(),
            T::DTYPE
        ));
    }
    if view.shape() != shape {
        return Err(format!("tensor {name}: shape {:?}, expected {shape:?}", view.shape()));
    }
    Ok(from_le_bytes(view.data()))
}

pub fn save_model<T: Scalar>(model: &CausalLm<T>, dir: &Path) -> Result<(), LmError> {
    let io = |e: std::io::Error| LmError::Io(dir.display().to_string(), e);
    fs::create_dir_all(dir).map_err(io)?;
    let config = serde_json::to_vec_pretty(&model.config).expect("config serializes");
    fs::write(dir.join(CONFIG_FILE), config).map_err(io)?;
    let tok = serde_json::to_vec(&model.tokenizer).expect("tokenizer serializes");
    fs::write(dir.join(TOKENIZER_FILE), tok).map_err(io)?;
    let tensors: Vec<_> = model
        .layout()
        .tensors
        .iter()
        .map(|s| tensor_bytes(&s.name, &s.shape, &model.params()[s.range.clone()]))
        .collect();
    let bytes = serialize_tensors::<T>(&tensors).map_err(|e| LmError::Format(e.to_string()))?;
    fs::write(dir.join(WEIGHTS_FILE), bytes).map_err(io)?;
    Ok(())
}

pub fn load_model<T: Scalar>(dir: &Path) -> Result<CausalLm<T>, LmError> {
    let read = |name: &str| fs::read(dir.join(name)).map_err(|e| LmError::Io(dir.join(name).display().to_string(), e));
    let config: LmConfig =
        serde_json::from_slice(&read(CONFIG_FILE)?).map_err(|e| LmError::Format(format!("{CONFIG_FILE}: {e}")))?;
    let tokenizer: WordTokenizer = serde_json::from_slice(&read(TOKENIZER_FILE)?)
        .map_err(|e| LmError::Format(format!("{TOKENIZER_FILE}: {e}")))?;
    let weights = read(WEIGHTS_FILE)?;
    let st = SafeTensors::deserialize(&weights).map_err(|e| LmError::Format(e.to_string()))?;
    let layout = super::model::ParamLayout::new(&config);
    let mut params = vec![T::zero(); layout.total];
    for spec in &layout.tensors {
        let values = read_tensor::<T>(&st, &spec.name, &spec.shape).map_err(LmError::Format)?;
        params[spec.range.clone()].copy_from_slice(&values);
    }
    CausalLm::from_parts(config, tokenizer, params).map_err(LmError::Format)
}
