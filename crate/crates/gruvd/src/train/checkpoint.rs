//! Checkpoints: a directory holding everything needed to resume training
//! bit-exactly or to load a trained model for inference.
//!
//! Layout:
//! - `model.json` — model architecture ([`ModelConfig`])
//! - `params.gvt` — named parameter tensors
//! - `optim.gvt` — Adam moment tensors (`<param>.m`, `<param>.v`)
//! - `train_config.json` — the training hyper-parameters
//! - `state.json` — epoch counter and optimizer step counter

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cell::{build_model, DenoiseCell, ModelConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{read_named_tensors, write_named_tensors, Tensor};
use crate::train::{adam::Adam, TrainConfig, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct TrainState {
    next_epoch: u64,
    adam_t: u64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::config(format!("serialization failed: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.column() as u64, e.to_string()))
}

pub(crate) fn save_trainer<S: Scalar>(dir: &Path, trainer: &Trainer<S>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("model.json"), trainer.model().config())?;
    write_json(&dir.join("train_config.json"), trainer.config())?;
    write_json(
        &dir.join("state.json"),
        &TrainState {
            next_epoch: trainer.next_epoch(),
            adam_t: trainer.optimizer().t(),
        },
    )?;
    save_model_params(&dir.join("params.gvt"), trainer.model())?;
    write_named_tensors(&dir.join("optim.gvt"), &trainer.optimizer().export_state())
}

pub(crate) fn load_trainer<S: Scalar>(dir: &Path) -> Result<Trainer<S>> {
    let model_config: ModelConfig = read_json(&dir.join("model.json"))?;
    let train_config: TrainConfig = read_json(&dir.join("train_config.json"))?;
    let state: TrainState = read_json(&dir.join("state.json"))?;
    train_config.validate()?;

    let mut model = build_model::<S>(model_config, train_config.seed)?;
    load_model_params(&dir.join("params.gvt"), model.as_mut())?;

    let mut optimizer: Adam<S> =
        Adam::new(train_config.adam_beta1, train_config.adam_beta2, train_config.adam_eps)?;
    if state.adam_t > 0 {
        let moments = read_named_tensors::<S>(&dir.join("optim.gvt"))?;
        optimizer.import_state(state.adam_t, &moments)?;
    }
    Ok(Trainer::from_parts(model, optimizer, train_config, state.next_epoch))
}

/// Writes a model's parameters as a named-tensor table.
pub fn save_model_params<S: Scalar>(path: &Path, model: &dyn DenoiseCell<S>) -> Result<()> {
    let mut entries: Vec<(String, Tensor<S>)> = Vec::new();
    model.visit_params(&mut |name, t| entries.push((name, t.clone())));
    write_named_tensors(path, &entries)
}

/// Fills a model's parameters from a named-tensor table. Every parameter
/// must be present with the right shape, and no extra tensors may remain.
pub fn load_model_params<S: Scalar>(path: &Path, model: &mut dyn DenoiseCell<S>) -> Result<()> {
    let mut table: std::collections::BTreeMap<String, Tensor<S>> =
        read_named_tensors::<S>(path)?.into_iter().collect();
    let mut failure: Option<Error> = None;
    model.visit_params_mut(&mut |name, t| {
        if failure.is_some() {
            return;
        }
        match table.remove(&name) {
            Some(saved) if saved.shape() == t.shape() => {
                t.set_data(saved.data().to_vec());
                t.zero_grad();
            }
            Some(saved) => {
                failure = Some(Error::shape(
                    "load_model_params",
                    format!("{:?} for '{name}'", t.shape()),
                    format!("{:?}", saved.shape()),
                ));
            }
            None => {
                failure = Some(Error::config(format!(
                    "checkpoint {} is missing parameter '{name}'",
                    path.display()
                )));
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(extra) = table.keys().next() {
        return Err(Error::config(format!(
            "checkpoint {} holds a tensor '{extra}' that matches no model parameter",
            path.display()
        )));
    }
    Ok(())
}

/// Loads a trained model (architecture + parameters) for inference.
pub fn load_model<S: Scalar>(dir: &Path) -> Result<Box<dyn DenoiseCell<S>>> {
    let model_config: ModelConfig = read_json(&dir.join("model.json"))?;
    let mut model = build_model::<S>(model_config, 0)?;
    load_model_params(&dir.join("params.gvt"), model.as_mut())?;
    Ok(model)
}
