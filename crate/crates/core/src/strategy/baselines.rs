use alloc::vec::Vec;

use crate::client::ClientState;
use crate::error::Result;
use crate::federation::RoundConfig;
use crate::nn::{Freeze, ModelParams};

use super::{train_phase, LocalUpdateReport, Phase, Upload};

fn finish(client: &mut ClientState, model: ModelParams) {
    client.prev_head = model.head.clone();
    client.local_model = model;
}

/// Overwrite with the global model, train everything, upload everything.
pub fn fedavg_update(
    client: &mut ClientState,
    global: &ModelParams,
    cfg: &RoundConfig,
    seed: u64,
) -> Result<LocalUpdateReport> {
    let mut model = global.clone();
    let joint = train_phase(
        &mut model,
        &client.split.train,
        Freeze::NONE,
        Phase::Joint,
        cfg,
        seed,
    )?;
    let upload = Upload::Full(model.clone());
    finish(client, model);
    Ok(LocalUpdateReport::new(
        client,
        upload,
        joint.into_iter().collect(),
    ))
}

/// Global extractor with the retained local head, trained jointly; only the
/// extractor is uploaded.
pub fn fedper_update(
    client: &mut ClientState,
    global: &ModelParams,
    cfg: &RoundConfig,
    seed: u64,
) -> Result<LocalUpdateReport> {
    let mut model = global.with_head(client.prev_head.clone())?;
    let joint = train_phase(
        &mut model,
        &client.split.train,
        Freeze::NONE,
        Phase::Joint,
        cfg,
        seed,
    )?;
    let upload = Upload::Extractor(model.extractor.clone());
    finish(client, model);
    Ok(LocalUpdateReport::new(
        client,
        upload,
        joint.into_iter().collect(),
    ))
}

/// Global extractor with the retained local head; the head is fine-tuned
/// with the extractor frozen, then the extractor is trained with the head
/// frozen. Only the extractor is uploaded.
pub fn fedrep_update(
    client: &mut ClientState,
    global: &ModelParams,
    cfg: &RoundConfig,
    seed: u64,
) -> Result<LocalUpdateReport> {
    let mut model = global.with_head(client.prev_head.clone())?;
    let mut phases = Vec::with_capacity(2);
    let train = &client.split.train;
    phases.extend(train_phase(
        &mut model,
        train,
        Freeze::EXTRACTOR,
        Phase::Head,
        cfg,
        seed,
    )?);
    phases.extend(train_phase(
        &mut model,
        train,
        Freeze::HEAD,
        Phase::Extractor,
        cfg,
        seed,
    )?);
    let upload = Upload::Extractor(model.extractor.clone());
    finish(client, model);
    Ok(LocalUpdateReport::new(client, upload, phases))
}
