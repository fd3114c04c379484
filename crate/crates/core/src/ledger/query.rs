use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::event::{Event, TaskKind};
use super::{Block, ChainIndex, LedgerError, GENESIS_PREV_HASH};
use crate::types::{BlobId, PubKey, TaskId};

/// `[data id, model id, worker id, performance]` for one datum of one learn
/// task. Absent performance means the task is still pending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningTuple {
    pub task_id: TaskId,
    pub data_id: BlobId,
    pub model_id: Option<BlobId>,
    pub worker_id: Option<PubKey>,
    pub performance: Option<f64>,
    pub shadow: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionTuple {
    pub task_id: TaskId,
    pub data_id: BlobId,
    pub model_id: BlobId,
    pub worker_id: Option<PubKey>,
    pub sealed_output_id: Option<BlobId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "by", content = "id", rename_all = "snake_case")]
pub enum TupleFilter {
    All,
    Data(BlobId),
    Model(BlobId),
    PendingOnly,
    CompletedOnly,
}

struct Folded {
    kind: TaskKind,
    data_ids: Vec<BlobId>,
    model_id: Option<BlobId>,
    worker: Option<PubKey>,
    performance: Option<f64>,
    output: Option<BlobId>,
    shadow: bool,
    done: bool,
}

/// Structural fold: hash links plus referential invariants. Signatures are
/// `verify_chain`'s business.
fn fold(chain: &[Block]) -> Result<Vec<(TaskId, Folded)>, LedgerError> {
    let mut index = ChainIndex::default();
    let mut order: Vec<TaskId> = Vec::new();
    let mut tasks: BTreeMap<TaskId, Folded> = BTreeMap::new();
    let mut prev = GENESIS_PREV_HASH;
    for (i, block) in chain.iter().enumerate() {
        if block.index != i as u64 || block.prev_hash != prev || index.check(&block.event).is_err() {
            return Err(LedgerError::InvalidChain { index: i as u64 });
        }
        index.apply(&block.event);
        prev = block.digest();
        match &block.event {
            Event::TaskCreated {
                task_id,
                kind,
                data_ids,
                algorithm_or_model_id,
                shadow,
                ..
            } => {
                order.push(task_id.clone());
                tasks.insert(
                    task_id.clone(),
                    Folded {
                        kind: *kind,
                        data_ids: data_ids.clone(),
                        model_id: (*kind == TaskKind::Predict).then_some(*algorithm_or_model_id),
                        worker: None,
                        performance: None,
                        output: None,
                        shadow: shadow.is_some(),
                        done: false,
                    },
                );
            }
            Event::WorkerAssigned {
                task_id,
                worker_pubkey,
            } => {
                if let Some(t) = tasks.get_mut(task_id) {
                    t.worker = Some(*worker_pubkey);
                }
            }
            Event::PerformanceRecorded {
                task_id,
                model_id,
                performance,
            } => {
                if let Some(t) = tasks.get_mut(task_id) {
                    t.model_id = *model_id;
                    t.performance = Some(*performance);
                    t.done = true;
                }
            }
            Event::PredictionRecorded {
                task_id,
                sealed_output_id,
                ..
            } => {
                if let Some(t) = tasks.get_mut(task_id) {
                    t.output = Some(*sealed_output_id);
                    t.done = true;
                }
            }
            _ => {}
        }
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let t = tasks.remove(&id).expect("ordered task present");
            (id, t)
        })
        .collect())
}

fn keep(filter: &TupleFilter, data_id: &BlobId, model_id: Option<&BlobId>, done: bool) -> bool {
    match filter {
        TupleFilter::All => true,
        TupleFilter::Data(d) => d == data_id,
        TupleFilter::Model(m) => model_id == Some(m),
        TupleFilter::PendingOnly => !done,
        TupleFilter::CompletedOnly => done,
    }
}

pub fn query_learning(chain: &[Block], filter: &TupleFilter) -> Result<Vec<LearningTuple>, LedgerError> {
    let mut out = Vec::new();
    for (task_id, t) in fold(chain)? {
        if t.kind != TaskKind::Learn {
            continue;
        }
        for data_id in &t.data_ids {
            if keep(filter, data_id, t.model_id.as_ref(), t.done) {
                out.push(LearningTuple {
                    task_id: task_id.clone(),
                    data_id: *data_id,
                    model_id: t.model_id,
                    worker_id: t.worker,
                    performance: t.performance,
                    shadow: t.shadow,
                });
            }
        }
    }
    Ok(out)
}

pub fn query_predictions(chain: &[Block], filter: &TupleFilter) -> Result<Vec<PredictionTuple>, LedgerError> {
    let mut out = Vec::new();
    for (task_id, t) in fold(chain)? {
        if t.kind != TaskKind::Predict {
            continue;
        }
        let model_id = t.model_id.expect("predict tasks carry their model");
        for data_id in &t.data_ids {
            if keep(filter, data_id, Some(&model_id), t.done) {
                out.push(PredictionTuple {
                    task_id: task_id.clone(),
                    data_id: *data_id,
                    model_id,
                    worker_id: t.worker,
                    sealed_output_id: t.output,
                });
            }
        }
    }
    Ok(out)
}
