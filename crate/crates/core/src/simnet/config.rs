use serde::{Deserialize, Serialize};

use super::SimError;
use crate::ledger::RecordKind;
use crate::types::{ChallengeId, Credits, Label};

/// Workflow steps a worker goes through after being assigned a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Step {
    /// Fetching blobs and key shares.
    Fetch,
    /// Isolated computation.
    Run,
    /// Publishing the result.
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "during", rename_all = "kebab-case")]
pub enum Window {
    /// Logical ticks `from <= t < until`.
    Ticks { from: u64, until: u64 },
    /// While the worker holding the `assignment`-th assignment (1-based)
    /// performs `step`.
    Step { assignment: u64, step: Step },
}

impl Window {
    fn overlaps(&self, other: &Window) -> bool {
        match (self, other) {
            (Window::Ticks { from: a, until: b }, Window::Ticks { from: c, until: d }) => a < d && c < b,
            (Window::Step { .. }, Window::Step { .. }) => self == other,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "fault", rename_all = "kebab-case")]
pub enum Fault {
    /// The actor refuses every message addressed to it.
    Offline { actor: String, window: Window },
    /// Messages addressed to `to` are lost.
    Drop { to: String, window: Window },
    /// The worker holding the `assignment`-th assignment dies at the start
    /// of `step`, without reporting.
    KillWorker { assignment: u64, step: Step },
}

impl Fault {
    fn conflicts(&self, other: &Fault) -> bool {
        match (self, other) {
            (Fault::Offline { actor: a, window: w }, Fault::Offline { actor: b, window: v })
            | (Fault::Drop { to: a, window: w }, Fault::Drop { to: b, window: v }) => a == b && w.overlaps(v),
            (Fault::KillWorker { assignment: a, .. }, Fault::KillWorker { assignment: b, .. }) => a == b,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkerBehavior {
    #[default]
    Honest,
    /// Test double: before reporting, stores its decrypted inputs in the
    /// clear, dressed up as a sealed blob.
    LeakyReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionSource {
    /// The n-th dataset this client uploaded (0-based).
    Upload(usize),
    /// Input of the n-th prediction this client requested (0-based).
    Prediction(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum Action {
    DefineChallenge {
        challenge_id: ChallengeId,
        #[serde(default)]
        description: String,
        label_set: Vec<Label>,
    },
    Fund {
        client: String,
        amount: Credits,
    },
    Upload {
        client: String,
        challenge_id: ChallengeId,
        csv: String,
        #[serde(default = "raw_data")]
        kind: RecordKind,
    },
    SubmitAlgorithm {
        client: String,
        challenge_id: ChallengeId,
        spec: serde_json::Value,
    },
    RequestPrediction {
        client: String,
        challenge_id: ChallengeId,
        csv: String,
        payment: Credits,
    },
    /// `request` is the 0-based index among this client's predictions.
    FetchPrediction {
        client: String,
        request: usize,
    },
    Correct {
        client: String,
        source: CorrectionSource,
        row_index: usize,
        label: Label,
    },
    StartContributivity {
        challenge_id: ChallengeId,
    },
    Audit {
        client: String,
    },
    /// Lets workers drain the queue. Implicit after every action when
    /// `auto_workers` is set.
    RunWorkers,
}

fn raw_data() -> RecordKind {
    RecordKind::RawData
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::DefineChallenge { .. } => "define-challenge",
            Action::Fund { .. } => "fund",
            Action::Upload { .. } => "upload",
            Action::SubmitAlgorithm { .. } => "submit-algorithm",
            Action::RequestPrediction { .. } => "request-prediction",
            Action::FetchPrediction { .. } => "fetch-prediction",
            Action::Correct { .. } => "correct",
            Action::StartContributivity { .. } => "start-contributivity",
            Action::Audit { .. } => "audit",
            Action::RunWorkers => "run-workers",
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_top_k() -> usize {
    3
}

fn default_fee_rate() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub custodian_count: usize,
    pub worker_count: usize,
    #[serde(default)]
    pub faults: Vec<Fault>,
    pub scenario: Vec<Action>,
    #[serde(default)]
    pub worker_behavior: WorkerBehavior,
    #[serde(default = "default_true")]
    pub auto_workers: bool,
    #[serde(default = "default_true")]
    pub auto_contributivity: bool,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_fee_rate")]
    pub fee_rate: f64,
}

impl SimConfig {
    pub fn new(seed: u64, custodian_count: usize, worker_count: usize, scenario: Vec<Action>) -> Self {
        SimConfig {
            seed,
            custodian_count,
            worker_count,
            faults: Vec::new(),
            scenario,
            worker_behavior: WorkerBehavior::Honest,
            auto_workers: true,
            auto_contributivity: true,
            top_k: default_top_k(),
            fee_rate: default_fee_rate(),
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, SimError> {
        serde_json::from_slice(bytes).map_err(|e| SimError::Scenario(e.to_string()))
    }

    pub(crate) fn validate(&self) -> Result<(), SimError> {
        if self.custodian_count < 2 {
            return Err(SimError::Scenario(
                "at least two custodians are needed for a share to differ from its key".into(),
            ));
        }
        if self.worker_count == 0 {
            return Err(SimError::Scenario("worker_count must be at least 1".into()));
        }
        for (i, f) in self.faults.iter().enumerate() {
            if let Fault::Offline { window: Window::Ticks { from, until }, .. }
            | Fault::Drop { window: Window::Ticks { from, until }, .. } = f
            {
                if from >= until {
                    return Err(SimError::Scenario(format!("fault {i}: empty tick window")));
                }
            }
            if let Fault::KillWorker { assignment: 0, .. }
            | Fault::Offline { window: Window::Step { assignment: 0, .. }, .. }
            | Fault::Drop { window: Window::Step { assignment: 0, .. }, .. } = f
            {
                return Err(SimError::Scenario(format!("fault {i}: assignments count from 1")));
            }
            if self.faults[..i].iter().any(|g| g.conflicts(f)) {
                return Err(SimError::ConflictingFault(f.clone()));
            }
        }
        Ok(())
    }
}

/// Adds `fault` to the plan. Two faults conflict when they target the same
/// actor with overlapping windows, or kill the same assignment twice.
pub fn inject_fault(config: &SimConfig, fault: Fault) -> Result<SimConfig, SimError> {
    if config.faults.iter().any(|f| f.conflicts(&fault)) {
        return Err(SimError::ConflictingFault(fault));
    }
    let mut out = config.clone();
    out.faults.push(fault);
    Ok(out)
}
