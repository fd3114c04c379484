//! The data owner's program: holds the identity and every symmetric key,
//! encrypts before anything leaves, and audits the ledger.
//!
//! Every upload follows the same order: put the sealed blob, deposit one
//! share per custodian, then register. Registration is the only step the
//! orchestrator sees, so a failure earlier leaves no trace on the chain.

mod vault;

pub use vault::{KeyVault, PendingPrediction, VaultRecord, KDF_ITERATIONS, KDF_LANES, KDF_MEMORY_KIB};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use zeroize::Zeroizing;

use crate::compute::{parse_unlabeled_csv, ComputeError, Dataset, Row, TrainerSpec};
use crate::cryptobox::{decrypt_blob, encrypt_blob, generate_key, open_sealed, split_key, CryptoError, SealedEnvelope};
use crate::ledger::{
    query_learning, query_predictions, verify_chain, ChainIndex, ChainVerdict, Event, LearningTuple, PredictionTuple,
    RecordKind, TupleFilter,
};
use crate::orchestrator::{BenchmarkRow, OrchestratorError};
use crate::service::{Platform, PredictionOrder, RegisterRequest, ServiceError, TaskView};
use crate::storage::BlobKind;
use crate::types::{AccountId, BlobId, ChallengeId, Credits, Label, TaskId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClientError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("label `{0}` is not in the challenge label set")]
    LabelMismatch(Label),
    #[error("unknown trainer `{0}`")]
    UnknownTrainer(String),
    #[error("content already registered as {0}")]
    DuplicateRegistration(BlobId),
    #[error("balance {available} is below the {needed} required")]
    InsufficientBalance { available: Credits, needed: Credits },
    #[error("no prediction recorded for {0} yet")]
    NotReady(TaskId),
    #[error("prediction output is not addressed to this identity")]
    DecryptionFailed,
    #[error("record {0} is not owned by this vault")]
    NotOwner(BlobId),
    #[error("row {index} out of range for a {rows}-row dataset")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("label `{0}` is not in the challenge label set")]
    BadLabel(Label),
    #[error("wrong passphrase or corrupted vault")]
    AuthenticationFailed,
    #[error("vault: {0}")]
    Vault(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Service(ServiceError),
}

impl From<ServiceError> for ClientError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Orchestrator(OrchestratorError::DuplicateRegistration(id)) => ClientError::DuplicateRegistration(id),
            ServiceError::Orchestrator(OrchestratorError::InsufficientBalance { available, needed, .. }) => {
                ClientError::InsufficientBalance { available, needed }
            }
            other => ClientError::Service(other),
        }
    }
}

impl From<ComputeError> for ClientError {
    fn from(e: ComputeError) -> Self {
        match e {
            ComputeError::UnknownLabel(l) => ClientError::LabelMismatch(l),
            ComputeError::UnknownTrainer(n) => ClientError::UnknownTrainer(n),
            other => ClientError::Parse(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationCorrection {
    pub source_record_id: BlobId,
    pub row_index: usize,
    pub corrected_label: Label,
    pub annotator: AccountId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub verdict: ChainVerdict,
    pub blocks: usize,
    /// Records on the chain owned by the caller, plus prediction inputs
    /// held in the vault.
    pub own_records: Vec<BlobId>,
    pub learning: Vec<LearningTuple>,
    pub predictions: Vec<PredictionTuple>,
}

/// Decrypted view of one vault record, for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRows {
    pub record_id: BlobId,
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    /// Absent for prediction inputs.
    pub labels: Option<Vec<Label>>,
}

fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

fn header(bytes: &[u8]) -> Result<Vec<String>, ClientError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let h = reader.headers().map_err(|e| ClientError::Parse(e.to_string()))?;
    let mut names: Vec<String> = h.iter().map(|s| s.trim().to_string()).collect();
    if names.last().map(String::as_str) == Some("label") {
        names.pop();
    }
    Ok(names)
}

pub struct Client<R> {
    vault: KeyVault,
    rng: R,
}

impl<R> std::fmt::Debug for Client<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client").field("vault", &self.vault).finish_non_exhaustive()
    }
}

impl<R: RngCore + CryptoRng> Client<R> {
    pub fn new(vault: KeyVault, rng: R) -> Self {
        Client { vault, rng }
    }

    pub fn vault(&self) -> &KeyVault {
        &self.vault
    }

    pub fn rng(&mut self) -> &mut R {
        &mut self.rng
    }

    pub fn into_vault(self) -> KeyVault {
        self.vault
    }

    pub fn account(&self) -> AccountId {
        self.vault.account()
    }

    /// Encrypt, store, split, and optionally register. The vault learns
    /// the key only once every step has succeeded.
    fn store<P: Platform + ?Sized>(
        &mut self,
        platform: &mut P,
        plaintext: &[u8],
        kind: Option<RecordKind>,
        challenge_id: &ChallengeId,
        rows: usize,
    ) -> Result<BlobId, ClientError> {
        let digest = sha256(plaintext);
        if kind.is_some() {
            if let Some(id) = self.vault.holds_content(&digest) {
                return Err(ClientError::DuplicateRegistration(id));
            }
        }
        let key = generate_key(&mut self.rng)?;
        let sealed = encrypt_blob(&key, plaintext, &mut self.rng)?;
        let blob_kind = match kind {
            Some(RecordKind::Algorithm) => BlobKind::Algorithm,
            _ => BlobKind::RawData,
        };
        let id = platform.put_blob(&sealed, blob_kind)?;
        let shares = split_key(id, &key, &platform.custodians(), &mut self.rng)?;
        for (node, share) in &shares.shares {
            platform.deposit_share(node, &id, share)?;
        }
        if let Some(kind) = kind {
            platform.register_data(&RegisterRequest {
                owner: self.account(),
                record_id: id,
                kind,
                challenge_id: challenge_id.clone(),
            })?;
        }
        self.vault
            .insert_record(id, &key, challenge_id.clone(), kind, digest, rows);
        Ok(id)
    }

    /// Uploads a labeled CSV as raw data or validation data.
    pub fn upload_data<P: Platform + ?Sized>(
        &mut self,
        platform: &mut P,
        csv: &[u8],
        challenge_id: &ChallengeId,
        kind: RecordKind,
    ) -> Result<BlobId, ClientError> {
        if !matches!(kind, RecordKind::RawData | RecordKind::Validation) {
            return Err(ClientError::Parse(format!("cannot upload a dataset as {kind:?}")));
        }
        let dataset = Dataset::parse_csv(csv)?;
        let challenge = platform.challenge(challenge_id)?;
        dataset.check_labels(&challenge.label_set)?;
        self.store(platform, csv, Some(kind), challenge_id, dataset.len())
    }

    /// Stores the canonical JSON of a trainer spec as an algorithm record.
    pub fn submit_algorithm<P: Platform + ?Sized>(
        &mut self,
        platform: &mut P,
        spec_json: &[u8],
        challenge_id: &ChallengeId,
    ) -> Result<BlobId, ClientError> {
        let spec = TrainerSpec::from_json(spec_json)?;
        platform.challenge(challenge_id)?;
        self.store(platform, &spec.to_json(), Some(RecordKind::Algorithm), challenge_id, 0)
    }

    pub fn request_prediction<P: Platform + ?Sized>(
        &mut self,
        platform: &mut P,
        csv: &[u8],
        challenge_id: &ChallengeId,
        payment: Credits,
    ) -> Result<TaskView, ClientError> {
        let rows = parse_unlabeled_csv(csv)?;
        if rows.is_empty() {
            return Err(ClientError::Parse("no rows to predict".into()));
        }
        let account = self.account();
        let available = platform.balance(&account)?;
        if available < payment {
            return Err(ClientError::InsufficientBalance {
                available,
                needed: payment,
            });
        }
        let input = self.store(platform, csv, None, challenge_id, rows.len())?;
        let view = platform.request_prediction(&PredictionOrder {
            requester: account,
            requester_key: self.vault.public_key(),
            input_record_id: input,
            challenge_id: challenge_id.clone(),
            payment,
        })?;
        self.vault.insert_prediction(
            view.task_id.clone(),
            PendingPrediction {
                input_record_id: input,
                challenge_id: challenge_id.clone(),
                rows: rows.len(),
            },
        );
        Ok(view)
    }

    /// Labels aligned to the input rows.
    pub fn fetch_prediction<P: Platform + ?Sized>(&mut self, platform: &mut P, task_id: &TaskId) -> Result<Vec<Label>, ClientError> {
        let chain = platform.chain()?;
        let output = chain.iter().find_map(|b| match &b.event {
            Event::PredictionRecorded {
                task_id: t,
                sealed_output_id,
                ..
            } if t == task_id => Some(*sealed_output_id),
            _ => None,
        });
        let output = output.ok_or_else(|| ClientError::NotReady(task_id.clone()))?;
        let stored = platform.get_blob(&output)?;
        let envelope = SealedEnvelope::from_blob(&stored.sealed).map_err(|_| ClientError::DecryptionFailed)?;
        let plain = Zeroizing::new(open_sealed(self.vault.identity(), &envelope).map_err(|_| ClientError::DecryptionFailed)?);
        let labels: Vec<Label> = serde_json::from_slice(&plain).map_err(|e| ClientError::Parse(e.to_string()))?;
        if let Some(pending) = self.vault.predictions().get(task_id) {
            if pending.rows != labels.len() {
                return Err(ClientError::Parse(format!(
                    "{} labels for {} input rows",
                    labels.len(),
                    pending.rows
                )));
            }
        }
        Ok(labels)
    }

    /// Verifies the chain and lists every operation touching the caller's
    /// records or algorithms. An invalid chain yields no operation list.
    pub fn audit<P: Platform + ?Sized>(&self, platform: &mut P) -> Result<AuditReport, ClientError> {
        let chain = platform.chain()?;
        let pubkey = platform.orchestrator_pubkey()?;
        let verdict = verify_chain(&chain, &pubkey);
        let mut report = AuditReport {
            verdict,
            blocks: chain.len(),
            own_records: Vec::new(),
            learning: Vec::new(),
            predictions: Vec::new(),
        };
        if !verdict.is_valid() {
            return Ok(report);
        }
        let mut index = ChainIndex::default();
        for b in &chain {
            index.apply(&b.event);
        }
        let me = self.account();
        let mut mine: BTreeSet<BlobId> = index
            .records
            .iter()
            .filter(|(_, r)| r.owner == me)
            .map(|(id, _)| *id)
            .collect();
        mine.extend(self.vault.records().iter().filter(|(_, r)| r.kind.is_none()).map(|(id, _)| *id));
        let touches = |task: &TaskId, data: &BlobId| {
            mine.contains(data)
                || index
                    .tasks
                    .get(task)
                    .is_some_and(|t| mine.contains(&t.algorithm_or_model_id) || t.request.as_ref().is_some_and(|r| r.requester == me))
        };
        report.learning = query_learning(&chain, &TupleFilter::All)
            .map_err(|e| ClientError::Parse(e.to_string()))?
            .into_iter()
            .filter(|t| touches(&t.task_id, &t.data_id))
            .collect();
        report.predictions = query_predictions(&chain, &TupleFilter::All)
            .map_err(|e| ClientError::Parse(e.to_string()))?
            .into_iter()
            .filter(|t| touches(&t.task_id, &t.data_id))
            .collect();
        report.own_records = mine.into_iter().collect();
        Ok(report)
    }

    /// Fetches and decrypts one of the caller's records locally.
    pub fn record_rows<P: Platform + ?Sized>(&self, platform: &mut P, record_id: &BlobId) -> Result<RecordRows, ClientError> {
        let record = self
            .vault
            .record(record_id)
            .ok_or(ClientError::NotOwner(*record_id))?;
        if record.kind == Some(RecordKind::Algorithm) {
            return Err(ClientError::Parse("algorithm records have no rows".into()));
        }
        let stored = platform.get_blob(record_id)?;
        let plain = Zeroizing::new(decrypt_blob(&record.key(), &stored.sealed)?);
        if record.kind.is_some() {
            let ds = Dataset::parse_csv(&plain)?;
            Ok(RecordRows {
                record_id: *record_id,
                feature_names: ds.feature_names,
                labels: Some(ds.rows.iter().map(|r| r.label.clone()).collect()),
                features: ds.rows.into_iter().map(|r| r.features).collect(),
            })
        } else {
            Ok(RecordRows {
                record_id: *record_id,
                feature_names: header(&plain)?,
                features: parse_unlabeled_csv(&plain)?,
                labels: None,
            })
        }
    }

    /// Turns one corrected row into a fresh single-row raw-data record.
    /// The source may be an owned dataset or a prediction input.
    pub fn submit_correction<P: Platform + ?Sized>(
        &mut self,
        platform: &mut P,
        correction: &AnnotationCorrection,
    ) -> Result<BlobId, ClientError> {
        let source = correction.source_record_id;
        if correction.annotator != self.account() {
            return Err(ClientError::NotOwner(source));
        }
        let challenge_id = match self.vault.record(&source) {
            Some(r) if r.kind != Some(RecordKind::Algorithm) => r.challenge_id.clone(),
            _ => return Err(ClientError::NotOwner(source)),
        };
        let rows = self.record_rows(platform, &source)?;
        let features = rows
            .features
            .get(correction.row_index)
            .ok_or(ClientError::IndexOutOfRange {
                index: correction.row_index,
                rows: rows.features.len(),
            })?
            .clone();
        let challenge = platform.challenge(&challenge_id)?;
        if !challenge.label_set.contains(&correction.corrected_label) {
            return Err(ClientError::BadLabel(correction.corrected_label.clone()));
        }
        let ds = Dataset {
            feature_names: rows.feature_names,
            rows: vec![Row {
                features,
                label: correction.corrected_label.clone(),
            }],
        };
        self.store(platform, &ds.to_csv(), Some(RecordKind::RawData), &challenge_id, 1)
    }

    pub fn benchmark<P: Platform + ?Sized>(&self, platform: &mut P, challenge_id: &ChallengeId) -> Result<Vec<BenchmarkRow>, ClientError> {
        Ok(platform.benchmark(challenge_id)?)
    }

    pub fn balance<P: Platform + ?Sized>(&self, platform: &mut P) -> Result<Credits, ClientError> {
        Ok(platform.balance(&self.account())?)
    }
}
