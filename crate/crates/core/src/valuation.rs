//! Leave-one-out contributivity and the credit economy.
//!
//! A datum's raw contribution is how much validation performance drops when
//! the model is retrained without it, clamped at zero. Scores are the raw
//! contributions normalized to sum to one; if nothing contributes, all data
//! share equally. Prediction payments pay an infrastructure fee first, then
//! split the rest evenly between the algorithm owner and the data owners,
//! the latter by score. All amounts are integer credits and conserved
//! exactly.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::ledger::SplitEntry;
use crate::types::{AccountId, BlobId, ChallengeId, Credits};

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
pub enum ValuationError {
    #[error("no leave-one-out performance for datum {0}")]
    MissingPerformance(BlobId),
    #[error("performance {0} outside [0,1]")]
    InvalidPerformance(f64),
    #[error("contributivity vector has no entries")]
    EmptyContributivity,
    #[error("no benchmark algorithm to value data with")]
    NoModelAvailable,
    #[error("nothing to value: empty data set")]
    NoData,
    #[error("fee rate {0} outside [0,1)")]
    InvalidFeeRate(f64),
    #[error("payment total must be positive")]
    ZeroTotal,
    #[error("no owner known for datum {0}")]
    UnknownOwner(BlobId),
    #[error("account {account} holds {balance}, needs {needed}")]
    InsufficientBalance {
        account: AccountId,
        balance: Credits,
        needed: Credits,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributivityEntry {
    pub data_id: BlobId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributivityVector {
    pub challenge_id: ChallengeId,
    pub basis_performance: f64,
    pub entries: Vec<ContributivityEntry>,
}

impl ContributivityVector {
    pub fn score(&self, data_id: &BlobId) -> Option<f64> {
        self.entries.iter().find(|e| &e.data_id == data_id).map(|e| e.score)
    }

    /// Equal shares; used when no leave-one-out round has completed yet.
    pub fn uniform(challenge_id: ChallengeId, data_ids: &[BlobId]) -> Self {
        let mut ids = data_ids.to_vec();
        ids.sort();
        ids.dedup();
        let n = ids.len() as f64;
        ContributivityVector {
            challenge_id,
            basis_performance: 0.0,
            entries: ids
                .into_iter()
                .map(|data_id| ContributivityEntry { data_id, score: 1.0 / n })
                .collect(),
        }
    }
}

fn check_perf(p: f64) -> Result<(), ValuationError> {
    if p.is_finite() && (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ValuationError::InvalidPerformance(p))
    }
}

pub fn compute_contributivity(
    challenge_id: ChallengeId,
    data_ids: &[BlobId],
    perf_full: f64,
    perf_without: &BTreeMap<BlobId, f64>,
) -> Result<ContributivityVector, ValuationError> {
    check_perf(perf_full)?;
    let mut ids = data_ids.to_vec();
    ids.sort();
    ids.dedup();
    let mut raw = Vec::with_capacity(ids.len());
    for id in &ids {
        let without = *perf_without
            .get(id)
            .ok_or(ValuationError::MissingPerformance(*id))?;
        check_perf(without)?;
        raw.push((perf_full - without).max(0.0));
    }
    let total: f64 = raw.iter().sum();
    let n = ids.len() as f64;
    let entries = ids
        .into_iter()
        .zip(raw)
        .map(|(data_id, r)| ContributivityEntry {
            data_id,
            score: if total > 0.0 { r / total } else { 1.0 / n },
        })
        .collect();
    Ok(ContributivityVector {
        challenge_id,
        basis_performance: perf_full,
        entries,
    })
}

/// One retraining job of a leave-one-out round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShadowJob {
    pub algorithm_id: BlobId,
    pub data_ids: Vec<BlobId>,
    /// `None` for the full-set run.
    pub left_out: Option<BlobId>,
}

/// The full-set job followed by one job per left-out datum, in ascending
/// data id order.
pub fn orchestrate_loo_jobs(
    best_algorithm_id: Option<BlobId>,
    data_ids: &[BlobId],
) -> Result<Vec<ShadowJob>, ValuationError> {
    let algorithm_id = best_algorithm_id.ok_or(ValuationError::NoModelAvailable)?;
    if data_ids.is_empty() {
        return Err(ValuationError::NoData);
    }
    let mut ids = data_ids.to_vec();
    ids.sort();
    ids.dedup();
    let mut jobs = vec![ShadowJob {
        algorithm_id,
        data_ids: ids.clone(),
        left_out: None,
    }];
    for out in &ids {
        jobs.push(ShadowJob {
            algorithm_id,
            data_ids: ids.iter().filter(|d| *d != out).copied().collect(),
            left_out: Some(*out),
        });
    }
    Ok(jobs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataShare {
    pub data_id: BlobId,
    pub account_id: AccountId,
    pub amount: Credits,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentSplit {
    pub total: Credits,
    pub infra_account: AccountId,
    pub infrastructure_fee: Credits,
    pub algorithm_owner: AccountId,
    pub algorithm_share: Credits,
    pub data_shares: Vec<DataShare>,
}

impl PaymentSplit {
    pub fn entries(&self) -> Vec<SplitEntry> {
        let mut out = vec![
            SplitEntry {
                account_id: self.infra_account.clone(),
                amount: self.infrastructure_fee,
            },
            SplitEntry {
                account_id: self.algorithm_owner.clone(),
                amount: self.algorithm_share,
            },
        ];
        out.extend(self.data_shares.iter().map(|d| SplitEntry {
            account_id: d.account_id.clone(),
            amount: d.amount,
        }));
        out
    }

    pub fn distributed(&self) -> Credits {
        self.infrastructure_fee + self.algorithm_share + self.data_shares.iter().map(|d| d.amount).sum::<Credits>()
    }
}

/// Fee rates are applied in parts per million so the floor is exact.
fn fee_ppm(fee_rate: f64) -> Result<u64, ValuationError> {
    if !(0.0..1.0).contains(&fee_rate) {
        return Err(ValuationError::InvalidFeeRate(fee_rate));
    }
    Ok((fee_rate * 1_000_000.0).round() as u64)
}

pub fn split_payment(
    total: Credits,
    contributivity: &ContributivityVector,
    owner_of: &BTreeMap<BlobId, AccountId>,
    algorithm_owner: &AccountId,
    fee_rate: f64,
    infra_account: &AccountId,
) -> Result<PaymentSplit, ValuationError> {
    if total == 0 {
        return Err(ValuationError::ZeroTotal);
    }
    if contributivity.entries.is_empty() {
        return Err(ValuationError::EmptyContributivity);
    }
    let fee = ((total as u128 * fee_ppm(fee_rate)? as u128) / 1_000_000) as Credits;
    let rest = total - fee;
    let algorithm_share = rest / 2;
    let pool = rest - algorithm_share;

    let mut shares = Vec::with_capacity(contributivity.entries.len());
    let mut allocated: Credits = 0;
    for e in &contributivity.entries {
        let owner = owner_of
            .get(&e.data_id)
            .ok_or(ValuationError::UnknownOwner(e.data_id))?;
        let want = (e.score.max(0.0) * pool as f64).floor() as Credits;
        let amount = want.min(pool - allocated);
        allocated += amount;
        shares.push(DataShare {
            data_id: e.data_id,
            account_id: owner.clone(),
            amount,
        });
    }

    // Leftover credits go one at a time to positive-score data, highest
    // score first, ascending data id among equals. Zero-score data never
    // receive any.
    let mut order: Vec<usize> = (0..shares.len())
        .filter(|&i| contributivity.entries[i].score > 0.0)
        .collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&contributivity.entries[a], &contributivity.entries[b]);
        eb.score
            .partial_cmp(&ea.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(ea.data_id.cmp(&eb.data_id))
    });
    let mut leftover = pool - allocated;
    while leftover > 0 && !order.is_empty() {
        for &i in &order {
            if leftover == 0 {
                break;
            }
            shares[i].amount += 1;
            leftover -= 1;
        }
    }

    Ok(PaymentSplit {
        total,
        infra_account: infra_account.clone(),
        infrastructure_fee: fee,
        algorithm_owner: algorithm_owner.clone(),
        algorithm_share,
        data_shares: shares,
    })
}

/// Account balances. Credits only move; `fund` is the sole source.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Balances(pub BTreeMap<AccountId, Credits>);

impl Balances {
    pub fn balance(&self, account: &AccountId) -> Credits {
        self.0.get(account).copied().unwrap_or(0)
    }

    pub fn fund(&mut self, account: &AccountId, amount: Credits) {
        *self.0.entry(account.clone()).or_insert(0) += amount;
    }

    pub fn total(&self) -> u128 {
        self.0.values().map(|v| *v as u128).sum()
    }

    /// Debits `payer` the split's total and credits each recipient,
    /// atomically. Returns the split entries to record on the ledger.
    pub fn apply_split(&mut self, payer: &AccountId, split: &PaymentSplit) -> Result<Vec<SplitEntry>, ValuationError> {
        let entries = split.entries();
        self.apply_entries(payer, &entries)?;
        Ok(entries)
    }

    pub fn apply_entries(&mut self, payer: &AccountId, entries: &[SplitEntry]) -> Result<(), ValuationError> {
        let needed: Credits = entries.iter().map(|e| e.amount).sum();
        let balance = self.balance(payer);
        if balance < needed {
            return Err(ValuationError::InsufficientBalance {
                account: payer.clone(),
                balance,
                needed,
            });
        }
        *self.0.entry(payer.clone()).or_insert(0) -= needed;
        for e in entries {
            *self.0.entry(e.account_id.clone()).or_insert(0) += e.amount;
        }
        Ok(())
    }
}
