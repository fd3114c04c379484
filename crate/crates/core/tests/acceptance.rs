//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use morpheo_core::client::{Client, ClientError, KeyVault};
use morpheo_core::clock::LogicalClock;
use morpheo_core::compute::{logreg_gradient, logreg_loss, train, Dataset, Parameters, Row, TrainerSpec};
use morpheo_core::cryptobox::{reconstruct_key, split_key, SealedBlob, SymmetricKey};
use morpheo_core::ledger::{self, verify_chain, verify_ndjson, ChainVerdict, Event, RecordKind, TaskKind};
use morpheo_core::local::LocalNetwork;
use morpheo_core::orchestrator::{Orchestrator, OrchestratorConfig};
use morpheo_core::service::{RegisterRequest, TaskResult};
use morpheo_core::simnet::{inject_fault, run_scenario, Delivery, Fault, SimConfig, Step, TraceEvent, Window, WorkerBehavior, STORAGE};
use morpheo_core::storage::{BlobKind, BlobStore};
use morpheo_core::testkit::{self, scenarios};
use morpheo_core::types::{AccountId, BlobId, ChallengeId, Credits, NodeId};
use morpheo_core::valuation::{split_payment, Balances, ContributivityEntry, ContributivityVector};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "end-to-end workflow", workflow),
        (2, "data privacy under faults", privacy),
        (3, "key splitting", key_splitting),
        (4, "ledger integrity and replay", ledger_integrity),
        (5, "trainer correctness", trainers),
        (6, "contributivity", contributivity),
        (7, "credit conservation", conservation),
        (8, "scheduling", scheduling),
        (9, "sealed predictions", sealed_predictions),
    ];
    let mut failed = 0;
    for (n, name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n} {name}: {detail} ({secs:.2}s)"),
            Err(why) => {
                failed += 1;
                println!("FAIL {n} {name}: {why} ({secs:.2}s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn challenge() -> ChallengeId {
    ChallengeId::from("c")
}

fn local_net(seed: u64) -> LocalNetwork {
    let mut net = LocalNetwork::new(seed, 3, OrchestratorConfig::default(), Arc::new(LogicalClock::new(0)));
    net.orchestrator
        .define_challenge(challenge(), "acceptance".into(), vec!["A".into(), "B".into()])
        .unwrap();
    net
}

fn client(seed: u64) -> Client<ChaCha20Rng> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let vault = KeyVault::generate(&mut rng);
    Client::new(vault, rng)
}

fn workflow() -> Outcome {
    let start = Instant::now();
    let o = run_scenario(&scenarios::workflow(1, 3)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let orch = &o.network.orchestrator;
    let performances = orch
        .ledger()
        .blocks()
        .iter()
        .filter(|b| matches!(b.event, Event::PerformanceRecorded { .. }))
        .count();
    let board = orch.benchmark(&scenarios::CHALLENGE.into()).map_err(|e| e.to_string())?;
    let verdict = verify_chain(orch.ledger().blocks(), &orch.pubkey());
    ensure!(o.actions.iter().all(|a| a.result.is_ok()), "an action failed: {:?}", o.actions);
    ensure!(performances >= 2, "{performances} performances recorded");
    ensure!(!board.is_empty(), "empty benchmark");
    ensure!(verdict.is_valid(), "chain {verdict:?}");
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!(
        "{performances} performances, {} benchmark rows, {} blocks",
        board.len(),
        orch.ledger().len()
    ))
}

/// One fault per seed, cycling through the kinds the simulator supports.
/// Network faults are short outages after setup so that work still runs.
fn faulted(seed: u64) -> SimConfig {
    let base = scenarios::workflow_with_prediction(seed, 2 + (seed % 2) as usize);
    let fault = match seed % 5 {
        0 => None,
        1 => Some(Fault::Offline {
            actor: format!("node-{}", seed % 3),
            window: Window::Step {
                assignment: 1 + seed % 3,
                step: Step::Fetch,
            },
        }),
        2 => Some(Fault::KillWorker {
            assignment: 1 + seed % 4,
            step: [Step::Fetch, Step::Run, Step::Report][(seed % 3) as usize],
        }),
        3 => Some(Fault::Drop {
            to: STORAGE.into(),
            window: Window::Ticks {
                from: 60 + seed * 13 % 200,
                until: 66 + seed * 13 % 200,
            },
        }),
        _ => Some(Fault::Offline {
            actor: "orchestrator".into(),
            window: Window::Ticks {
                from: 60 + seed * 11 % 200,
                until: 66 + seed * 11 % 200,
            },
        }),
    };
    match fault {
        Some(f) => inject_fault(&base, f).expect("single fault"),
        None => base,
    }
}

fn privacy() -> Outcome {
    let mut detected = 0;
    let mut disrupted = 0;
    for seed in 0..50 {
        let config = faulted(seed);
        let o = run_scenario(&config).map_err(|e| format!("seed {seed}: {e}"))?;
        let verdict = o.privacy();
        ensure!(verdict.valid, "seed {seed}: {:?}", verdict.violations);
        ensure!(o.key_leaks.is_empty(), "seed {seed}: {:?}", o.key_leaks);
        ensure!(
            o.trace.isolated_message_counts().values().all(|n| *n == 0),
            "seed {seed}: isolated worker sent messages"
        );
        let undelivered = o
            .trace
            .events
            .iter()
            .any(|e| matches!(e, TraceEvent::Message { delivery, .. } if *delivery != Delivery::Delivered));
        if undelivered || o.workers.iter().any(|w| w.end.starts_with("killed")) {
            disrupted += 1;
        }

        let mut leaky = config.clone();
        leaky.worker_behavior = WorkerBehavior::LeakyReport;
        let o = run_scenario(&leaky).map_err(|e| format!("seed {seed} leaky: {e}"))?;
        let verdict = o.privacy();
        if !verdict.valid && verdict.violations.iter().any(|v| v.actor.starts_with("worker-")) {
            detected += 1;
        }
    }
    ensure!(detected == 50, "leaky worker detected in {detected}/50 runs");
    Ok(format!("50/50 runs private ({disrupted} disrupted by a fault), leaky worker detected 50/50"))
}

fn xor_all<'a>(parts: impl Iterator<Item = &'a [u8; 32]>) -> [u8; 32] {
    let mut out = [0u8; 32];
    for p in parts {
        for (o, b) in out.iter_mut().zip(p) {
            *o ^= b;
        }
    }
    out
}

fn node_ids(n: usize) -> Vec<NodeId> {
    (0..n).map(|i| NodeId::from(format!("node-{i}").as_str())).collect()
}

fn key_splitting() -> Outcome {
    let mut runner = TestRunner::new(PropConfig {
        cases: 1000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let strategy = (any::<[u8; 32]>(), 1usize..=7, any::<u64>());
    runner
        .run(&strategy, |(key, n, seed)| {
            let key = SymmetricKey::from_bytes(key);
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let set = split_key(BlobId([1; 32]), &key, &node_ids(n), &mut rng).unwrap();
            let shares: Vec<_> = set.shares.iter().map(|(_, s)| s.clone()).collect();
            let rebuilt = reconstruct_key(&shares, n).unwrap();
            prop_assert_eq!(rebuilt.as_bytes(), key.as_bytes());
            // Every strict subset is refused.
            for mask in 0u32..(1 << n) - 1 {
                let subset: Vec<_> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| shares[i].clone()).collect();
                prop_assert!(reconstruct_key(&subset, n).is_err());
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    // Any n-1 shares XOR to something independent of the key: compare the
    // bit balance for an all-zero and an all-one key.
    let trials: u64 = 4000;
    let n = 4;
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    let mut worst_sigma: f64 = 0.0;
    for skip in 0..n {
        let mut ones = [0u64; 2];
        for (k, fill) in [0u8, 0xff].into_iter().enumerate() {
            for _ in 0..trials {
                let set = split_key(BlobId([2; 32]), &SymmetricKey::from_bytes([fill; 32]), &node_ids(n), &mut rng).unwrap();
                let x = xor_all(set.shares.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, (_, s))| &s.0));
                ones[k] += x.iter().map(|b| b.count_ones() as u64).sum::<u64>();
            }
        }
        let bits = (trials * 256) as f64;
        let sd = (bits * 0.25).sqrt();
        for count in ones {
            let z = (count as f64 - bits / 2.0).abs() / sd;
            worst_sigma = worst_sigma.max(z);
            ensure!(z <= 3.0, "omitting share {skip}: {count} ones of {bits}, {z:.2} sigma");
        }
        let diff = (ones[0] as f64 - ones[1] as f64).abs() / (sd * 2f64.sqrt());
        ensure!(diff <= 3.0, "omitting share {skip}: keys differ by {diff:.2} sigma");
    }
    Ok(format!("1000 split cases, all strict subsets refused, worst bias {worst_sigma:.2} sigma"))
}

fn ledger_integrity() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(404);
    let mut mutations = 0;
    for chain_no in 0..200 {
        let len = rng.gen_range(1..=100);
        let signer = morpheo_core::cryptobox::Identity::generate(&mut rng);
        let events = testkit::random_events(&mut rng, len);
        let ledger = testkit::build_ledger(signer, events);
        let pubkey = ledger.pubkey();
        let text = ledger::to_ndjson(ledger.blocks());
        ensure!(verify_ndjson(&text, &pubkey).is_valid(), "chain {chain_no} invalid before mutation");
        for _ in 0..25 {
            let pos = rng.gen_range(0..text.len());
            let mut bad = text.clone();
            bad[pos] ^= rng.gen_range(1..=255u8);
            let line = text[..pos].iter().filter(|b| **b == b'\n').count() as u64;
            mutations += 1;
            match verify_ndjson(&bad, &pubkey) {
                ChainVerdict::Invalid { index } if index <= line => {}
                other => return Err(format!("chain {chain_no}: byte {pos} (line {line}) gave {other:?}")),
            }
        }
    }

    let mut replays = 0;
    for seed in 100..110 {
        let o = run_scenario(&faulted(seed)).map_err(|e| e.to_string())?;
        ensure!(o.replay_ok, "seed {seed}: live state differs from replay");
        ensure!(o.network.orchestrator.replay_matches(), "seed {seed}: replay mismatch");
        replays += 1;
    }
    Ok(format!("{mutations} mutations over 200 chains all detected, {replays} replays equal"))
}

fn row(features: &[f64], label: &str) -> Row {
    Row {
        features: features.to_vec(),
        label: label.into(),
    }
}

fn dataset(rows: Vec<Row>) -> Dataset {
    Dataset {
        feature_names: (0..rows[0].features.len()).map(|i| format!("f{i}")).collect(),
        rows,
    }
}

/// Plain gradient descent for one-vs-rest logistic regression, accumulating
/// in row order then feature order.
fn oracle_logreg(rows: &[Row], lr: f64, epochs: u32) -> (Vec<String>, Vec<Vec<f64>>, Vec<f64>) {
    let mut labels: Vec<String> = rows.iter().map(|r| r.label.clone()).collect();
    labels.sort();
    labels.dedup();
    let d = rows[0].features.len();
    let m = rows.len() as f64;
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for label in &labels {
        let mut w = vec![0.0f64; d];
        let mut b = 0.0f64;
        for _ in 0..epochs {
            let mut gw = vec![0.0f64; d];
            let mut gb = 0.0f64;
            for r in rows {
                let mut z = 0.0;
                for j in 0..d {
                    z += w[j] * r.features[j];
                }
                z += b;
                let y = if &r.label == label { 1.0 } else { 0.0 };
                let err = 1.0 / (1.0 + (-z).exp()) - y;
                for j in 0..d {
                    gw[j] += err * r.features[j];
                }
                gb += err;
            }
            for j in 0..d {
                w[j] -= lr * (gw[j] / m);
            }
            b -= lr * (gb / m);
        }
        weights.push(w);
        biases.push(b);
    }
    (labels, weights, biases)
}

fn random_rows(rng: &mut ChaCha20Rng) -> Vec<Row> {
    let d = rng.gen_range(1..=4);
    let m = rng.gen_range(3..=20);
    (0..m)
        .map(|_| {
            let f: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
            row(&f, ["A", "B", "C"][rng.gen_range(0..3)])
        })
        .collect()
}

fn trainers() -> Outcome {
    // Means worked out by hand: A = (9/3, 15/3), B = (2/2, 0/2).
    let ds = dataset(vec![
        row(&[1.0, 2.0], "A"),
        row(&[3.0, 4.0], "A"),
        row(&[5.0, 9.0], "A"),
        row(&[0.5, -1.0], "B"),
        row(&[1.5, 1.0], "B"),
    ]);
    match train(&ds, &TrainerSpec::named("centroid"), None).map_err(|e| e.to_string())? {
        Parameters::Centroids { labels, centroids } => {
            ensure!(labels == ["A", "B"], "labels {labels:?}");
            ensure!(centroids == vec![vec![3.0, 5.0], vec![1.0, 0.0]], "centroids {centroids:?}");
        }
        other => return Err(format!("centroid trainer returned {other:?}")),
    }

    let mut rng = ChaCha20Rng::seed_from_u64(55);
    for instance in 0..20 {
        let rows = random_rows(&mut rng);
        let lr = rng.gen_range(0.01..1.0);
        let epochs = rng.gen_range(1..=60);
        let spec: TrainerSpec = serde_json::from_value(serde_json::json!({
            "name": "logreg",
            "hyperparameters": {"learning_rate": lr, "epochs": epochs}
        }))
        .unwrap();
        let got = train(&dataset(rows.clone()), &spec, None).map_err(|e| e.to_string())?;
        let (labels, weights, biases) = oracle_logreg(&rows, lr, epochs);
        let Parameters::Weights { labels: l, weights: w, biases: b } = got else {
            return Err("logreg returned centroids".into());
        };
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure!(l == labels, "instance {instance}: labels {l:?} vs {labels:?}");
        ensure!(
            w.iter().zip(&weights).all(|(a, e)| bits(a) == bits(e)) && bits(&b) == bits(&biases),
            "instance {instance}: weights differ from the oracle"
        );
    }

    let mut worst: f64 = 0.0;
    for instance in 0..20 {
        let rows = random_rows(&mut rng);
        let d = rows[0].features.len();
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = rng.gen_range(-1.0..1.0);
        let targets: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r.label == "A"))).collect();
        let (gw, gb) = logreg_gradient(&w, b, &rows, &targets);
        let h = 1e-6;
        let mut numeric = Vec::with_capacity(d + 1);
        for j in 0..d {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[j] += h;
            down[j] -= h;
            numeric.push((logreg_loss(&up, b, &rows, &targets) - logreg_loss(&down, b, &rows, &targets)) / (2.0 * h));
        }
        numeric.push((logreg_loss(&w, b + h, &rows, &targets) - logreg_loss(&w, b - h, &rows, &targets)) / (2.0 * h));
        let analytic: Vec<f64> = gw.iter().copied().chain([gb]).collect();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
        let rel = norm(&diff) / (norm(&analytic) + norm(&numeric)).max(1e-12);
        worst = worst.max(rel);
        ensure!(rel <= 1e-5, "instance {instance}: relative error {rel:e}");
    }
    Ok(format!("centroids exact, 20 logreg runs bitwise equal, worst gradient rel err {worst:.1e}"))
}

fn contributivity() -> Outcome {
    const VALIDATION: &[u8] = b"x,y,label\n0.5,1,A\n1.5,1,B\n0,0,A\n2,2,B\n";
    const INFORMATIVE: &[u8] = b"x,y,label\n0,0,A\n0,2,A\n2,0,B\n2,2,B\n";
    const USELESS: &[u8] = b"x,y,label\n0,1,A\n0,1,A\n0,1,A\n0,1,A\n";
    // Centroids with both sets are (0,1) and (2,1), which classify all four
    // validation rows; without the informative set every row is called A.
    let (full, without_informative, without_useless) = (1.0, 0.5, 1.0);

    let mut net = local_net(61);
    let mut wrng = ChaCha20Rng::seed_from_u64(62);
    let (mut host, mut good, mut idle, mut author, mut buyer) = (client(1), client(2), client(3), client(4), client(5));
    let c = challenge();
    let err = |e: ClientError| e.to_string();
    host.upload_data(&mut net, VALIDATION, &c, RecordKind::Validation).map_err(err)?;
    let d1 = good.upload_data(&mut net, INFORMATIVE, &c, RecordKind::RawData).map_err(err)?;
    let d2 = idle.upload_data(&mut net, USELESS, &c, RecordKind::RawData).map_err(err)?;
    author.submit_algorithm(&mut net, br#"{"name":"centroid"}"#, &c).map_err(err)?;
    net.drain(&mut wrng).map_err(|e| e.to_string())?;

    let vector = net
        .orchestrator
        .contributivity(&c)
        .map_err(|e| e.to_string())?
        .ok_or("no contributivity round completed")?;
    let raw = [(d1, full - without_informative), (d2, full - without_useless)];
    let total: f64 = raw.iter().map(|(_, r)| r).sum();
    ensure!(vector.basis_performance == full, "basis performance {}", vector.basis_performance);
    for (id, r) in raw {
        ensure!(vector.score(&id) == Some(r / total), "score of {id}: {:?} expected {}", vector.score(&id), r / total);
    }
    ensure!(vector.score(&d2) == Some(0.0), "useless datum scored {:?}", vector.score(&d2));
    let sum: f64 = vector.entries.iter().map(|e| e.score).sum();
    ensure!((sum - 1.0).abs() <= 1e-12, "scores sum to {sum}");

    net.orchestrator.fund_account(buyer.account(), 100).map_err(|e| e.to_string())?;
    let view = buyer.request_prediction(&mut net, b"x,y\n0.2,1\n", &c, 100).map_err(err)?;
    net.drain(&mut wrng).map_err(|e| e.to_string())?;
    buyer.fetch_prediction(&mut net, &view.task_id).map_err(err)?;
    let paid_idle = net.orchestrator.balance(&idle.account());
    let paid_good = net.orchestrator.balance(&good.account());
    ensure!(paid_idle == 0, "useless datum owner received {paid_idle}");
    ensure!(paid_good > 0, "informative datum owner received nothing");
    Ok(format!("scores 1 and 0, payout {paid_good} vs {paid_idle}"))
}

fn conservation() -> Outcome {
    let accounts: Vec<AccountId> = (0..6).map(|i| AccountId::from(format!("acct-{i}").as_str())).collect();
    let infra = AccountId::from("infra");
    let mut runner = TestRunner::new(PropConfig {
        cases: 1000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let step = (
        0usize..6,
        1u64..5_000,
        proptest::collection::vec(0u8..4, 1..5),
        0usize..6,
        0u32..999,
    );
    let strategy = (proptest::collection::vec(0u64..10_000, 6), proptest::collection::vec(step, 1..20));
    runner
        .run(&strategy, |(funding, steps)| {
            let mut balances = Balances::default();
            for (a, amount) in accounts.iter().zip(&funding) {
                balances.fund(a, *amount);
            }
            let supply = balances.total();
            for (payer, total, weights, algo, fee_ppt) in steps {
                let ids: Vec<BlobId> = (0..weights.len()).map(|i| BlobId([i as u8 + 1; 32])).collect();
                let sum: u32 = weights.iter().map(|w| u32::from(*w)).sum();
                let vector = if sum == 0 {
                    ContributivityVector::uniform(ChallengeId::from("c"), &ids)
                } else {
                    ContributivityVector {
                        challenge_id: ChallengeId::from("c"),
                        basis_performance: 1.0,
                        entries: ids
                            .iter()
                            .zip(&weights)
                            .map(|(id, w)| ContributivityEntry {
                                data_id: *id,
                                score: f64::from(*w) / f64::from(sum),
                            })
                            .collect(),
                    }
                };
                let owners: BTreeMap<BlobId, AccountId> =
                    ids.iter().enumerate().map(|(i, id)| (*id, accounts[i % 6].clone())).collect();
                let split = split_payment(total, &vector, &owners, &accounts[algo], f64::from(fee_ppt) / 1000.0, &infra)
                    .map_err(|e| TestCaseError::fail(e.to_string()))?;
                prop_assert_eq!(split.distributed(), total);
                for (share, entry) in split.data_shares.iter().zip(&vector.entries) {
                    if entry.score == 0.0 {
                        prop_assert_eq!(share.amount, 0);
                    }
                }
                let before = balances.clone();
                if balances.apply_split(&accounts[payer], &split).is_err() {
                    prop_assert_eq!(&balances, &before);
                    prop_assert!(before.balance(&accounts[payer]) < total);
                }
                prop_assert_eq!(balances.total(), supply);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 random payment sequences conserve the credit supply".into())
}

fn scheduling() -> Outcome {
    let signer = morpheo_core::cryptobox::Identity::generate(&mut ChaCha20Rng::seed_from_u64(81));
    let config = OrchestratorConfig {
        top_k: 3,
        auto_contributivity: false,
        ..OrchestratorConfig::default()
    };
    let mut o = Orchestrator::new(signer, config, Arc::new(LogicalClock::new(0)));
    let mut store = BlobStore::in_memory();
    let c = challenge();
    o.define_challenge(c.clone(), "scheduling".into(), vec!["A".into(), "B".into()])
        .map_err(|e| e.to_string())?;
    let mut counter = 0u64;
    let mut blob = |store: &mut BlobStore| {
        counter += 1;
        let sealed = SealedBlob {
            nonce: [0; 12],
            ciphertext: counter.to_be_bytes().to_vec(),
            tag: [0; 16],
        };
        store.put_blob(sealed, BlobKind::RawData).unwrap()
    };
    let mut register = |o: &mut Orchestrator, store: &mut BlobStore, kind| {
        let id = blob(store);
        let tasks = o
            .register_data(
                &RegisterRequest {
                    owner: AccountId::from("owner"),
                    record_id: id,
                    kind,
                    challenge_id: c.clone(),
                },
                store,
            )
            .unwrap();
        (id, tasks)
    };
    register(&mut o, &mut store, RecordKind::Validation);
    register(&mut o, &mut store, RecordKind::RawData);

    let performances = [0.4, 0.9, 0.7, 0.2, 0.8];
    let mut algorithms = Vec::new();
    for (i, perf) in performances.into_iter().enumerate() {
        let (id, tasks) = register(&mut o, &mut store, RecordKind::Algorithm);
        ensure!(tasks.len() == 1, "algorithm {i} scheduled {} tasks", tasks.len());
        let worker = testkit::worker_key(i as u64 + 1);
        let a = o.next_task(&worker).map_err(|e| e.to_string())?;
        ensure!(a.kind == TaskKind::Learn && a.algorithm_or_model_id == id, "unexpected assignment");
        let model = {
            let sealed = SealedBlob {
                nonce: [1; 12],
                ciphertext: vec![i as u8; 4],
                tag: [1; 16],
            };
            store.put_blob(sealed, BlobKind::Model).unwrap()
        };
        o.record_result(
            &a.task_id,
            &worker,
            &TaskResult::Learn {
                performance: perf,
                model_id: Some(model),
            },
            &mut store,
        )
        .map_err(|e| e.to_string())?;
        algorithms.push((id, perf));
    }
    let (fresh, _) = register(&mut o, &mut store, RecordKind::Algorithm);

    let mut ranked = algorithms.clone();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let mut expected: Vec<BlobId> = ranked.iter().take(3).map(|(id, _)| *id).collect();
    expected.push(fresh);

    let (_, tasks) = register(&mut o, &mut store, RecordKind::RawData);
    let got: Vec<BlobId> = tasks.iter().map(|t| t.algorithm_or_model_id).collect();
    ensure!(got == expected, "scheduled {got:?}, expected {expected:?}");
    Ok("new data scheduled on the top 3 and the never-evaluated algorithm".into())
}

fn sealed_predictions() -> Outcome {
    const DATA: &[u8] = b"x,y,label\n0,0,A\n0,2,A\n2,0,B\n2,2,B\n";
    const VALIDATION: &[u8] = b"x,y,label\n0,1,A\n2,1,B\n";
    let mut net = local_net(91);
    let mut wrng = ChaCha20Rng::seed_from_u64(92);
    let (mut host, mut provider, mut author, mut buyer) = (client(11), client(12), client(13), client(14));
    let c = challenge();
    let err = |e: ClientError| e.to_string();
    host.upload_data(&mut net, VALIDATION, &c, RecordKind::Validation).map_err(err)?;
    provider.upload_data(&mut net, DATA, &c, RecordKind::RawData).map_err(err)?;
    author.submit_algorithm(&mut net, br#"{"name":"centroid"}"#, &c).map_err(err)?;
    net.drain(&mut wrng).map_err(|e| e.to_string())?;

    let payment: Credits = 10;
    net.orchestrator.fund_account(buyer.account(), payment).map_err(|e| e.to_string())?;
    let view = buyer.request_prediction(&mut net, b"x,y\n0.1,1\n1.9,1\n", &c, payment).map_err(err)?;
    net.drain(&mut wrng).map_err(|e| e.to_string())?;
    let labels = buyer.fetch_prediction(&mut net, &view.task_id).map_err(err)?;
    ensure!(labels == ["A", "B"], "requester got {labels:?}");
    for (name, other) in [("host", &mut host), ("provider", &mut provider), ("author", &mut author)] {
        match other.fetch_prediction(&mut net, &view.task_id) {
            Err(ClientError::DecryptionFailed) => {}
            other => return Err(format!("{name} got {other:?}")),
        }
    }
    Ok("requester decrypts, 3 other participants get DecryptionFailed".into())
}
