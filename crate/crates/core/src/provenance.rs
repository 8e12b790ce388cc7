//! Centralized provenance management: stores send/receive logs, rebuilds
//! multi-hop chains per dataset, and verifies them.
//!
//! The service trusts log signatures, not transport — anyone may submit a
//! log, unverifiable ones are rejected at ingest. A chain is an ordered
//! list of hops, each a send/receive pair for one contract; consecutive
//! hops must hand the dataset from the previous receiver to the next
//! sender. The service is optional equipment for a space: exchanges
//! complete without it, only chain reconstruction is unavailable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exchange::{DatasetId, LogId, LogKind, TransferLog};
use crate::trust::{ParticipantId, PublicKey, SpaceId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProvenanceError {
    #[error("log {0} has an invalid signature")]
    BadSignature(LogId),
    #[error("no public key on file for participant {0}")]
    UnknownActor(ParticipantId),
}

/// One dataset handoff: the provider's send log and the consumer's receive
/// log for the same contract. Either side may be missing; that is a gap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub send_log: Option<TransferLog>,
    pub receive_log: Option<TransferLog>,
}

impl Hop {
    pub fn is_complete(&self) -> bool {
        self.send_log.is_some() && self.receive_log.is_some()
    }

    fn order_key(&self) -> (u64, &str) {
        let log = self
            .send_log
            .as_ref()
            .or(self.receive_log.as_ref())
            .expect("hop has at least one log");
        (log.timestamp, &log.log_id)
    }

    pub fn sender(&self) -> Option<&str> {
        self.send_log.as_ref().map(|l| l.actor.as_str())
    }

    pub fn receiver(&self) -> Option<&str> {
        self.receive_log.as_ref().map(|l| l.actor.as_str())
    }
}

/// Reconstructed transfer path of one dataset across participants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceChain {
    pub dataset_id: DatasetId,
    pub hops: Vec<Hop>,
}

impl ProvenanceChain {
    pub fn gap_count(&self) -> usize {
        self.hops.iter().filter(|h| !h.is_complete()).count()
    }
}

/// Verification verdict; the first failure in check order is reported:
/// signatures, then intra-hop consistency, then the inter-hop chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProvenanceVerdict {
    Ok,
    BrokenLink { hop: usize },
    BadSignature { log_id: LogId },
    ActorMismatch { hop: usize },
}

/// The provenance management service of one space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceService {
    pub space_id: SpaceId,
    pub(crate) logs: BTreeMap<LogId, TransferLog>,
}

impl ProvenanceService {
    pub fn new(space_id: SpaceId) -> Self {
        Self {
            space_id,
            logs: BTreeMap::new(),
        }
    }

    pub fn logs(&self) -> impl Iterator<Item = &TransferLog> {
        self.logs.values()
    }

    /// Store a log after checking its signature against the actor's
    /// registered key. Re-submitting an already stored log id is a no-op.
    pub fn ingest(
        &mut self,
        log: TransferLog,
        resolve_key: impl Fn(&str) -> Option<PublicKey>,
    ) -> Result<LogId, ProvenanceError> {
        if self.logs.contains_key(&log.log_id) {
            return Ok(log.log_id);
        }
        let key = resolve_key(&log.actor)
            .ok_or_else(|| ProvenanceError::BadSignature(log.log_id.clone()))?;
        if !crate::exchange::verify_log_signature(&log, &key) {
            return Err(ProvenanceError::BadSignature(log.log_id.clone()));
        }
        let id = log.log_id.clone();
        self.logs.insert(id.clone(), log);
        Ok(id)
    }

    pub fn logs_for(&self, dataset_id: &str) -> Vec<&TransferLog> {
        let mut logs: Vec<&TransferLog> = self
            .logs
            .values()
            .filter(|l| l.dataset_id == dataset_id)
            .collect();
        logs.sort_by(|a, b| (a.timestamp, &a.log_id).cmp(&(b.timestamp, &b.log_id)));
        logs
    }

    pub fn logs_by_actor(&self, actor: &str) -> Vec<&TransferLog> {
        let mut logs: Vec<&TransferLog> = self
            .logs
            .values()
            .filter(|l| l.actor == actor)
            .collect();
        logs.sort_by(|a, b| (a.timestamp, &a.log_id).cmp(&(b.timestamp, &b.log_id)));
        logs
    }

    /// Rebuild the provenance chain of a dataset from stored send/receive
    /// logs. Logs pair up per contract in timestamp order (log id breaking
    /// ties); unpaired logs surface as incomplete hops. Unknown datasets
    /// give an empty chain.
    pub fn chain(&self, dataset_id: &str) -> ProvenanceChain {
        let mut per_contract: BTreeMap<&str, (Vec<&TransferLog>, Vec<&TransferLog>)> =
            BTreeMap::new();
        for log in self.logs_for(dataset_id) {
            let slot = per_contract.entry(log.contract_id.as_str()).or_default();
            match log.kind {
                LogKind::Send => slot.0.push(log),
                LogKind::Receive => slot.1.push(log),
                LogKind::Payment => {}
            }
        }

        let mut hops = Vec::new();
        for (sends, receives) in per_contract.values() {
            let pairs = sends.len().max(receives.len());
            for i in 0..pairs {
                hops.push(Hop {
                    send_log: sends.get(i).map(|l| (*l).clone()),
                    receive_log: receives.get(i).map(|l| (*l).clone()),
                });
            }
        }
        hops.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
        ProvenanceChain {
            dataset_id: dataset_id.to_string(),
            hops,
        }
    }
}

/// Verify a chain: every signature against the owning registry's keys, every
/// hop internally consistent (complete pair, matching contract and dataset,
/// receive chained onto the send, actors mirroring each other), and every
/// consecutive hop handing over from the previous receiver.
pub fn verify_chain(
    chain: &ProvenanceChain,
    resolve_key: impl Fn(&str) -> Option<PublicKey>,
) -> Result<ProvenanceVerdict, ProvenanceError> {
    for hop in &chain.hops {
        for log in [&hop.send_log, &hop.receive_log].into_iter().flatten() {
            let key = resolve_key(&log.actor)
                .ok_or_else(|| ProvenanceError::UnknownActor(log.actor.clone()))?;
            if !crate::exchange::verify_log_signature(log, &key) {
                return Ok(ProvenanceVerdict::BadSignature {
                    log_id: log.log_id.clone(),
                });
            }
        }
    }

    for (i, hop) in chain.hops.iter().enumerate() {
        let (Some(send), Some(receive)) = (&hop.send_log, &hop.receive_log) else {
            return Ok(ProvenanceVerdict::BrokenLink { hop: i });
        };
        let pair_consistent = send.kind == LogKind::Send
            && receive.kind == LogKind::Receive
            && send.contract_id == receive.contract_id
            && send.dataset_id == chain.dataset_id
            && receive.dataset_id == chain.dataset_id
            && receive.prev_hash == Some(send.log_hash());
        if !pair_consistent {
            return Ok(ProvenanceVerdict::BrokenLink { hop: i });
        }
        if send.actor != receive.counterparty || send.counterparty != receive.actor {
            return Ok(ProvenanceVerdict::ActorMismatch { hop: i });
        }
    }

    for i in 1..chain.hops.len() {
        let previous_receiver = chain.hops[i - 1].receiver();
        let next_sender = chain.hops[i].sender();
        if previous_receiver != next_sender {
            return Ok(ProvenanceVerdict::ActorMismatch { hop: i });
        }
    }

    Ok(ProvenanceVerdict::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exchange::{build_log, Contract, ConsumerDecision};
    use crate::trust::{generate_keypair, sign, KeyPair};

    struct Party {
        id: String,
        keys: KeyPair,
    }

    fn party(id: &str) -> Party {
        Party {
            id: id.to_string(),
            keys: generate_keypair(id.as_bytes()).unwrap(),
        }
    }

    fn resolver(parties: &[&Party]) -> impl Fn(&str) -> Option<PublicKey> {
        let map: BTreeMap<String, PublicKey> = parties
            .iter()
            .map(|p| (p.id.clone(), p.keys.public_key.clone()))
            .collect();
        move |id: &str| map.get(id).cloned()
    }

    fn agreed_contract(id: &str, provider: &str, consumer: &str) -> Contract {
        let mut contract = Contract::proposed(id, provider, consumer, "ds-1", BTreeMap::new());
        contract.resolve(ConsumerDecision::Accept).unwrap();
        contract
    }

    /// Two-hop exchange a->b->c: four logs over two contracts.
    fn two_hop_logs(a: &Party, b: &Party, c: &Party) -> Vec<TransferLog> {
        let ctr1 = agreed_contract("ctr-1", &a.id, &b.id);
        let send1 = build_log("log-1", LogKind::Send, &ctr1, &a.id, &b.id, 10, None, None, &a.keys);
        let recv1 = build_log(
            "log-2", LogKind::Receive, &ctr1, &b.id, &a.id, 11,
            Some(send1.log_hash()), None, &b.keys,
        );
        let ctr2 = agreed_contract("ctr-2", &b.id, &c.id);
        let send2 = build_log("log-3", LogKind::Send, &ctr2, &b.id, &c.id, 20, None, None, &b.keys);
        let recv2 = build_log(
            "log-4", LogKind::Receive, &ctr2, &c.id, &b.id, 21,
            Some(send2.log_hash()), None, &c.keys,
        );
        vec![send1, recv1, send2, recv2]
    }

    #[test]
    fn valid_log_is_stored_and_queryable() {
        let a = party("org-a");
        let b = party("org-b");
        let mut pms = ProvenanceService::new("space-j".into());
        let ctr = agreed_contract("ctr-1", &a.id, &b.id);
        let log = build_log("log-1", LogKind::Send, &ctr, &a.id, &b.id, 10, None, None, &a.keys);
        pms.ingest(log, resolver(&[&a, &b])).unwrap();
        assert_eq!(pms.logs_for("ds-1").len(), 1);
        assert_eq!(pms.logs_by_actor("org-a").len(), 1);
    }

    #[test]
    fn tampered_log_is_rejected_and_not_stored() {
        let a = party("org-a");
        let b = party("org-b");
        let mut pms = ProvenanceService::new("space-j".into());
        let ctr = agreed_contract("ctr-1", &a.id, &b.id);
        let mut log = build_log("log-1", LogKind::Send, &ctr, &a.id, &b.id, 10, None, None, &a.keys);
        log.timestamp += 5;
        assert_eq!(
            pms.ingest(log, resolver(&[&a, &b])),
            Err(ProvenanceError::BadSignature("log-1".into()))
        );
        assert_eq!(pms.logs_for("ds-1").len(), 0);
    }

    #[test]
    fn duplicate_ingest_is_idempotent() {
        let a = party("org-a");
        let b = party("org-b");
        let mut pms = ProvenanceService::new("space-j".into());
        let ctr = agreed_contract("ctr-1", &a.id, &b.id);
        let log = build_log("log-1", LogKind::Send, &ctr, &a.id, &b.id, 10, None, None, &a.keys);
        pms.ingest(log.clone(), resolver(&[&a, &b])).unwrap();
        pms.ingest(log, resolver(&[&a, &b])).unwrap();
        assert_eq!(pms.logs_for("ds-1").len(), 1);
    }

    #[test]
    fn two_hop_chain_reconstructs_with_shared_middleman() {
        let (a, b, c) = (party("org-a"), party("org-b"), party("org-c"));
        let mut pms = ProvenanceService::new("space-j".into());
        for log in two_hop_logs(&a, &b, &c) {
            pms.ingest(log, resolver(&[&a, &b, &c])).unwrap();
        }
        let chain = pms.chain("ds-1");
        assert_eq!(chain.hops.len(), 2);
        assert_eq!(chain.gap_count(), 0);
        assert_eq!(chain.hops[0].receiver(), Some("org-b"));
        assert_eq!(chain.hops[1].sender(), Some("org-b"));
        assert_eq!(
            verify_chain(&chain, resolver(&[&a, &b, &c])).unwrap(),
            ProvenanceVerdict::Ok
        );
    }

    #[test]
    fn send_without_receive_is_a_gap() {
        let (a, b) = (party("org-a"), party("org-b"));
        let mut pms = ProvenanceService::new("space-j".into());
        let ctr = agreed_contract("ctr-1", &a.id, &b.id);
        let send = build_log("log-1", LogKind::Send, &ctr, &a.id, &b.id, 10, None, None, &a.keys);
        pms.ingest(send, resolver(&[&a, &b])).unwrap();
        let chain = pms.chain("ds-1");
        assert_eq!(chain.hops.len(), 1);
        assert_eq!(chain.gap_count(), 1);
        assert_eq!(
            verify_chain(&chain, resolver(&[&a, &b])).unwrap(),
            ProvenanceVerdict::BrokenLink { hop: 0 }
        );
    }

    #[test]
    fn unknown_dataset_gives_empty_chain() {
        let pms = ProvenanceService::new("space-j".into());
        let chain = pms.chain("ds-missing");
        assert!(chain.hops.is_empty());
    }

    #[test]
    fn re_signed_log_is_bad_signature() {
        let (a, b, c) = (party("org-a"), party("org-b"), party("org-c"));
        let mut logs = two_hop_logs(&a, &b, &c);
        // hop-2 send log re-signed by the wrong key
        logs[2].signature = sign(&c.keys.private_key, &logs[2].signing_bytes());
        let chain = ProvenanceChain {
            dataset_id: "ds-1".into(),
            hops: vec![
                Hop { send_log: Some(logs[0].clone()), receive_log: Some(logs[1].clone()) },
                Hop { send_log: Some(logs[2].clone()), receive_log: Some(logs[3].clone()) },
            ],
        };
        assert_eq!(
            verify_chain(&chain, resolver(&[&a, &b, &c])).unwrap(),
            ProvenanceVerdict::BadSignature { log_id: "log-3".into() }
        );
    }

    #[test]
    fn forged_counterparty_is_actor_mismatch() {
        let (a, b, c) = (party("org-a"), party("org-b"), party("org-c"));
        let d = party("org-d");
        let logs = two_hop_logs(&a, &b, &c);
        // b claims it received from d instead of a; b signs the lie, so the
        // signature itself is fine and the pairing check must catch it
        let ctr1 = agreed_contract("ctr-1", &a.id, &b.id);
        let forged_receive = build_log(
            "log-2", LogKind::Receive, &ctr1, &b.id, &d.id, 11,
            Some(logs[0].log_hash()), None, &b.keys,
        );
        let chain = ProvenanceChain {
            dataset_id: "ds-1".into(),
            hops: vec![
                Hop { send_log: Some(logs[0].clone()), receive_log: Some(forged_receive) },
                Hop { send_log: Some(logs[2].clone()), receive_log: Some(logs[3].clone()) },
            ],
        };
        assert_eq!(
            verify_chain(&chain, resolver(&[&a, &b, &c, &d])).unwrap(),
            ProvenanceVerdict::ActorMismatch { hop: 0 }
        );
    }

    #[test]
    fn handover_break_between_hops_is_actor_mismatch() {
        let (a, b, c) = (party("org-a"), party("org-b"), party("org-c"));
        let d = party("org-d");
        let logs = two_hop_logs(&a, &b, &c);
        // hop 2 sent by d rather than the hop-1 receiver b
        let ctr2 = agreed_contract("ctr-2", &d.id, &c.id);
        let send2 = build_log("log-3", LogKind::Send, &ctr2, &d.id, &c.id, 20, None, None, &d.keys);
        let recv2 = build_log(
            "log-4", LogKind::Receive, &ctr2, &c.id, &d.id, 21,
            Some(send2.log_hash()), None, &c.keys,
        );
        let chain = ProvenanceChain {
            dataset_id: "ds-1".into(),
            hops: vec![
                Hop { send_log: Some(logs[0].clone()), receive_log: Some(logs[1].clone()) },
                Hop { send_log: Some(send2), receive_log: Some(recv2) },
            ],
        };
        assert_eq!(
            verify_chain(&chain, resolver(&[&a, &b, &c, &d])).unwrap(),
            ProvenanceVerdict::ActorMismatch { hop: 1 }
        );
    }

    #[test]
    fn unknown_actor_is_an_error_not_a_verdict() {
        let (a, b, c) = (party("org-a"), party("org-b"), party("org-c"));
        let logs = two_hop_logs(&a, &b, &c);
        let chain = ProvenanceChain {
            dataset_id: "ds-1".into(),
            hops: vec![Hop { send_log: Some(logs[0].clone()), receive_log: Some(logs[1].clone()) }],
        };
        assert_eq!(
            verify_chain(&chain, resolver(&[&a])),
            Err(ProvenanceError::UnknownActor("org-b".into()))
        );
    }
}
