//! Deterministic simulator of two data-sharing platforms with different
//! trust architectures: a centralized-trust space built on an identity
//! provider with token introspection, and a decentralized-trust space built
//! on a verifiable data registry with locally verified credential
//! presentations. The library models the full exchange process — onboarding,
//! planning, discovery, contract, transfer, payment, verification — plus the
//! machinery to compare the two platforms: a capability gap matrix computed
//! by live probes, dual-stack wallets, mutual framework recognition, catalog
//! conversion, and signed provenance chains.

pub mod connector;
pub mod events;
pub mod exchange;
pub mod harness;
pub mod identity;
pub mod provenance;
pub mod registry;
pub mod semantics;
pub mod trust;
pub mod world;
