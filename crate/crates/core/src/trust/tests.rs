use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn kp(seed: &[u8]) -> KeyPair {
    generate_keypair(seed).unwrap()
}

#[test]
fn keypair_generation_is_deterministic() {
    let a1 = kp(b"A");
    let a2 = kp(b"A");
    assert_eq!(a1.key_id, a2.key_id);
    assert_eq!(a1, a2);
}

#[test]
fn distinct_seeds_give_distinct_keys() {
    assert_ne!(kp(b"A").public_key, kp(b"B").public_key);
}

#[test]
fn empty_seed_is_rejected() {
    assert_eq!(generate_keypair(b""), Err(TrustError::EmptySeed));
}

#[test]
fn sign_verify_round_trip() {
    let k = kp(b"A");
    let sig = sign(&k.private_key, b"x");
    assert!(verify(&k.public_key, b"x", &sig));
}

#[test]
fn empty_payload_signs_and_verifies() {
    let k = kp(b"empty");
    let sig = sign(&k.private_key, b"");
    assert!(verify(&k.public_key, b"", &sig));
}

#[test]
fn verify_is_bit_flip_sensitive() {
    let k = kp(b"flip");
    let sig = sign(&k.private_key, b"log");
    assert!(verify(&k.public_key, b"log", &sig));
    assert!(!verify(&k.public_key, b"Log", &sig));
}

#[test]
fn signatures_are_not_interchangeable_across_keys() {
    let k1 = kp(b"one");
    let k2 = kp(b"two");
    let s1 = sign(&k1.private_key, b"payload");
    let s2 = sign(&k2.private_key, b"payload");
    assert!(!verify(&k2.public_key, b"payload", &s1));
    assert!(!verify(&k1.public_key, b"payload", &s2));
}

#[test]
fn truncated_signature_bytes_verify_false() {
    let k = kp(b"trunc");
    let mut sig = sign(&k.private_key, b"data");
    sig.value.0.truncate(40);
    assert!(!verify(&k.public_key, b"data", &sig));
}

#[test]
fn malformed_public_key_verifies_false() {
    let k = kp(b"badkey");
    let sig = sign(&k.private_key, b"data");
    assert!(!verify(&PublicKey(vec![1, 2, 3]), b"data", &sig));
}

#[test]
fn wrong_algorithm_label_verifies_false() {
    let k = kp(b"alg");
    let mut sig = sign(&k.private_key, b"data");
    sig.algorithm_label = "none".into();
    assert!(!verify(&k.public_key, b"data", &sig));
}

#[test]
fn did_is_derived_from_public_key_hash() {
    let k = kp(b"did");
    let did = did_for(&k.public_key);
    assert!(did.starts_with("did:sim:"));
    assert_eq!(did, did_for(&k.public_key));
    assert_ne!(did, did_for(&kp(b"other").public_key));
}

// --- randomized instance builders (shared with the injectivity corpus) ---

fn rand_string(rng: &mut ChaCha20Rng, max_len: usize) -> String {
    let len = rng.gen_range(0..=max_len);
    (0..len)
        .map(|_| char::from(rng.gen_range(b'a'..=b'z')))
        .collect()
}

fn rand_bytes(rng: &mut ChaCha20Rng, max_len: usize) -> Vec<u8> {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| rng.gen()).collect()
}

fn rand_signature(rng: &mut ChaCha20Rng) -> Signature {
    Signature {
        signer_key_id: rand_string(rng, 12),
        algorithm_label: "ed25519".into(),
        value: Bytes(rand_bytes(rng, 64)),
    }
}

fn rand_token(rng: &mut ChaCha20Rng) -> SignedToken {
    let issued_at = rng.gen_range(0..1_000_000);
    let mut claims = BTreeMap::new();
    for _ in 0..rng.gen_range(0..4) {
        claims.insert(rand_string(rng, 8), rand_string(rng, 8));
    }
    SignedToken {
        subject: rand_string(rng, 10),
        issuer: rand_string(rng, 10),
        issued_at,
        expires_at: issued_at + rng.gen_range(1..10_000),
        claims,
        signature: rand_signature(rng),
    }
}

fn rand_credential(rng: &mut ChaCha20Rng) -> MembershipCredential {
    MembershipCredential {
        credential_id: rand_string(rng, 10),
        holder_did: format!("did:sim:{}", rand_string(rng, 16)),
        issuer_did: format!("did:sim:{}", rand_string(rng, 16)),
        space_id: rand_string(rng, 8),
        issued_at: rng.gen_range(0..1_000_000),
        revoked: rng.gen(),
        signature: rand_signature(rng),
    }
}

fn rand_certificate(rng: &mut ChaCha20Rng) -> EndpointCertificate {
    EndpointCertificate {
        domain: format!("{}.sim", rand_string(rng, 10)),
        subject_public_key: PublicKey(rand_bytes(rng, 32)),
        validation_level: if rng.gen() {
            ValidationLevel::ExtendedValidation
        } else {
            ValidationLevel::DomainValidated
        },
        issuer_ca: rand_string(rng, 8),
        not_after: rng.gen_range(0..10_000_000),
        signature: rand_signature(rng),
    }
}

#[test]
fn identical_tokens_encode_identically() {
    let mut r1 = ChaCha20Rng::seed_from_u64(7);
    let mut r2 = ChaCha20Rng::seed_from_u64(7);
    let t1 = rand_token(&mut r1);
    let t2 = rand_token(&mut r2);
    assert_eq!(t1.canonical_encode(), t2.canonical_encode());
}

#[test]
fn expiry_change_changes_encoding() {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let t1 = rand_token(&mut rng);
    let mut t2 = t1.clone();
    t2.expires_at += 1;
    assert_ne!(t1.canonical_encode(), t2.canonical_encode());
    assert_ne!(t1.signing_bytes(), t2.signing_bytes());
}

/// Injectivity on a 10^4-instance randomized corpus, per encodable type.
#[test]
fn canonical_encoding_is_injective_on_corpus() {
    let mut rng = ChaCha20Rng::seed_from_u64(42);

    let mut tokens = std::collections::BTreeSet::new();
    let mut token_bytes = std::collections::BTreeSet::new();
    let mut creds = std::collections::BTreeSet::new();
    let mut cred_bytes = std::collections::BTreeSet::new();
    let mut certs = std::collections::BTreeSet::new();
    let mut cert_bytes = std::collections::BTreeSet::new();

    for _ in 0..10_000 {
        let t = rand_token(&mut rng);
        token_bytes.insert(t.canonical_encode());
        tokens.insert(format!("{t:?}"));
        let c = rand_credential(&mut rng);
        cred_bytes.insert(c.canonical_encode());
        creds.insert(format!("{c:?}"));
        let e = rand_certificate(&mut rng);
        cert_bytes.insert(e.canonical_encode());
        certs.insert(format!("{e:?}"));
    }

    assert_eq!(tokens.len(), token_bytes.len());
    assert_eq!(creds.len(), cred_bytes.len());
    assert_eq!(certs.len(), cert_bytes.len());
}

#[test]
fn decode_rejects_trailing_bytes_and_wrong_tag() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let t = rand_token(&mut rng);
    let mut enc = t.canonical_encode();
    enc.push(0);
    assert_eq!(
        SignedToken::canonical_decode(&enc),
        Err(EncodingError::TrailingBytes)
    );
    let enc = t.canonical_encode();
    assert!(matches!(
        MembershipCredential::canonical_decode(&enc),
        Err(EncodingError::UnexpectedTag { .. })
    ));
}

// --- encode/decode identity, randomized per type ---

prop_compose! {
    fn arb_sig()(id in "[a-z]{0,10}", value in proptest::collection::vec(any::<u8>(), 0..80)) -> Signature {
        Signature { signer_key_id: id, algorithm_label: "ed25519".into(), value: Bytes(value) }
    }
}

prop_compose! {
    fn arb_token()(
        subject in "[a-z0-9-]{0,12}",
        issuer in "[a-z-]{0,8}",
        issued_at in 0u64..1_000_000,
        ttl in 1u64..100_000,
        claims in proptest::collection::btree_map("[a-z]{0,6}", "[a-z0-9]{0,6}", 0..5),
        sig in arb_sig(),
    ) -> SignedToken {
        SignedToken { subject, issuer, issued_at, expires_at: issued_at + ttl, claims, signature: sig }
    }
}

prop_compose! {
    fn arb_credential()(
        credential_id in "vc-[0-9]{1,6}",
        holder in "[a-f0-9]{8}",
        issuer in "[a-f0-9]{8}",
        space_id in "[a-z-]{1,10}",
        issued_at in 0u64..1_000_000,
        revoked in any::<bool>(),
        sig in arb_sig(),
    ) -> MembershipCredential {
        MembershipCredential {
            credential_id,
            holder_did: format!("did:sim:{holder}"),
            issuer_did: format!("did:sim:{issuer}"),
            space_id,
            issued_at,
            revoked,
            signature: sig,
        }
    }
}

prop_compose! {
    fn arb_presentation()(
        cred in arb_credential(),
        proof in arb_sig(),
        audience in "[a-z0-9-]{0,12}",
        nonce in proptest::collection::vec(any::<u8>(), 0..32),
    ) -> Presentation {
        Presentation { credential: cred, holder_proof: proof, audience, nonce: Bytes(nonce) }
    }
}

prop_compose! {
    fn arb_certificate()(
        domain in "[a-z0-9.-]{1,20}",
        key in proptest::collection::vec(any::<u8>(), 0..40),
        ev in any::<bool>(),
        issuer_ca in "[a-z-]{1,10}",
        not_after in 0u64..10_000_000,
        sig in arb_sig(),
    ) -> EndpointCertificate {
        EndpointCertificate {
            domain,
            subject_public_key: PublicKey(key),
            validation_level: if ev { ValidationLevel::ExtendedValidation } else { ValidationLevel::DomainValidated },
            issuer_ca,
            not_after,
            signature: sig,
        }
    }
}

prop_compose! {
    fn arb_keypair_struct()(
        key_id in "key-[a-f0-9]{1,16}",
        public in proptest::collection::vec(any::<u8>(), 0..40),
        private in proptest::collection::vec(any::<u8>(), 0..40),
    ) -> KeyPair {
        KeyPair { key_id, public_key: PublicKey(public), private_key: PrivateKey(private) }
    }
}

prop_compose! {
    fn arb_did_doc()(
        suffix in "[a-f0-9]{1,32}",
        key in proptest::collection::vec(any::<u8>(), 1..40),
        controller in "[a-z-]{1,10}",
    ) -> DidDocument {
        DidDocument { did: format!("did:sim:{suffix}"), public_key: PublicKey(key), controller }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn sign_verify_holds_for_all_payloads(seed in proptest::collection::vec(any::<u8>(), 1..64),
                                          payload in proptest::collection::vec(any::<u8>(), 0..256)) {
        let k = generate_keypair(&seed).unwrap();
        let sig = sign(&k.private_key, &payload);
        prop_assert!(verify(&k.public_key, &payload, &sig));
    }

    #[test]
    fn signature_does_not_transfer_to_other_payloads(
        seed in proptest::collection::vec(any::<u8>(), 1..64),
        payload in proptest::collection::vec(any::<u8>(), 0..128),
        other in proptest::collection::vec(any::<u8>(), 0..128),
    ) {
        prop_assume!(payload != other);
        let k = generate_keypair(&seed).unwrap();
        let sig = sign(&k.private_key, &payload);
        prop_assert!(!verify(&k.public_key, &other, &sig));
    }

    #[test]
    fn token_round_trips(t in arb_token()) {
        prop_assert_eq!(SignedToken::canonical_decode(&t.canonical_encode()).unwrap(), t);
    }

    #[test]
    fn credential_round_trips(c in arb_credential()) {
        prop_assert_eq!(MembershipCredential::canonical_decode(&c.canonical_encode()).unwrap(), c);
    }

    #[test]
    fn presentation_round_trips(p in arb_presentation()) {
        prop_assert_eq!(Presentation::canonical_decode(&p.canonical_encode()).unwrap(), p);
    }

    #[test]
    fn certificate_round_trips(c in arb_certificate()) {
        prop_assert_eq!(EndpointCertificate::canonical_decode(&c.canonical_encode()).unwrap(), c);
    }

    #[test]
    fn keypair_round_trips(k in arb_keypair_struct()) {
        prop_assert_eq!(KeyPair::canonical_decode(&k.canonical_encode()).unwrap(), k);
    }

    #[test]
    fn did_document_round_trips(d in arb_did_doc()) {
        prop_assert_eq!(DidDocument::canonical_decode(&d.canonical_encode()).unwrap(), d);
    }

    #[test]
    fn signature_round_trips(s in arb_sig()) {
        prop_assert_eq!(Signature::canonical_decode(&s.canonical_encode()).unwrap(), s);
    }
}
