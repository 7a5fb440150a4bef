// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng as _, SeedableRng};
use sfamss::codec::{self, BankAuthRequest, Message, MsgType, ReasonCode};
use sfamss::crypto::{
    backend_for, BackendKind, CertificateAuthority, OpenKey, Role, SealKey, SealedBox, SealMode,
    Signature,
};
use sfamss::protocol::{
    run_session, Action, Adversary, Clock, AtmError, AtmPending, CardError, CardPending, ChannelScript,
    Direct, FreshnessPolicy, Hop, LocalLink, ManualClock, Network, Outcome, ProtocolError, Secrets,
    SessionParams,
};
use sfamss::share::{Modulus, Polynomial, SharePoint};
use sfamss::store::{AuditEvent, UserPrivileges};
use sfamss::EntityId;

const PIN: &str = "2468";
const T0: u64 = 1_700_000_000_000;
const LIMIT: UserPrivileges = UserPrivileges {
    withdrawal_limit: 50_000,
};

struct Fixture {
    net: Network,
    clock: Arc<ManualClock>,
    policy: FreshnessPolicy,
}

fn policy_at(clock: &Arc<ManualClock>) -> FreshnessPolicy {
    FreshnessPolicy::new(FreshnessPolicy::DEFAULT_WINDOW_MS, clock.clone()).unwrap()
}

fn network(secrets: Secrets, seed: u64) -> Fixture {
    let clock = Arc::new(ManualClock::new(T0));
    let policy = policy_at(&clock);
    let backend = backend_for(BackendKind::Curve25519, Some(seed)).unwrap();
    let net = Network::new(backend, secrets, policy.clone(), seed).unwrap();
    Fixture { net, clock, policy }
}

fn worked_fixture() -> Fixture {
    let m = Modulus::fixture();
    let base = Polynomial::from_values(m, [0, 3, 2]).unwrap();
    network(
        Secrets::Fixed {
            base,
            bank_id: EntityId(1),
        },
        11,
    )
}

fn eval_oracle(coeffs: [u64; 3], p: u64, x: u64) -> u64 {
    // plain integer arithmetic, reduced at the end
    let x = x as u128;
    let p = p as u128;
    ((coeffs[0] as u128 + coeffs[1] as u128 * x + coeffs[2] as u128 * x * x) % p) as u64
}

impl Fixture {
    fn params<'a>(&'a self, pin: &'a str, amount: Option<u64>) -> SessionParams<'a> {
        SessionParams {
            backend: &*self.net.backend,
            policy: &self.policy,
            pin,
            amount,
        }
    }

    /// An honest M9 for the given card and ATM at the current time.
    fn m9(&self, card: &mut sfamss::protocol::Card, atm: &sfamss::protocol::Atm) -> BankAuthRequest {
        let backend = &*self.net.backend;
        let m7 = card.begin_session(backend, PIN, self.policy.now()).unwrap();
        let cert = self.net.bank.fetch_certificate(card.user_id).unwrap();
        atm.handle_user(backend, &m7, &cert, &self.policy).unwrap()
    }
}

#[test]
fn fixture_registration_produces_expected_shares() {
    let fx = worked_fixture();
    let m = fx.net.modulus();
    let atm = fx.net.register_atm_with_id(EntityId(5)).unwrap();
    let card = fx
        .net
        .register_user_with(EntityId(9), m.reduce(7), PIN, LIMIT)
        .unwrap();

    let d_atm = atm.d_atm().unwrap();
    assert_eq!(d_atm.x.value(), 5);
    assert_eq!(d_atm.y.value(), eval_oracle([0, 3, 2], 101, 5));

    let raw = fx
        .net
        .backend
        .open(OpenKey::Session(&card.session_key), &card.sealed_d_user)
        .unwrap();
    let d_user = SharePoint::from_bytes(m, &raw).unwrap();
    assert_eq!(d_user.y.value(), (eval_oracle([0, 3, 2], 101, 9) + 7) % 101);
}

#[test]
fn zero_anchor_gives_unshifted_share() {
    let fx = worked_fixture();
    let m = fx.net.modulus();
    let card = fx
        .net
        .register_user_with(EntityId(9), m.zero(), PIN, LIMIT)
        .unwrap();
    let raw = fx
        .net
        .backend
        .open(OpenKey::Session(&card.session_key), &card.sealed_d_user)
        .unwrap();
    assert_eq!(SharePoint::from_bytes(m, &raw).unwrap().y.value(), 88);
}

#[test]
fn honest_fixture_session_accepts() {
    let fx = worked_fixture();
    let atm = fx.net.register_atm_with_id(EntityId(5)).unwrap();
    let mut card = fx
        .net
        .register_user_with(EntityId(9), fx.net.modulus().reduce(7), PIN, LIMIT)
        .unwrap();
    let out = run_session(
        &fx.params(PIN, Some(20_000)),
        &mut card,
        &atm,
        &mut Direct,
        &mut LocalLink(&fx.net.bank),
    );
    assert_eq!(out.outcome, Outcome::Accept);
    assert_eq!(out.authz_label(), Some("AUTHZ_ALLOW"));
    assert!(out.decision.unwrap().accepted);
}

#[test]
fn perturbed_user_share_is_a_mismatch() {
    let fx = worked_fixture();
    let m = fx.net.modulus();
    let atm = fx.net.register_atm_with_id(EntityId(5)).unwrap();
    let mut card = fx.net.register_user_with(EntityId(9), m.reduce(7), PIN, LIMIT).unwrap();
    let mut m9 = fx.m9(&mut card, &atm);
    let forged = SharePoint::new(m.reduce(9), m.reduce(96));
    m9.sealed_d_user = fx
        .net
        .backend
        .seal(SealKey::Session(&card.session_key), &forged.to_bytes())
        .unwrap();
    let d = fx.net.bank.authenticate(&m9).unwrap();
    assert!(!d.accepted);
    assert_eq!(d.reason, ReasonCode::ShareMismatch);
}

#[test]
fn share_for_another_id_is_a_mismatch() {
    let fx = worked_fixture();
    let m = fx.net.modulus();
    let atm = fx.net.register_atm_with_id(EntityId(5)).unwrap();
    let mut card = fx.net.register_user_with(EntityId(9), m.reduce(7), PIN, LIMIT).unwrap();
    let mut m9 = fx.m9(&mut card, &atm);
    // (10, F(10)+7) lies on the right polynomial but belongs to nobody
    let other = SharePoint::new(m.reduce(10), m.reduce(eval_oracle([7, 3, 2], 101, 10)));
    m9.sealed_d_user = fx
        .net
        .backend
        .seal(SealKey::Session(&card.session_key), &other.to_bytes())
        .unwrap();
    assert_eq!(fx.net.bank.authenticate(&m9).unwrap().reason, ReasonCode::ShareMismatch);
}

#[test]
fn unopenable_boxes_are_open_failed() {
    let fx = worked_fixture();
    let atm = fx.net.register_atm_with_id(EntityId(5)).unwrap();
    let mut card = fx.net.register_user(PIN, LIMIT).unwrap();
    let mut m9 = fx.m9(&mut card, &atm);
    m9.sealed_d_atm = SealedBox {
        mode: SealMode::PublicKey,
        ciphertext: vec![0; 80],
    };
    assert_eq!(fx.net.bank.authenticate(&m9).unwrap().reason, ReasonCode::OpenFailed);
}

#[test]
fn registration_errors() {
    let fx = worked_fixture();
    let backend = &*fx.net.backend;

    // rogue CA
    let rogue = CertificateAuthority::bootstrap(backend).unwrap();
    let id = fx.net.bank.assign_id(Role::Atm).unwrap();
    let kp = backend.generate_keypair().unwrap();
    let cert = rogue.issue(backend, &kp.public, id, Role::Atm).unwrap();
    let pending = AtmPending {
        atm_id: id,
        keypair: kp,
        certificate: cert,
    };
    assert!(matches!(
        fx.net.bank.register_atm(&pending.request()),
        Err(ProtocolError::BadCertificate)
    ));

    // re-registration
    let atm = fx.net.register_atm().unwrap();
    let again = AtmPending {
        atm_id: atm.atm_id,
        keypair: atm.keypair.clone(),
        certificate: atm.certificate.clone(),
    };
    assert!(matches!(
        fx.net.bank.register_atm(&again.request()),
        Err(ProtocolError::AlreadyRegistered(_))
    ));

    // id never assigned
    let kp = backend.generate_keypair().unwrap();
    let unassigned = (1..101)
        .map(EntityId)
        .find(|id| fx.net.bank.with_store(|s| !s.secrets().unwrap().assigned.contains_key(id)))
        .unwrap();
    let cert = fx.net.ca.issue(backend, &kp.public, unassigned, Role::User).unwrap();
    let (_, m5) = CardPending::start(
        backend,
        unassigned,
        kp,
        cert,
        &fx.net.bank.certificate().subject_public,
    )
    .unwrap();
    assert!(matches!(
        fx.net.bank.register_user(&m5, LIMIT),
        Err(ProtocolError::UnknownId(_))
    ));

    // session key box the bank cannot open
    let id = fx.net.bank.assign_id(Role::User).unwrap();
    let kp = backend.generate_keypair().unwrap();
    let cert = fx.net.ca.issue(backend, &kp.public, id, Role::User).unwrap();
    let m5 = Message::UserRegisterRequest {
        user_id: id,
        user_certificate: cert,
        sealed_session_key: backend
            .seal(SealKey::Public(&kp.public), &[0u8; 32])
            .unwrap(),
    };
    assert!(matches!(
        fx.net.bank.register_user(&m5, LIMIT),
        Err(ProtocolError::OpenFailed)
    ));
}

#[test]
fn assigned_ids_are_unique_and_nonzero() {
    let fx = network(Secrets::Random(Modulus::mersenne61()), 3);
    let mut seen = std::collections::BTreeSet::new();
    for i in 0..10_000 {
        let role = if i % 2 == 0 { Role::Atm } else { Role::User };
        let id = fx.net.bank.assign_id(role).unwrap();
        assert_ne!(id.0, 0);
        assert!(seen.insert(id));
    }
    fx.net.bank.with_store(|s| {
        let assigned = &s.secrets().unwrap().assigned;
        // the bank's own id plus every handed-out one
        assert_eq!(assigned.len(), seen.len() + 1);
        assert!(seen.iter().all(|id| assigned.contains_key(id)));
    });
}

#[test]
fn small_field_runs_out_of_ids() {
    let fx = worked_fixture();
    for _ in 0..99 {
        fx.net.bank.assign_id(Role::User).unwrap();
    }
    assert!(matches!(
        fx.net.bank.assign_id(Role::User),
        Err(ProtocolError::IdSpaceExhausted)
    ));
}

#[test]
fn card_pin_handling() {
    let fx = worked_fixture();
    let backend = &*fx.net.backend;
    let mut card = fx.net.register_user(PIN, LIMIT).unwrap();
    assert_eq!(
        card.begin_session(backend, "0000", T0).unwrap_err(),
        CardError::BadPin { remaining: 2 }
    );
    // a success resets the counter
    card.begin_session(backend, PIN, T0).unwrap();
    card.begin_session(backend, "1", T0).unwrap_err();
    card.begin_session(backend, "2", T0).unwrap_err();
    assert_eq!(card.begin_session(backend, "3", T0).unwrap_err(), CardError::CardLocked);
    assert_eq!(card.begin_session(backend, PIN, T0).unwrap_err(), CardError::CardLocked);
}

#[test]
fn card_signature_verifies_and_timestamps_advance() {
    let fx = worked_fixture();
    let backend = &*fx.net.backend;
    let mut card = fx.net.register_user(PIN, LIMIT).unwrap();
    let a = card.begin_session(backend, PIN, fx.clock.now_ms()).unwrap();
    fx.clock.advance(1);
    let b = card.begin_session(backend, PIN, fx.clock.now_ms()).unwrap();
    assert_ne!(a.t_s, b.t_s);
    let signed = codec::signing_bytes(&Message::UserAuthRequest(a.clone())).unwrap();
    assert!(backend.verify(&card.certificate.subject_public, &signed, &a.user_signature));
    assert_eq!(a.sealed_d_user, card.sealed_d_user);
}

#[test]
fn atm_rejects_bad_signature_and_stale_requests() {
    let fx = worked_fixture();
    let backend = &*fx.net.backend;
    let atm = fx.net.register_atm().unwrap();
    let mut card = fx.net.register_user(PIN, LIMIT).unwrap();
    let cert = fx.net.bank.fetch_certificate(card.user_id).unwrap();

    let mut m7 = card.begin_session(backend, PIN, T0).unwrap();
    m7.t_s += 1;
    assert_eq!(
        atm.handle_user(backend, &m7, &cert, &fx.policy).unwrap_err(),
        AtmError::BadSignature
    );

    let old = card.begin_session(backend, PIN, T0 - 30_001).unwrap();
    assert_eq!(atm.handle_user(backend, &old, &cert, &fx.policy).unwrap_err(), AtmError::Stale);

    let other = fx.net.register_user(PIN, LIMIT).unwrap();
    let m7 = card.begin_session(backend, PIN, T0).unwrap();
    assert_eq!(
        atm.handle_user(backend, &m7, &other.certificate, &fx.policy).unwrap_err(),
        AtmError::BadCertificate
    );

    let ok = atm.handle_user(backend, &m7, &cert, &fx.policy).unwrap();
    assert_eq!((ok.user_id, ok.t_s, ok.atm_id), (m7.user_id, m7.t_s, atm.atm_id));
    assert_eq!(ok.sealed_d_user, m7.sealed_d_user);
}

#[test]
fn bank_rejects_replay_stale_and_unknown_parties() {
    let fx = worked_fixture();
    let atm = fx.net.register_atm().unwrap();
    let mut card = fx.net.register_user(PIN, LIMIT).unwrap();
    let m9 = fx.m9(&mut card, &atm);
    assert!(fx.net.bank.authenticate(&m9).unwrap().accepted);
    assert_eq!(fx.net.bank.authenticate(&m9).unwrap().reason, ReasonCode::Replay);

    fx.clock.advance(30_001);
    let d = fx.net.bank.authenticate(&m9).unwrap();
    assert_eq!(d.reason, ReasonCode::Stale);

    let m9 = fx.m9(&mut card, &atm);
    let mut unknown_atm = m9.clone();
    unknown_atm.atm_id = EntityId(m9.atm_id.0 % 100 + 1);
    if fx.net.bank.with_store(|s| s.atm(unknown_atm.atm_id).is_none()) {
        assert_eq!(fx.net.bank.authenticate(&unknown_atm).unwrap().reason, ReasonCode::UnknownAtm);
    }
    // an id never issued to a user cannot carry a valid signature
    let mut unknown_user = m9.clone();
    unknown_user.user_id = EntityId(0);
    assert_eq!(fx.net.bank.authenticate(&unknown_user).unwrap().reason, ReasonCode::BadSignature);

    // an issued id whose registration never completed is UNKNOWN_USER
    let pending = fx.net.bank.assign_id(Role::User).unwrap();
    let mut unregistered = m9;
    unregistered.user_id = pending;
    assert_eq!(fx.net.bank.authenticate(&unregistered).unwrap().reason, ReasonCode::UnknownUser);
}

#[test]
fn forged_user_id_or_timestamp_is_bad_signature() {
    let fx = worked_fixture();
    let atm = fx.net.register_atm().unwrap();
    let mut card = fx.net.register_user(PIN, LIMIT).unwrap();
    let other = fx.net.register_user(PIN, LIMIT).unwrap();
    let m9 = fx.m9(&mut card, &atm);

    let mut moved = m9.clone();
    moved.t_s -= 1;
    assert_eq!(fx.net.bank.authenticate(&moved).unwrap().reason, ReasonCode::BadSignature);

    let mut swapped = m9;
    swapped.user_id = other.user_id;
    assert_eq!(fx.net.bank.authenticate(&swapped).unwrap().reason, ReasonCode::BadSignature);
}

#[test]
fn decisions_are_signed_by_the_bank() {
    let fx = worked_fixture();
    let atm = fx.net.register_atm().unwrap();
    let mut card = fx.net.register_user(PIN, LIMIT).unwrap();
    let m9 = fx.m9(&mut card, &atm);
    let d = fx.net.bank.authenticate(&m9).unwrap();
    let frame = codec::encode(&Message::AuthDecision(d.clone())).unwrap();
    let backend = &*fx.net.backend;
    assert_eq!(atm.verify_decision(backend, &frame, card.user_id, m9.t_s).unwrap(), d);
    assert_eq!(
        atm.verify_decision(backend, &frame, card.user_id, m9.t_s + 1).unwrap_err(),
        AtmError::UnexpectedDecision
    );
    let mut forged = d;
    forged.bank_signature = Signature(vec![0; 64]);
    let frame = codec::encode(&Message::AuthDecision(forged)).unwrap();
    assert_eq!(
        atm.verify_decision(backend, &frame, card.user_id, m9.t_s).unwrap_err(),
        AtmError::BadSignature
    );
}

#[test]
fn authorization_limits() {
    let fx = worked_fixture();
    let atm = fx.net.register_atm().unwrap();
    let mut card = fx.net.register_user(PIN, LIMIT).unwrap();
    let bank = &fx.net.bank;
    for (amount, allowed) in [(20_000, true), (50_001, false), (0, true), (50_000, true)] {
        fx.clock.advance(1);
        let m9 = fx.m9(&mut card, &atm);
        assert!(bank.authenticate(&m9).unwrap().accepted);
        let d = bank.authorize(card.user_id, atm.atm_id, m9.t_s, amount).unwrap();
        assert_eq!(d.allowed, allowed, "amount {amount}");
        // one authorization per accepted session
        let again = bank.authorize(card.user_id, atm.atm_id, m9.t_s, 0).unwrap();
        assert!(!again.allowed);
    }
    assert!(matches!(
        bank.authorize(EntityId(0), atm.atm_id, T0, 1),
        Err(ProtocolError::UnknownUser(_))
    ));
    let last = bank.with_store(|s| s.read_audit().unwrap()).pop().unwrap();
    assert_eq!(last.body.event, AuditEvent::AuthzDeny);
}

#[test]
fn every_bank_operation_appends_one_audit_record() {
    let fx = network(Secrets::Random(Modulus::mersenne61()), 5);
    let bank = &fx.net.bank;
    let mut expected = 0;
    let mut atms = Vec::new();
    let mut cards = Vec::new();
    let mut rng = StdRng::seed_from_u64(17);
    for _ in 0..60 {
        fx.clock.advance(3);
        let op = rng.gen_range(0..4);
        if op == 0 || atms.is_empty() {
            atms.push(fx.net.register_atm().unwrap());
        } else if op == 1 || cards.is_empty() {
            cards.push(fx.net.register_user(PIN, LIMIT).unwrap());
        } else {
            let atm: &sfamss::protocol::Atm = &atms[rng.gen_range(0..atms.len())];
            let i = rng.gen_range(0..cards.len());
            let m9 = fx.m9(&mut cards[i], atm);
            let d = bank.authenticate(&m9).unwrap();
            if d.accepted && rng.gen_bool(0.5) {
                expected += 1;
                bank.authorize(m9.user_id, m9.atm_id, m9.t_s, rng.gen_range(0..80_000)).unwrap();
            }
        }
        expected += 1;
        assert_eq!(bank.with_store(|s| s.audit_len()), expected);
    }
}

#[test]
fn accepted_sessions_leave_verifiable_evidence() {
    let fx = worked_fixture();
    let atm = fx.net.register_atm().unwrap();
    let mut card = fx.net.register_user(PIN, LIMIT).unwrap();
    for _ in 0..3 {
        fx.clock.advance(10);
        let m9 = fx.m9(&mut card, &atm);
        fx.net.bank.authenticate(&m9).unwrap();
    }
    let user_id = card.user_id;
    drop(card);
    let backend = &*fx.net.backend;
    fx.net.bank.with_store(|s| {
        let cert = &s.user(user_id).unwrap().certificate;
        let accepts: Vec<_> = s
            .read_audit()
            .unwrap()
            .into_iter()
            .filter(|r| r.body.event == AuditEvent::AuthAccept)
            .collect();
        assert_eq!(accepts.len(), 3);
        for r in accepts {
            let signed = codec::user_signed_bytes(r.body.user_id.unwrap(), r.body.t_s.unwrap());
            assert!(backend.verify(&cert.subject_public, &signed, &Signature(r.body.evidence)));
        }
    });
}

#[test]
fn adversary_neutrality_and_replay() {
    let fx = worked_fixture();
    let atm = fx.net.register_atm().unwrap();
    let mut card = fx.net.register_user(PIN, LIMIT).unwrap();
    let mut adv = Adversary::new(ChannelScript::deliver_all(), fx.clock.clone());

    let first = run_session(&fx.params(PIN, None), &mut card, &atm, &mut adv, &mut LocalLink(&fx.net.bank));
    assert_eq!(first.outcome, Outcome::Accept);
    // M7, M8, M8R, M9, M10
    assert_eq!(adv.transcript().len(), 5);

    fx.clock.advance(1_000);
    let m7 = adv
        .transcript()
        .find(Hop::CardToAtm, |b| b[5] == MsgType::UserAuthRequest as u8)
        .unwrap();
    adv.set_script(ChannelScript::new([Action::Replay(m7)]));
    let second = run_session(&fx.params(PIN, None), &mut card, &atm, &mut adv, &mut LocalLink(&fx.net.bank));
    assert_eq!(second.outcome, Outcome::Reject(ReasonCode::Replay));
}

#[test]
fn tampering_with_the_signed_part_of_m9_is_bad_signature() {
    let fx = worked_fixture();
    let atm = fx.net.register_atm().unwrap();
    let mut card = fx.net.register_user(PIN, LIMIT).unwrap();
    // t_s of M9 sits after the header, user_id and atm_id
    let script = ChannelScript::new([
        Action::Deliver,
        Action::Deliver,
        Action::Deliver,
        Action::Tamper { offset: 6 + 16 + 7, mask: 0x01 },
    ]);
    let mut adv = Adversary::new(script, fx.clock.clone());
    let out = run_session(&fx.params(PIN, None), &mut card, &atm, &mut adv, &mut LocalLink(&fx.net.bank));
    assert_eq!(out.outcome, Outcome::Reject(ReasonCode::BadSignature));
}

#[test]
fn dropped_and_garbage_frames_end_the_session() {
    let fx = worked_fixture();
    let atm = fx.net.register_atm().unwrap();
    let mut card = fx.net.register_user(PIN, LIMIT).unwrap();
    let link = &mut LocalLink(&fx.net.bank);

    let mut adv = Adversary::new(ChannelScript::new([Action::Drop]), fx.clock.clone());
    assert_eq!(run_session(&fx.params(PIN, None), &mut card, &atm, &mut adv, link).outcome, Outcome::Dropped);

    let mut adv = Adversary::new(ChannelScript::new([Action::Inject(b"junk".to_vec())]), fx.clock.clone());
    assert_eq!(run_session(&fx.params(PIN, None), &mut card, &atm, &mut adv, link).outcome.label(), "MALFORMED");

    // garbage to the bank gets no answer
    let mut adv = Adversary::new(
        ChannelScript::new([Action::Deliver, Action::Inject(vec![0xFF; 10])]),
        fx.clock.clone(),
    );
    assert_eq!(run_session(&fx.params(PIN, None), &mut card, &atm, &mut adv, link).outcome, Outcome::Dropped);

    let mut adv = Adversary::new(ChannelScript::strict([]), fx.clock.clone());
    assert_eq!(
        run_session(&fx.params(PIN, None), &mut card, &atm, &mut adv, link).outcome,
        Outcome::ScriptExhausted
    );

    let out = run_session(&fx.params("bad", None), &mut card, &atm, &mut Direct, link);
    assert_eq!(out.outcome.label(), "BAD_PIN");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn honest_sessions_accept(seed in any::<u64>(), small in any::<bool>(), skew in -30_000i64..=30_000) {
        let modulus = if small { Modulus::fixture() } else { Modulus::mersenne61() };
        let fx = network(Secrets::Random(modulus), seed);
        let atm = fx.net.register_atm().unwrap();
        let mut card = fx.net.register_user(PIN, LIMIT).unwrap();
        let backend = &*fx.net.backend;
        let t_s = (T0 as i64 + skew) as u64;
        let m7 = card.begin_session(backend, PIN, t_s).unwrap();
        let cert = fx.net.bank.fetch_certificate(card.user_id).unwrap();
        let m9 = atm.handle_user(backend, &m7, &cert, &fx.policy).unwrap();
        let d = fx.net.bank.authenticate(&m9).unwrap();
        prop_assert!(d.accepted, "{:?}", d.reason);
    }

    #[test]
    fn every_well_formed_m9_gets_a_signed_decision(
        user in any::<u64>(),
        atm_id in any::<u64>(),
        t_s in any::<u64>(),
        sig in proptest::collection::vec(any::<u8>(), 0..80),
        a in proptest::collection::vec(any::<u8>(), 0..120),
        b in proptest::collection::vec(any::<u8>(), 0..120),
        use_real_ids in any::<bool>(),
    ) {
        let fx = worked_fixture();
        let atm = fx.net.register_atm().unwrap();
        let card = fx.net.register_user(PIN, LIMIT).unwrap();
        let m9 = BankAuthRequest {
            user_id: if use_real_ids { card.user_id } else { EntityId(user) },
            atm_id: if use_real_ids { atm.atm_id } else { EntityId(atm_id) },
            t_s,
            user_signature: Signature(sig),
            sealed_d_user: SealedBox { mode: SealMode::Symmetric, ciphertext: a },
            sealed_d_atm: SealedBox { mode: SealMode::PublicKey, ciphertext: b },
        };
        let d = fx.net.bank.authenticate(&m9).unwrap();
        prop_assert!(!d.accepted);
        let frame = codec::encode(&Message::AuthDecision(d)).unwrap();
        let split = codec::split_bank_signed(&frame).unwrap();
        prop_assert!(fx.net.backend.verify(&fx.net.bank.certificate().subject_public, &split.signed, &split.signature));
    }
}
