// SPDX-License-Identifier: Apache-2.0

//! Declarative scenario files, run against an in-process deployment.
//!
//! One directive per line; `#` starts a comment.
//!
//! ```text
//! scenario <name>
//! seed <n> | modulus <n|mersenne61|fixture> | window <ms> | clock <ms> | backend <rsa|curve25519>
//! atm <name>
//! user <name> pin <pin> [limit <n>]
//! advance <ms>
//! script <action>[, <action>...]       applies from the next frame on
//! session <user> <atm> [pin <pin>] [amount <n>] expect <OUTCOME> [<AUTHZ_ALLOW|AUTHZ_DENY>]
//! impersonate <user> <atm> expect <OUTCOME>
//! no-plaintext-share <user>
//! ```
//!
//! Script actions: `deliver`, `drop`, `replay <index>`, `replay last <hop>`,
//! `tamper <offset> <mask>`, `inject <hex>`; hops are `card-atm`,
//! `atm-bank` and `bank-atm`. Settings lines must precede the first `atm`
//! or `user` line.

use std::collections::HashMap;
use std::sync::Arc;

use sfamss::crypto::{backend_for, BackendKind, OpenKey, SealKey};
use sfamss::codec::Message;
use sfamss::protocol::{
    run_session, Action, Adversary, Atm, Card, CardPending, ChannelScript, Clock, FreshnessPolicy, Hop,
    LocalLink, ManualClock, Network, Secrets, SessionParams,
};
use sfamss::share::{Modulus, SharePoint, MERSENNE_61};
use sfamss::store::UserPrivileges;

use crate::deployment::{Settings, DEFAULT_LIMIT};
use crate::error::CliError;
use crate::report::{ScenarioReport, StepReport};

pub const DEFAULT_CLOCK_MS: u64 = 1_700_000_000_000;

/// Bundled scenarios, by name.
pub const BUNDLED: [(&str, &str); 6] = [
    ("honest", include_str!("../scenarios/honest.scn")),
    ("replay", include_str!("../scenarios/replay.scn")),
    ("tamper", include_str!("../scenarios/tamper.scn")),
    ("impersonate", include_str!("../scenarios/impersonate.scn")),
    ("eavesdrop", include_str!("../scenarios/eavesdrop.scn")),
    ("stale", include_str!("../scenarios/stale.scn")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReplayRef {
    Index(usize),
    Last(Hop),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScriptAction {
    Plain(Action),
    Replay(ReplayRef),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Directive {
    Name(String),
    Seed(u64),
    Modulus(u64),
    Window(u64),
    Clock(u64),
    Backend(BackendKind),
    Atm(String),
    User { name: String, pin: String, limit: u64 },
    Advance(u64),
    Script(Vec<ScriptAction>),
    Session {
        user: String,
        atm: String,
        pin: Option<String>,
        amount: Option<u64>,
        expect: String,
        expect_authz: Option<String>,
    },
    Impersonate { user: String, atm: String, expect: String },
    NoPlaintextShare(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub steps: Vec<(usize, Directive)>,
}

struct LineParser<'a> {
    file: &'a str,
    line: usize,
}

impl LineParser<'_> {
    fn err(&self, msg: impl Into<String>) -> CliError {
        CliError::Parse {
            file: self.file.to_string(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn number(&self, s: Option<&str>, what: &str) -> Result<u64, CliError> {
        let s = s.ok_or_else(|| self.err(format!("missing {what}")))?;
        let parsed = match s.strip_prefix("0x") {
            Some(h) => u64::from_str_radix(h, 16),
            None => s.parse(),
        };
        parsed.map_err(|_| self.err(format!("bad {what} {s:?}")))
    }

    fn word<'w>(&self, s: Option<&'w str>, what: &str) -> Result<&'w str, CliError> {
        s.ok_or_else(|| self.err(format!("missing {what}")))
    }

    fn hop(&self, s: Option<&str>) -> Result<Hop, CliError> {
        match self.word(s, "hop")? {
            "card-atm" => Ok(Hop::CardToAtm),
            "atm-bank" => Ok(Hop::AtmToBank),
            "bank-atm" => Ok(Hop::BankToAtm),
            other => Err(self.err(format!("unknown hop {other:?}"))),
        }
    }

    fn action(&self, text: &str) -> Result<ScriptAction, CliError> {
        let mut w = text.split_whitespace();
        let verb = self.word(w.next(), "action")?;
        let action = match verb {
            "deliver" => ScriptAction::Plain(Action::Deliver),
            "drop" => ScriptAction::Plain(Action::Drop),
            "replay" => match w.next() {
                Some("last") => ScriptAction::Replay(ReplayRef::Last(self.hop(w.next())?)),
                n => ScriptAction::Replay(ReplayRef::Index(self.number(n, "replay index")? as usize)),
            },
            "tamper" => {
                let offset = self.number(w.next(), "offset")? as usize;
                let mask = self.number(w.next(), "mask")?;
                let mask = u8::try_from(mask).map_err(|_| self.err("mask must fit in a byte"))?;
                if mask == 0 {
                    return Err(self.err("mask 0 changes nothing"));
                }
                ScriptAction::Plain(Action::Tamper { offset, mask })
            }
            "inject" => {
                let h = self.word(w.next(), "hex bytes")?;
                let bytes = (0..h.len())
                    .step_by(2)
                    .map(|i| h.get(i..i + 2).and_then(|b| u8::from_str_radix(b, 16).ok()))
                    .collect::<Option<Vec<u8>>>()
                    .filter(|_| h.len() % 2 == 0)
                    .ok_or_else(|| self.err(format!("bad hex {h:?}")))?;
                ScriptAction::Plain(Action::Inject(bytes))
            }
            other => return Err(self.err(format!("unknown action {other:?}"))),
        };
        if let Some(extra) = w.next() {
            return Err(self.err(format!("unexpected {extra:?}")));
        }
        Ok(action)
    }
}

/// Parses a scenario. `file` only labels error messages.
pub fn parse(file: &str, text: &str) -> Result<Scenario, CliError> {
    let mut name = None;
    let mut steps = Vec::new();
    let mut participants = false;
    for (i, raw) in text.lines().enumerate() {
        let p = LineParser { file, line: i + 1 };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (verb, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let mut w = rest.split_whitespace();
        let d = match verb {
            "scenario" => {
                let n = p.word(w.next(), "name")?.to_string();
                name = Some(n.clone());
                Directive::Name(n)
            }
            "seed" | "modulus" | "window" | "clock" | "backend" if participants => {
                return Err(p.err(format!("{verb} must come before any atm or user")));
            }
            "seed" => Directive::Seed(p.number(w.next(), "seed")?),
            "modulus" => Directive::Modulus(match w.next() {
                Some("mersenne61") => MERSENNE_61,
                Some("fixture") => sfamss::share::FIXTURE_PRIME,
                n => {
                    let m = p.number(n, "modulus")?;
                    Modulus::new(m).map_err(|e| p.err(e.to_string()))?;
                    m
                }
            }),
            "window" => match p.number(w.next(), "window")? {
                0 => return Err(p.err("window must be positive")),
                ms => Directive::Window(ms),
            },
            "clock" => Directive::Clock(p.number(w.next(), "clock")?),
            "backend" => {
                let b = p.word(w.next(), "backend")?;
                Directive::Backend(b.parse().map_err(|_| p.err(format!("unknown backend {b:?}")))?)
            }
            "atm" => {
                participants = true;
                Directive::Atm(p.word(w.next(), "atm name")?.to_string())
            }
            "user" => {
                participants = true;
                let name = p.word(w.next(), "user name")?.to_string();
                let mut pin = None;
                let mut limit = DEFAULT_LIMIT;
                while let Some(k) = w.next() {
                    match k {
                        "pin" => pin = Some(p.word(w.next(), "pin")?.to_string()),
                        "limit" => limit = p.number(w.next(), "limit")?,
                        other => return Err(p.err(format!("unexpected {other:?}"))),
                    }
                }
                let pin = pin.ok_or_else(|| p.err("user needs a pin"))?;
                Directive::User { name, pin, limit }
            }
            "advance" => Directive::Advance(p.number(w.next(), "milliseconds")?),
            "script" => Directive::Script(
                rest.split(',')
                    .map(|a| p.action(a.trim()))
                    .collect::<Result<_, _>>()?,
            ),
            "session" => {
                let user = p.word(w.next(), "user")?.to_string();
                let atm = p.word(w.next(), "atm")?.to_string();
                let (mut pin, mut amount, mut expect, mut expect_authz) = (None, None, None, None);
                while let Some(k) = w.next() {
                    match k {
                        "pin" => pin = Some(p.word(w.next(), "pin")?.to_string()),
                        "amount" => amount = Some(p.number(w.next(), "amount")?),
                        "expect" => {
                            expect = Some(p.word(w.next(), "expected outcome")?.to_string());
                            expect_authz = w.next().map(str::to_string);
                        }
                        other => return Err(p.err(format!("unexpected {other:?}"))),
                    }
                }
                Directive::Session {
                    user,
                    atm,
                    pin,
                    amount,
                    expect: expect.ok_or_else(|| p.err("session needs `expect <OUTCOME>`"))?,
                    expect_authz,
                }
            }
            "impersonate" => {
                let user = p.word(w.next(), "user")?.to_string();
                let atm = p.word(w.next(), "atm")?.to_string();
                if w.next() != Some("expect") {
                    return Err(p.err("impersonate needs `expect <OUTCOME>`"));
                }
                let expect = p.word(w.next(), "expected outcome")?.to_string();
                Directive::Impersonate { user, atm, expect }
            }
            "no-plaintext-share" => Directive::NoPlaintextShare(p.word(w.next(), "user")?.to_string()),
            other => return Err(p.err(format!("unknown directive {other:?}"))),
        };
        if !matches!(d, Directive::User { .. } | Directive::Session { .. } | Directive::Script(_))
            && w.next().is_some()
        {
            return Err(p.err("trailing words"));
        }
        steps.push((i + 1, d));
    }
    let name = name.ok_or_else(|| CliError::Parse {
        file: file.to_string(),
        line: 1,
        msg: "missing `scenario <name>` line".into(),
    })?;
    Ok(Scenario { name, steps })
}

/// Baseline settings for a run; scenario lines override them.
#[derive(Clone, Debug)]
pub struct RunDefaults {
    pub backend: BackendKind,
    pub seed: u64,
    pub modulus: u64,
    pub window_ms: u64,
    pub clock_ms: u64,
}

impl Default for RunDefaults {
    fn default() -> Self {
        RunDefaults {
            backend: BackendKind::Curve25519,
            seed: 1,
            modulus: MERSENNE_61,
            window_ms: FreshnessPolicy::DEFAULT_WINDOW_MS,
            clock_ms: DEFAULT_CLOCK_MS,
        }
    }
}

impl RunDefaults {
    pub fn from_settings(s: &Settings, clock_ms: Option<u64>) -> Self {
        RunDefaults {
            backend: if s.seed.is_some() { BackendKind::Curve25519 } else { s.backend },
            seed: s.seed.unwrap_or(1),
            modulus: s.modulus,
            window_ms: s.window_ms,
            clock_ms: clock_ms.unwrap_or(DEFAULT_CLOCK_MS),
        }
    }
}

struct World {
    net: Network,
    clock: Arc<ManualClock>,
    policy: FreshnessPolicy,
    adversary: Adversary,
    atms: HashMap<String, Atm>,
    cards: HashMap<String, Card>,
}

impl World {
    fn new(d: &RunDefaults) -> Result<World, CliError> {
        let clock = Arc::new(ManualClock::new(d.clock_ms));
        let policy = FreshnessPolicy::new(d.window_ms, clock.clone())
            .ok_or_else(|| CliError::Usage("window must be positive".into()))?;
        let backend = match d.backend {
            BackendKind::Curve25519 => backend_for(d.backend, Some(d.seed))?,
            BackendKind::Rsa2048 => backend_for(d.backend, None)?,
        };
        let modulus = Modulus::new(d.modulus).map_err(|e| CliError::Usage(e.to_string()))?;
        let net = Network::new(backend, Secrets::Random(modulus), policy.clone(), d.seed)?;
        Ok(World {
            net,
            adversary: Adversary::new(ChannelScript::deliver_all(), clock.clone()),
            clock,
            policy,
            atms: HashMap::new(),
            cards: HashMap::new(),
        })
    }

    fn atm(&self, name: &str, line: usize) -> Result<&Atm, CliError> {
        self.atms.get(name).ok_or_else(|| CliError::Parse {
            file: "scenario".into(),
            line,
            msg: format!("unknown atm {name:?}"),
        })
    }

    fn card_mut(&mut self, name: &str, line: usize) -> Result<&mut Card, CliError> {
        self.cards.get_mut(name).ok_or_else(|| CliError::Parse {
            file: "scenario".into(),
            line,
            msg: format!("unknown user {name:?}"),
        })
    }

    /// The 16-byte plaintext of a user's share, recovered with the card's
    /// own session key. Only the harness does this, to search for leaks.
    fn plaintext_share(&self, card: &Card) -> Result<[u8; 16], CliError> {
        let raw = self
            .net
            .backend
            .open(OpenKey::Session(&card.session_key), &card.sealed_d_user)?;
        let share = SharePoint::from_bytes(self.net.modulus(), &raw).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(share.to_bytes())
    }

    /// A card presenting a real user's id and certificate, but holding the
    /// attacker's own key pair and a share the attacker made up.
    fn forge_card(&self, victim: &Card) -> Result<Card, CliError> {
        let backend = &*self.net.backend;
        let keypair = backend.generate_keypair()?;
        let cert = victim.certificate.clone();
        let (pending, _) = CardPending::start(
            backend,
            victim.user_id,
            keypair,
            cert,
            &self.net.bank.certificate().subject_public,
        )?;
        let m = self.net.modulus();
        let guess = SharePoint::new(m.reduce(victim.user_id.0), m.reduce(12345));
        let m6 = Message::UserRegisterResponse {
            sealed_d_user: backend.seal(SealKey::Session(pending.session_key()), &guess.to_bytes())?,
        };
        Ok(pending.complete(backend, &m6, m, "0000")?)
    }
}

fn resolve(adv: &Adversary, actions: &[ScriptAction], line: usize) -> Result<ChannelScript, CliError> {
    actions
        .iter()
        .map(|a| match a {
            ScriptAction::Plain(a) => Ok(a.clone()),
            ScriptAction::Replay(ReplayRef::Index(i)) => Ok(Action::Replay(*i)),
            ScriptAction::Replay(ReplayRef::Last(hop)) => adv
                .transcript()
                .entries()
                .iter()
                .rposition(|e| e.hop == *hop)
                .map(Action::Replay)
                .ok_or_else(|| CliError::Parse {
                    file: "scenario".into(),
                    line,
                    msg: format!("nothing captured on {} yet", hop.name()),
                }),
        })
        .collect::<Result<Vec<_>, _>>()
        .map(ChannelScript::new)
}

/// Runs a parsed scenario and checks every expectation.
pub fn run(scenario: &Scenario, defaults: &RunDefaults) -> Result<ScenarioReport, CliError> {
    let mut d = defaults.clone();
    let mut world: Option<World> = None;
    let mut report = ScenarioReport::new(&scenario.name);
    let name = scenario.name.as_str();

    for (line, directive) in &scenario.steps {
        let line = *line;
        if world.is_none()
            && matches!(
                directive,
                Directive::Atm(_)
                    | Directive::User { .. }
                    | Directive::Session { .. }
                    | Directive::Impersonate { .. }
                    | Directive::Script(_)
                    | Directive::Advance(_)
                    | Directive::NoPlaintextShare(_)
            )
        {
            world = Some(World::new(&d)?);
        }
        match directive {
            Directive::Name(_) => {}
            Directive::Seed(s) => d.seed = *s,
            Directive::Modulus(m) => d.modulus = *m,
            Directive::Window(w) => d.window_ms = *w,
            Directive::Clock(c) => d.clock_ms = *c,
            Directive::Backend(b) => d.backend = *b,
            Directive::Atm(n) => {
                let w = world.as_mut().expect("world exists");
                let atm = w.net.register_atm()?;
                w.atms.insert(n.clone(), atm);
            }
            Directive::User { name: n, pin, limit } => {
                let w = world.as_mut().expect("world exists");
                let card = w.net.register_user(pin, UserPrivileges { withdrawal_limit: *limit })?;
                w.cards.insert(n.clone(), card);
            }
            Directive::Advance(ms) => {
                world.as_ref().expect("world exists").clock.advance(*ms);
            }
            Directive::Script(actions) => {
                let w = world.as_mut().expect("world exists");
                let script = resolve(&w.adversary, actions, line)?;
                w.adversary.set_script(script);
            }
            Directive::Session {
                user,
                atm,
                pin,
                amount,
                expect,
                expect_authz,
            } => {
                let w = world.as_mut().expect("world exists");
                let atm = w.atm(atm, line)?.clone();
                let mut card = w.card_mut(user, line)?.clone();
                let pin = match pin {
                    Some(p) => p.clone(),
                    None => registered_pin(scenario, user).unwrap_or_default(),
                };
                let params = SessionParams {
                    backend: &*w.net.backend,
                    policy: &w.policy,
                    pin: &pin,
                    amount: *amount,
                };
                let out = run_session(&params, &mut card, &atm, &mut w.adversary, &mut LocalLink(&w.net.bank));
                *w.card_mut(user, line)? = card;
                w.adversary.set_script(ChannelScript::deliver_all());
                let mut step = StepReport::session(name, report.steps.len() + 1, &out);
                step.line = Some(line);
                step.ok = step.outcome == *expect
                    && expect_authz.as_ref().is_none_or(|a| step.authz.as_deref() == Some(a.as_str()));
                step.expected = Some(match expect_authz {
                    Some(a) => format!("{expect} {a}"),
                    None => expect.clone(),
                });
                report.steps.push(step);
            }
            Directive::Impersonate { user, atm, expect } => {
                let w = world.as_mut().expect("world exists");
                let atm = w.atm(atm, line)?.clone();
                let victim = w.card_mut(user, line)?.clone();
                let mut forged = w.forge_card(&victim)?;
                let params = SessionParams {
                    backend: &*w.net.backend,
                    policy: &w.policy,
                    pin: "0000",
                    amount: None,
                };
                let out = run_session(&params, &mut forged, &atm, &mut w.adversary, &mut LocalLink(&w.net.bank));
                w.adversary.set_script(ChannelScript::deliver_all());
                let mut step = StepReport::session(name, report.steps.len() + 1, &out);
                step.action = "impersonate".into();
                step.line = Some(line);
                step.ok = step.outcome == *expect;
                step.expected = Some(expect.clone());
                report.steps.push(step);
            }
            Directive::NoPlaintextShare(user) => {
                let w = world.as_mut().expect("world exists");
                let card = w.card_mut(user, line)?.clone();
                let needle = w.plaintext_share(&card)?;
                let findings = w
                    .adversary
                    .transcript()
                    .entries()
                    .iter()
                    .filter(|e| contains(&e.bytes, &needle) || e.delivered.as_deref().is_some_and(|d| contains(d, &needle)))
                    .count();
                *report.plaintext_share_findings.get_or_insert(0) += findings;
                report.steps.push(StepReport {
                    scenario: name.to_string(),
                    step: report.steps.len() + 1,
                    line: Some(line),
                    action: "no-plaintext-share".into(),
                    user_id: Some(card.user_id.0),
                    atm_id: None,
                    t_s: None,
                    outcome: format!("FINDINGS={findings}"),
                    authz: None,
                    decided_by: None,
                    accepted: false,
                    expected: Some("FINDINGS=0".into()),
                    ok: findings == 0,
                });
            }
        }
    }
    if let Some(w) = &world {
        report.transcript_digest = w.adversary.transcript().digest();
        let _ = w.clock.now_ms();
    }
    Ok(report)
}

fn registered_pin(scenario: &Scenario, user: &str) -> Option<String> {
    scenario.steps.iter().find_map(|(_, d)| match d {
        Directive::User { name, pin, .. } if name == user => Some(pin.clone()),
        _ => None,
    })
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse() {
        for (name, text) in BUNDLED {
            let s = parse(name, text).unwrap();
            assert_eq!(s.name, name);
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "scenario x\natm A\nuser U pin 1\nsession U A expect\n";
        match parse("x.scn", text) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let text = "scenario x\n\n# comment\nfrobnicate\n";
        assert!(matches!(parse("x.scn", text), Err(CliError::Parse { line: 4, .. })));
        assert!(matches!(parse("x.scn", "atm A\n"), Err(CliError::Parse { .. })));
        assert!(matches!(
            parse("x.scn", "scenario x\natm A\nseed 3\n"),
            Err(CliError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn script_actions_parse() {
        let s = parse(
            "x",
            "scenario x\natm A\nscript deliver, drop, replay 3, replay last card-atm, tamper 29 0x01, inject 5346\n",
        )
        .unwrap();
        let Directive::Script(actions) = &s.steps[2].1 else { panic!() };
        assert_eq!(
            actions,
            &vec![
                ScriptAction::Plain(Action::Deliver),
                ScriptAction::Plain(Action::Drop),
                ScriptAction::Replay(ReplayRef::Index(3)),
                ScriptAction::Replay(ReplayRef::Last(Hop::CardToAtm)),
                ScriptAction::Plain(Action::Tamper { offset: 29, mask: 1 }),
                ScriptAction::Plain(Action::Inject(vec![0x53, 0x46])),
            ]
        );
    }

    #[test]
    fn bundled_scenarios_pass() {
        for (name, text) in BUNDLED {
            let report = run(&parse(name, text).unwrap(), &RunDefaults::default()).unwrap();
            assert!(report.passed(), "{name}: {:#?}", report.steps);
        }
    }

    #[test]
    fn wrong_expectation_fails() {
        let text = "scenario x\natm A\nuser U pin 1\nsession U A expect REPLAY\n";
        let report = run(&parse("x", text).unwrap(), &RunDefaults::default()).unwrap();
        assert!(!report.passed());
        assert_eq!(report.steps[0].outcome, "ACCEPT");
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let s = parse("replay", bundled("replay").unwrap()).unwrap();
        let a = run(&s, &RunDefaults::default()).unwrap();
        let b = run(&s, &RunDefaults::default()).unwrap();
        assert_eq!(a.transcript_digest, b.transcript_digest);
        assert_eq!(a.summary().decisions, b.summary().decisions);
    }
}
