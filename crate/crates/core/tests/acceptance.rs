//! Acceptance gate: one check per primary criterion, one pass/fail line each.
//! Runs under `cargo test --test acceptance`; exits non-zero if any fails.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robochar::action::{self, validate_selection, ActionSelection, SelectionContext, SPEAK_ONLY};
use robochar::appraisal::{
    derive_emotion, AppraisalRecord, EmotionLabel, EmotionState, HumanInput,
};
use robochar::data;
use robochar::engine::{self, AgentConfig, Session, SessionState};
use robochar::llm::{BackendError, MockBackend, ScriptedBackend};
use robochar::memory::{retrieve, EpisodicRecord, MemoryStore, RetrievalQuery, SemanticMemory};
use robochar::persona::{BigFive, PersonalityProfile, TraitLevel};
use robochar::scenario::{run_matrix, Script};
use robochar::server::eventlog;
use serde_json::{json, Value};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn config(json: &str) -> AgentConfig {
    AgentConfig::from_json(json).expect("shipped config")
}

fn main() {
    let checks: [(u32, &str, Check); 9] = [
        (1, "persona distinctness", persona_distinctness),
        (2, "memory ablation", memory_ablation),
        (3, "emotion ablation", emotion_ablation),
        (4, "reflection", reflection),
        (5, "retrieval properties", retrieval_properties),
        (6, "determinism", determinism),
        (7, "action safety", action_safety),
        (8, "emotion formula", emotion_formula),
        (9, "crash recovery", crash_recovery),
    ];
    let mut failed = 0;
    for (n, name, check) in checks {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let ms = started.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("criterion {n} PASS {name} [{ms} ms]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL {name} [{ms} ms]: {detail}");
            }
        }
    }
    println!("{} of 9 primary criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

/// Criterion 1: Adam, Bella and Caleb pick pairwise-distinct actions on the
/// first two scenario turns.
fn persona_distinctness() -> Result<String, String> {
    let started = Instant::now();
    let configs = [
        config(data::ADAM_CONFIG_JSON),
        config(data::BELLA_CONFIG_JSON),
        config(data::CALEB_CONFIG_JSON),
    ];
    let report = run_matrix(&Script::ella_arc(), &configs);
    let elapsed = started.elapsed();
    ensure(report.configs.iter().all(|c| c.error.is_none()), || {
        format!("{:?}", report.configs)
    })?;

    // Independent route: compare the transcripts directly rather than
    // trusting the report's rate.
    let turns: Vec<Vec<&robochar::engine::TurnResult>> = report
        .transcripts
        .iter()
        .map(|t| t.as_ref().unwrap().turns().collect())
        .collect();
    for turn in 0..2 {
        let keys: Vec<_> = turns
            .iter()
            .map(|t| {
                (
                    t[turn].selection.action_id.clone(),
                    t[turn].selection.bindings.clone(),
                )
            })
            .collect();
        for a in 0..3 {
            for b in a + 1..3 {
                ensure(keys[a] != keys[b], || {
                    format!("turn {}: {:?} == {:?}", turn + 1, keys[a], keys[b])
                })?;
            }
        }
        ensure(report.rows[turn].distinct_rate == 1.0, || {
            format!(
                "turn {} distinct rate {}",
                turn + 1,
                report.rows[turn].distinct_rate
            )
        })?;
    }
    // Hand-evaluated mock table: (high A -> flower, high C -> tea,
    // high E -> plate) and (energy bar, student id, door check).
    let expected = [
        [
            "brew_drink(drink=tea)",
            "pick_place(object=flower)",
            "pick_place(object=plate)",
        ],
        [
            "pick_place(object=student_id)",
            "fetch_ingredient(object=energy_bar)",
            "perform_motion(motion=block_door)",
        ],
    ];
    for (turn, row) in expected.iter().enumerate() {
        for (c, want) in row.iter().enumerate() {
            let got = turns[c][turn].selection.call_text();
            ensure(got == *want, || {
                format!("{} turn {}: {got} != {want}", configs[c].name, turn + 1)
            })?;
        }
    }
    ensure(elapsed < Duration::from_secs(5), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "distinct rate 1.00 on turns 1-2 ({}; {}), {:?}",
        report.rows[0]
            .selections
            .iter()
            .flatten()
            .cloned()
            .collect::<Vec<_>>()
            .join(" / "),
        report.rows[1]
            .selections
            .iter()
            .flatten()
            .cloned()
            .collect::<Vec<_>>()
            .join(" / "),
        elapsed
    ))
}

/// Criterion 2: memory-on Caleb links the curve to the exam, memory-off
/// Caleb does not, and the memory-off store never holds anything.
fn memory_ablation() -> Result<String, String> {
    let started = Instant::now();
    let on = config(data::CALEB_CONFIG_JSON);
    let off = config(data::CALEB_NO_MEMORY_CONFIG_JSON);
    let script = Script::ella_arc();
    let report = run_matrix(&script, &[on.clone(), off.clone()]);
    ensure(report.rows[3].divergent, || {
        "scenario IV not flagged divergent".into()
    })?;

    let t_on = engine::replay(&on, &script.inputs()).map_err(|e| e.to_string())?;
    let intent_on = t_on
        .turns()
        .nth(3)
        .unwrap()
        .appraisal
        .inferred_intent
        .clone();
    ensure(intent_on.to_lowercase().contains("exam"), || {
        format!("memory-on intent: {intent_on}")
    })?;

    let mut session = Session::new(off).map_err(|e| e.to_string())?;
    let mut intent_off = String::new();
    for input in script.inputs() {
        while session.clock().day < input.day {
            session.end_day().map_err(|e| e.to_string())?;
            ensure(session.store().is_empty(), || {
                "store filled by end_day".into()
            })?;
        }
        let r = session.step(input).map_err(|e| e.to_string())?;
        ensure(session.store().is_empty() && r.retrieved.is_empty(), || {
            "memory-off store touched".into()
        })?;
        intent_off = r.appraisal.inferred_intent;
    }
    session.end_day().map_err(|e| e.to_string())?;
    ensure(*session.store() == MemoryStore::new(), || {
        "store not pristine".into()
    })?;
    ensure(!intent_off.to_lowercase().contains("exam"), || {
        format!("memory-off intent: {intent_off}")
    })?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(5), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "on: \"{intent_on}\"; off: \"{intent_off}\"; {elapsed:?}"
    ))
}

/// Criterion 3: sarcasm is caught only with emotional processing on.
fn emotion_ablation() -> Result<String, String> {
    let script = Script::ella_arc();
    let on = engine::replay(&config(data::CALEB_CONFIG_JSON), &script.inputs())
        .map_err(|e| e.to_string())?;
    let v_on = on.turns().nth(2).unwrap().appraisal.valence;
    ensure(v_on <= -0.3, || format!("emotion-on valence {v_on}"))?;

    let mut v_off = None;
    let mut checked = 0;
    for (name, profile) in [
        ("adam", PersonalityProfile::adam()),
        ("bella", PersonalityProfile::bella()),
        ("caleb", PersonalityProfile::caleb()),
    ] {
        let mut c = AgentConfig::new(name, profile).with_ablation(true, false);
        if name == "caleb" {
            c = config(data::CALEB_NO_EMOTION_CONFIG_JSON);
        }
        let t = engine::replay(&c, &script.inputs()).map_err(|e| e.to_string())?;
        for turn in t.turns() {
            checked += 1;
            ensure(
                turn.emotion == EmotionState::neutral() && turn.emotion.intensity == 0.0,
                || format!("{name}: non-neutral emotion {:?}", turn.emotion),
            )?;
        }
        let v = t.turns().nth(2).unwrap().appraisal.valence;
        ensure(v >= 0.3, || format!("{name} emotion-off valence {v}"))?;
        if name == "caleb" {
            v_off = Some(v);
        }
    }
    Ok(format!(
        "scenario III valence on {v_on:+.2}, off {:+.2}; {checked} emotion-off turns neutral",
        v_off.unwrap()
    ))
}

fn playful_episode(day: u32, ts: u64, motion: &str) -> EpisodicRecord {
    let mut bindings = BTreeMap::new();
    bindings.insert("motion".to_string(), motion.to_string());
    EpisodicRecord {
        id: String::new(),
        day,
        timestamp: ts,
        human_action: "[looks down] \"Rough day.\" (read as: feeling low)".into(),
        human_valence: -0.4,
        robot_emotion: EmotionState::neutral(),
        robot_response: ActionSelection {
            action_id: "perform_motion".into(),
            bindings,
            utterance: "Watch this.".into(),
            rationale: String::new(),
        },
        observed_reaction: "laughs".into(),
        reaction_valence: 0.5 + 0.2 * (ts % 3) as f64,
        importance: 0.6,
    }
}

/// Criterion 4: three well-received playful episodes become one preference.
fn reflection() -> Result<String, String> {
    let mut store = MemoryStore::new();
    for (ts, motion) in [(1, "dance_twirl"), (2, "sway"), (3, "dance_twirl")] {
        store
            .log_episode(playful_episode(1, ts, motion))
            .map_err(|e| e.to_string())?;
    }
    let ids: Vec<String> = store.episodic.iter().map(|e| e.id.clone()).collect();
    let r = store
        .reflect(
            1,
            &PersonalityProfile::caleb().render(),
            &MockBackend::new(7),
            2,
        )
        .map_err(|e| e.to_string())?;
    let citing: Vec<&SemanticMemory> = r
        .memories
        .iter()
        .filter(|m| ids.iter().all(|id| m.supporting_episodes.contains(id)))
        .collect();
    ensure(!citing.is_empty(), || {
        format!("no memory cites all of {ids:?}: {:?}", r.memories)
    })?;
    for m in &r.memories {
        ensure((0.0..=1.0).contains(&m.confidence), || {
            format!("confidence {}", m.confidence)
        })?;
    }
    store.check_invariants()?;
    Ok(format!(
        "\"{}\" cites {:?} with confidence {:.2}",
        citing[0].statement, citing[0].supporting_episodes, citing[0].confidence
    ))
}

const WORDS: [&str; 12] = [
    "exam", "curve", "tea", "dinner", "steak", "mike", "flower", "stress", "dance", "snack",
    "door", "juice",
];

fn random_store(rng: &mut ChaCha8Rng) -> MemoryStore {
    let mut store = MemoryStore::new();
    let n = rng.random_range(0..25);
    let mut day = 1;
    for ts in 1..=n {
        day += rng.random_range(0..3);
        let words: Vec<&str> = (0..rng.random_range(1..5))
            .map(|_| WORDS[rng.random_range(0..WORDS.len())])
            .collect();
        let mut e = playful_episode(day, ts, "sway");
        e.human_action = words.join(" ");
        e.importance = rng.random_range(0.0..=1.0);
        store.log_episode(e).unwrap();
    }
    for i in 0..rng.random_range(0..4) {
        store.semantic.push(SemanticMemory {
            id: format!("sem-{}", i + 1),
            statement: format!("the user likes {}", WORDS[rng.random_range(0..WORDS.len())]),
            supporting_episodes: Vec::new(),
            created_day: rng.random_range(1..=day),
            created_at: rng.random_range(0..=n),
            confidence: rng.random_range(0.0..=1.0),
        });
    }
    store
}

/// Criterion 5: retrieval properties over 1,000 randomized stores.
fn retrieval_properties() -> Result<String, String> {
    let mut runner = TestRunner::new(PtConfig {
        cases: 1000,
        failure_persistence: None,
        ..PtConfig::default()
    });
    let strategy = (
        any::<u64>(),
        0usize..12,
        0u32..40,
        prop::sample::subsequence(WORDS.to_vec(), 1..4),
    );
    runner
        .run(&strategy, |(seed, top_k, extra_days, query_words)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut store = random_store(&mut rng);
            let query_text = query_words.join(" ");
            let last_day = store.episodic.last().map(|e| e.day).unwrap_or(1);
            let now = last_day + extra_days;

            // Newer duplicate of a random episode: identical text apart from
            // the day, identical importance.
            let dup = if store.episodic.is_empty() {
                None
            } else {
                let i = rng.random_range(0..store.episodic.len());
                let mut copy = store.episodic[i].clone();
                copy.day = now;
                copy.timestamp = store.episodic.last().unwrap().timestamp + 1;
                let old = store.episodic[i].id.clone();
                let new = store.log_episode(copy).unwrap();
                Some((old, new))
            };

            let q = RetrievalQuery::new(query_text.clone(), now, top_k);
            let got = retrieve(&store, &q);
            prop_assert_eq!(got.len(), top_k.min(store.len()));
            for w in got.windows(2) {
                prop_assert!(w[0].score >= w[1].score);
            }
            for m in &got {
                prop_assert!((0.0..=1.0).contains(&m.score), "score {}", m.score);
                let day = store
                    .episodic
                    .iter()
                    .find(|e| e.id == m.id)
                    .map(|e| e.day)
                    .or_else(|| {
                        store
                            .semantic
                            .iter()
                            .find(|s| s.id == m.id)
                            .map(|s| s.created_day)
                    })
                    .unwrap();
                // Half-life form of the decay, independent of the crate's exp().
                let recency = 0.5f64.powf((now - day) as f64 / 7.0);
                let oracle = (recency + m.importance + m.relevance) / 3.0;
                prop_assert!(
                    (m.score - oracle).abs() < 1e-12,
                    "score {} oracle {}",
                    m.score,
                    oracle
                );
            }
            if let Some((old, new)) = dup {
                let full = retrieve(&store, &RetrievalQuery::new(query_text, now, store.len()));
                let pos = |id: &str| full.iter().position(|m| m.id == id).unwrap();
                prop_assert!(
                    pos(&new) < pos(&old),
                    "newer duplicate {} ranked after {}",
                    new,
                    old
                );
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 random stores: score bounds, closed form, ordering, top_k, newer-first".into())
}

/// Criterion 6: replays are byte-identical on disk.
fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let inputs = Script::ella_arc().inputs();
    let mut sizes = Vec::new();
    for (name, json) in [
        ("adam", data::ADAM_CONFIG_JSON),
        ("bella", data::BELLA_CONFIG_JSON),
        ("caleb", data::CALEB_CONFIG_JSON),
    ] {
        let c = config(json);
        let a = dir.path().join(format!("{name}.a.json"));
        let b = dir.path().join(format!("{name}.b.json"));
        std::fs::write(
            &a,
            engine::replay(&c, &inputs)
                .map_err(|e| e.to_string())?
                .to_json(),
        )
        .unwrap();
        std::fs::write(
            &b,
            engine::replay(&c, &inputs)
                .map_err(|e| e.to_string())?
                .to_json(),
        )
        .unwrap();
        let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        ensure(x == y, || format!("{name}: transcripts differ"))?;
        sizes.push(x.len());
    }
    Ok(format!("three configs, identical bytes ({sizes:?} bytes)"))
}

fn adversarial(rng: &mut ChaCha8Rng) -> String {
    let actions = [
        "brew_drink",
        "fetch_ingredient",
        "pick_place",
        "perform_motion",
        "speak_only",
        "launch_rocket",
        "",
        "BREW_DRINK",
    ];
    let keys = ["drink", "object", "motion", "target", "", "object "];
    let values = [
        "tea",
        "steak",
        "flower",
        "dance_twirl",
        "kettle",
        "chainsaw",
        "moonwalk",
        "",
        "glass\n",
        "sway",
    ];
    let pick = |rng: &mut ChaCha8Rng, xs: &[&str]| xs[rng.random_range(0..xs.len())].to_string();
    match rng.random_range(0..10) {
        0 => {
            let len = rng.random_range(0..60);
            (0..len).map(|_| rng.random_range(0x20u8..0x7f) as char).collect()
        }
        1 => "{\"action\": ".into(),
        2 => json!({ "action": pick(rng, &actions), "bindings": { pick(rng, &keys): rng.random::<f64>() }, "utterance": "x" }).to_string(),
        3 => json!({ "action": pick(rng, &actions), "bindings": [pick(rng, &values)], "utterance": "x" }).to_string(),
        4 => json!({ "act": pick(rng, &actions), "utterance": "x" }).to_string(),
        5 => json!({ "action": pick(rng, &actions), "bindings": {}, "utterance": "x", "extra": 1 }).to_string(),
        6 => format!("Sure! {}", json!({ "action": "pick_place", "bindings": { "object": pick(rng, &values) }, "utterance": "x" })),
        7 => {
            let mut b = serde_json::Map::new();
            for _ in 0..rng.random_range(0..4) {
                b.insert(pick(rng, &keys), Value::String(pick(rng, &values)));
            }
            json!({ "action": pick(rng, &actions), "bindings": b, "utterance": "x" }).to_string()
        }
        8 => json!({ "action": "perform_motion", "bindings": { "motion": pick(rng, &values) }, "utterance": pick(rng, &values) }).to_string(),
        _ => json!({ "action": pick(rng, &actions), "bindings": { pick(rng, &keys): pick(rng, &values) }, "utterance": "x", "rationale": "r" }).to_string(),
    }
}

/// Criterion 7: no adversarial backend output escapes validation.
fn action_safety() -> Result<String, String> {
    let space = action::default_kitchen_space();
    let profile = PersonalityProfile::caleb();
    let input = HumanInput::new("That went so well.", &["speaks in a dry and flat voice"], 2);
    let appraisal = AppraisalRecord {
        relevance: 0.8,
        valence: -0.6,
        impact: 0.7,
        inferred_intent: "sarcasm".into(),
        rationale: String::new(),
    };
    let emotion = EmotionState::neutral();
    let ctx = SelectionContext {
        input: &input,
        appraisal: &appraisal,
        emotion: &emotion,
        profile: &profile,
        memory_texts: None,
        space: &space,
        emotion_enabled: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5afe);
    let (mut fallbacks, mut accepted) = (0, 0);
    for case in 0..1000 {
        let budget = rng.random_range(0..4u32);
        let answers: Vec<Result<String, BackendError>> =
            (0..budget + 3).map(|_| Ok(adversarial(&mut rng))).collect();
        let scripted = ScriptedBackend::new(answers.clone());
        let out = action::select_action(&ctx, &scripted, budget)
            .map_err(|e| format!("case {case}: {e}"))?;
        ensure(validate_selection(&out.selection, &space).is_ok(), || {
            format!(
                "case {case}: invalid selection escaped: {:?}",
                out.selection
            )
        })?;
        ensure(
            scripted.calls() as u32 <= budget + 1 && out.attempts <= budget + 1,
            || {
                format!(
                    "case {case}: {} calls for budget {budget}",
                    scripted.calls()
                )
            },
        )?;
        if out.fallback_reason.is_some() {
            fallbacks += 1;
            ensure(
                out.selection.action_id == SPEAK_ONLY && out.attempts == budget + 1,
                || format!("case {case}: fallback after {} attempts", out.attempts),
            )?;
        } else {
            accepted += 1;
        }
    }
    Ok(format!(
        "1000 cases: {fallbacks} fell back to speak_only, {accepted} accepted valid answers"
    ))
}

/// Criterion 8: intensity and arousal match their closed forms on a grid.
fn emotion_formula() -> Result<String, String> {
    let mut points = 0;
    let prior = EmotionState::neutral();
    for n in TraitLevel::ALL {
        for e in TraitLevel::ALL {
            let mut traits = BigFive::uniform(TraitLevel::Medium);
            traits.neuroticism = n;
            traits.extraversion = e;
            let profile = PersonalityProfile::from_parameters(traits, Vec::new());
            let (nv, ev) = (n.index() as f64 / 4.0, e.index() as f64 / 4.0);
            for vi in -20..=20 {
                for ii in 0..=20 {
                    let valence = vi as f64 / 20.0;
                    let impact = ii as f64 / 20.0;
                    let a = AppraisalRecord {
                        relevance: 0.5,
                        valence,
                        impact,
                        inferred_intent: String::new(),
                        rationale: String::new(),
                    };
                    let got = derive_emotion(&a, &profile, &prior, true);
                    let neg = if valence < 0.0 { 1.0 } else { 0.0 };
                    let intensity = (impact * (1.0 + 0.5 * (nv - 0.5) * neg)).clamp(0.0, 1.0);
                    let arousal = (impact * (0.5 + ev)).clamp(0.0, 1.0);
                    ensure((got.intensity - intensity).abs() <= 1e-9, || {
                        format!(
                            "intensity v={valence} i={impact} N={nv}: {} vs {intensity}",
                            got.intensity
                        )
                    })?;
                    ensure((got.arousal - arousal).abs() <= 1e-9, || {
                        format!("arousal i={impact} E={ev}: {} vs {arousal}", got.arousal)
                    })?;
                    ensure(got.valence == valence, || "valence not copied".into())?;
                    ensure(impact > 0.08 || got.label == EmotionLabel::Neutral, || {
                        format!("low impact {impact} labelled {:?}", got.label)
                    })?;
                    let off = derive_emotion(&a, &profile, &prior, false);
                    ensure(off == EmotionState::neutral(), || {
                        "disabled emotion not neutral".into()
                    })?;
                    points += 1;
                }
            }
        }
    }
    Ok(format!("{points} grid points within 1e-9"))
}

struct Server {
    child: Child,
    base: String,
}

impl Server {
    fn start(data: &Path) -> Server {
        let mut child = Command::new(env!("CARGO_BIN_EXE_robochar"))
            .args(["serve", "--port", "0", "--snapshot-every", "3", "--data"])
            .arg(data)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn server");
        let stdout = child.stdout.take().unwrap();
        let mut line = String::new();
        BufReader::new(stdout)
            .read_line(&mut line)
            .expect("server banner");
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .expect("listening line")
            .to_string();
        Server {
            child,
            base: format!("http://{addr}/v1"),
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(10)))
        .build()
        .into()
}

fn post(agent: &ureq::Agent, url: &str, body: &Value) -> Result<(u16, Value), String> {
    let mut resp = agent
        .post(url)
        .header("content-type", "application/json")
        .send(body.to_string())
        .map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| e.to_string())?;
    Ok((
        status,
        serde_json::from_str(&text).map_err(|e| format!("{e}: {text}"))?,
    ))
}

fn get(agent: &ureq::Agent, url: &str) -> Result<Value, String> {
    let mut resp = agent.get(url).call().map_err(|e| e.to_string())?;
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

#[derive(Clone)]
enum Op {
    Turn(HumanInput),
    EndDay,
}

/// Criterion 9: kill the server mid-run; the log rebuilds the store.
fn crash_recovery() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let caleb = config(data::CALEB_CONFIG_JSON);
    let mut ops = Vec::new();
    for input in Script::ella_arc().inputs() {
        let mut day = ops.iter().filter(|o| matches!(o, Op::EndDay)).count() as u32 + 1;
        while day < input.day {
            ops.push(Op::EndDay);
            day += 1;
        }
        ops.push(Op::Turn(input));
    }
    ops.push(Op::EndDay);
    let last = ops.len() - 1;

    let mut server = Server::start(dir.path());
    let http = agent();
    let (status, body) = post(
        &http,
        &format!("{}/sessions", server.base),
        &serde_json::to_value(&caleb).unwrap(),
    )?;
    ensure(status == 201, || format!("create: {status} {body}"))?;
    let id = body["session_id"].as_str().unwrap().to_string();
    let session_url = format!("{}/sessions/{id}", server.base);

    let send = move |http: &ureq::Agent, op: &Op| -> Result<u16, String> {
        match op {
            Op::Turn(input) => post(
                http,
                &format!("{session_url}/turns"),
                &serde_json::to_value(input).unwrap(),
            )
            .map(|r| r.0),
            Op::EndDay => post(http, &format!("{session_url}/end-day"), &json!({})).map(|r| r.0),
        }
    };
    let mut acknowledged = 0;
    for op in &ops[..last] {
        let status = send(&http, op)?;
        ensure(status == 200, || {
            format!("op {acknowledged}: status {status}")
        })?;
        acknowledged += 1;
    }
    // Kill while the final request may still be in flight.
    let in_flight = {
        let http = agent();
        let op = ops[last].clone();
        let send = send.clone();
        std::thread::spawn(move || send(&http, &op))
    };
    std::thread::sleep(Duration::from_millis(2));
    server.child.kill().map_err(|e| e.to_string())?;
    server.child.wait().map_err(|e| e.to_string())?;
    let _ = in_flight.join();

    let session_dir = dir.path().join("sessions").join(&id);
    let snapshot = eventlog::read_snapshot(&session_dir)
        .map_err(|e| e.to_string())?
        .ok_or("no snapshot")?;
    let recovered = eventlog::recover(&session_dir).map_err(|e| e.to_string())?;
    let from_log = eventlog::recover_from_log(&session_dir).map_err(|e| e.to_string())?;
    ensure(recovered.state == from_log.state, || {
        "snapshot+tail differs from full log replay".into()
    })?;
    let logged_ops = (recovered.last_seq - 1) as usize;
    ensure(
        logged_ops >= acknowledged && logged_ops <= ops.len(),
        || format!("{logged_ops} logged ops, {acknowledged} acknowledged"),
    )?;

    // Expected state: the same ops applied in-process.
    let mut expected = Session::new(caleb).map_err(|e| e.to_string())?;
    for op in &ops[..logged_ops] {
        match op {
            Op::Turn(input) => drop(expected.step(input.clone()).map_err(|e| e.to_string())?),
            Op::EndDay => drop(expected.end_day().map_err(|e| e.to_string())?),
        }
    }
    let strip = |s: &SessionState| SessionState {
        id: String::new(),
        ..s.clone()
    };
    ensure(strip(&recovered.state) == strip(expected.state()), || {
        "recovered state differs from in-process run".into()
    })?;
    ensure(recovered.state.store == *expected.store(), || {
        "store mismatch".into()
    })?;
    recovered.state.store.check_invariants()?;

    // A restarted server resumes the session from disk.
    let server = Server::start(dir.path());
    let memory = get(&agent(), &format!("{}/sessions/{id}/memory", server.base))?;
    ensure(
        memory["episodic"] == serde_json::to_value(&recovered.state.store.episodic).unwrap(),
        || "resumed episodic differs".into(),
    )?;
    ensure(
        memory["semantic"] == serde_json::to_value(&recovered.state.store.semantic).unwrap(),
        || "resumed semantic differs".into(),
    )?;
    Ok(format!(
        "snapshot at seq {} + {} logged events -> {} episodes, {} semantic; {acknowledged} acknowledged ops before kill, {logged_ops} logged",
        snapshot.seq,
        recovered.events_replayed,
        recovered.state.store.episodic.len(),
        recovered.state.store.semantic.len(),
    ))
}
