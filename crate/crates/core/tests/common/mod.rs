//! Shared fixtures and randomized generators for the integration suites.

#![allow(dead_code)]

pub mod oracle;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use kwf_core::binder::{BindMode, BindingPlan, MixObject, ObjectKind, Program, Term};
use kwf_core::crystal::{crystallize, Crystal, Magma, Requirement};
use kwf_core::keystructure::{
    parse_key_structure_file, parse_pattern, KeyStructure, Layer, SentencePattern,
};
use kwf_core::pnlu::{base_tags, KnowledgeElement, Source};

pub const SOFTWARE_DOC: &str = include_str!("../data/software.txt");
pub const SOFTWARE_KSL: &str = include_str!("../data/software.ksl");
pub const ERYTHROCYTE_KSL: &str = include_str!("../data/erythrocyte.ksl");
pub const ERYTHROCYTE_TEXT: &str = include_str!("../data/erythrocyte.txt");

pub fn software_ks() -> KeyStructure {
    parse_key_structure_file("software", SOFTWARE_KSL).unwrap()
}

pub fn erythrocyte_ks() -> KeyStructure {
    parse_key_structure_file("blood", ERYTHROCYTE_KSL).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// random sentence patterns and sentences for matcher fuzzing
// ---------------------------------------------------------------------------

/// Small overlapping vocabulary so keyword placements are genuinely
/// ambiguous now and then.
const WORDS: [&str; 12] =
    ["a", "b", "is", "of", "in", "part", "kind", "cell", "red", "ab", "etc.", "x"];

pub fn random_keyword(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=3);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// A random pattern with up to `max_slots` slots, alternating slots and
/// keywords, starting and ending with either.
pub fn random_pattern(rng: &mut ChaCha8Rng, max_slots: usize) -> SentencePattern {
    let slots = rng.gen_range(0..=max_slots);
    let mut parts: Vec<String> = Vec::new();
    if slots == 0 {
        parts.push(random_keyword(rng));
    } else {
        let lead_slot = rng.gen_bool(0.5);
        let trail_keyword = rng.gen_bool(0.5);
        let mut remaining = slots;
        if lead_slot {
            parts.push("*".to_string());
            remaining -= 1;
        }
        while remaining > 0 {
            parts.push(random_keyword(rng));
            parts.push("*".to_string());
            remaining -= 1;
        }
        if trail_keyword || !parts.iter().any(|p| p != "*") {
            parts.push(random_keyword(rng));
        }
    }
    let spec = parts.join(" ");
    let slot_count = parts.iter().filter(|p| *p == "*").count();
    let roles: Vec<String> = (1..=slot_count).map(|i| format!("r{i}")).collect();
    let role_refs: Vec<&str> = roles.iter().map(|s| s.as_str()).collect();
    parse_pattern("p", &spec, &role_refs, "tag", Layer::Core).unwrap()
}

pub fn random_sentence(rng: &mut ChaCha8Rng, max_words: usize) -> String {
    let n = rng.gen_range(1..=max_words);
    let mut s = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ");
    if rng.gen_bool(0.7) {
        s.push('.');
    }
    s
}

/// A sentence built from the pattern itself: keywords kept, slots filled
/// with random words. Usually (not always) matches, which is the point.
pub fn sentence_for_pattern(rng: &mut ChaCha8Rng, pattern: &SentencePattern) -> String {
    use kwf_core::keystructure::Token;
    let mut parts: Vec<String> = Vec::new();
    for token in &pattern.tokens {
        match token {
            Token::Keyword(k) => parts.push(k.clone()),
            Token::Slot(_) => {
                let n = rng.gen_range(1..=3);
                parts.push(
                    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" "),
                );
            }
        }
    }
    let mut s = parts.join(" ");
    if rng.gen_bool(0.7) {
        s.push('.');
    }
    s
}

// ---------------------------------------------------------------------------
// random elements and crystals
// ---------------------------------------------------------------------------

const TAGS: [&str; 5] = [
    "concept-definition",
    "classification",
    "extensional-definition.and",
    "extensional-definition.etc",
    "attribute",
];

const VALUES: [&str; 8] =
    ["software", "system software", "red cell", "alpha", "beta gamma", "kernel", "shell", "ore"];

pub fn random_element(rng: &mut ChaCha8Rng, id: usize) -> KnowledgeElement {
    let pragmatics = *TAGS.choose(rng).unwrap();
    let mut bindings = vec![(
        "subject".to_string(),
        VALUES.choose(rng).unwrap().to_string(),
    )];
    for i in 0..rng.gen_range(0..=3usize) {
        bindings.push((format!("extra{i}"), VALUES.choose(rng).unwrap().to_string()));
    }
    KnowledgeElement {
        id: format!("gen#{id}"),
        pragmatics: pragmatics.to_string(),
        bindings,
        pattern_id: "gen".to_string(),
        source: Source {
            doc: "gen".to_string(),
            sentence: id,
            range: (id * 10, id * 10 + 9),
        },
        timestamp: rng.gen_range(0..100),
        reliability: rng.gen_range(-2..3),
    }
}

/// A random conflict-free crystal with 1..=max_elements elements.
pub fn random_crystal(rng: &mut ChaCha8Rng, max_elements: usize) -> Crystal {
    let n = rng.gen_range(1..=max_elements);
    let mut magma = Magma::new();
    let mut next = 0usize;
    while magma.is_empty() {
        let elements: Vec<KnowledgeElement> = (0..n)
            .map(|_| {
                next += 1;
                random_element(rng, next)
            })
            .collect();
        let _ = magma.ingest(elements);
    }
    let stored: Vec<KnowledgeElement> = magma.elements().cloned().collect();
    let tags = base_tags(&stored);
    let tag_refs: Vec<&str> = tags.iter().map(|s| s.as_str()).collect();
    crystallize(&magma, Requirement::with_pragmatics(&tag_refs), "generated").unwrap()
}

// ---------------------------------------------------------------------------
// random mixware programs
// ---------------------------------------------------------------------------

const DATA_NAMES: [&str; 5] = ["payload", "cfg", "songs", "rules", "notes"];

fn random_method(rng: &mut ChaCha8Rng) -> (String, Vec<String>, Vec<Term>) {
    let name = format!("m{}", rng.gen_range(0..4));
    let read_count = rng.gen_range(1..=2);
    let reads: Vec<String> =
        DATA_NAMES.choose_multiple(rng, read_count).map(|s| s.to_string()).collect();
    let mut expr: Vec<Term> = Vec::new();
    for r in &reads {
        if rng.gen_bool(0.3) {
            expr.push(Term::Lit(format!("[{r}]")));
        }
        expr.push(Term::Data(r.clone()));
    }
    (name, reads, expr)
}

/// A random valid program of at most `max_objects` objects with at least one
/// knowware and one middleware object, plus a plan covering every knowware.
pub fn random_program(rng: &mut ChaCha8Rng, max_objects: usize) -> (Program, BindingPlan) {
    let kmo_count = rng.gen_range(1..=2usize);
    let ko_count = rng.gen_range(1..=2usize);
    let so_count = rng.gen_range(1..=max_objects.saturating_sub(kmo_count + ko_count).max(1));
    let mut objects = Vec::new();
    for i in 0..so_count {
        let mut so = MixObject::new(&format!("so{i}"), ObjectKind::Software)
            .with_data("own", &format!("so{i}-data"));
        so = so.with_method("show", &["own"], vec![Term::Data("own".into())]);
        objects.push(so);
    }
    for i in 0..ko_count {
        let mut ko = MixObject::new(&format!("ko{i}"), ObjectKind::Knowware);
        let data_count = rng.gen_range(1..=3);
        for name in DATA_NAMES.choose_multiple(rng, data_count) {
            ko = ko.with_data(name, &format!("{name}-of-ko{i}"));
        }
        objects.push(ko);
    }
    for i in 0..kmo_count {
        let mut kmo = MixObject::new(&format!("kmo{i}"), ObjectKind::Middleware);
        for _ in 0..rng.gen_range(1..=2) {
            let (name, reads, expr) = random_method(rng);
            let read_refs: Vec<&str> = reads.iter().map(|s| s.as_str()).collect();
            kmo = kmo.with_method(&name, &read_refs, expr);
        }
        if rng.gen_bool(0.4) {
            let name = DATA_NAMES.choose(rng).unwrap();
            kmo = kmo.with_data(name, &format!("{name}-of-kmo{i}"));
        }
        objects.push(kmo);
    }
    let mut plan = BindingPlan::new(BindMode::Static);
    let kmo_ids: Vec<String> = (0..kmo_count).map(|i| format!("kmo{i}")).collect();
    for i in 0..ko_count {
        let picks = rng.gen_range(1..=kmo_count);
        let chosen: Vec<&str> = kmo_ids.choose_multiple(rng, picks).map(|s| s.as_str()).collect();
        plan = plan.bind(&format!("ko{i}"), &chosen);
    }
    (Program::new(objects), plan)
}
