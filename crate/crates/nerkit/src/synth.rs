//! Seeded generator of small PER/LOC/ORG corpora.
//!
//! Sentences come from fixed templates whose slots are filled from disjoint
//! word lists, so every surface form has a single role and a model can in
//! principle label the whole corpus perfectly.

use nerkit_core::corpus::{chunks_to_tags, LabeledChunk, Sentence, TagScheme, Token};
use nerkit_core::Rng;
use rand::seq::IndexedRandom;
use rand::{Rng as _, SeedableRng};

const FIRST: &[&str] = &[
    "Alice", "Bruno", "Carmen", "Dmitri", "Elena", "Farid", "Greta", "Hiro", "Ines", "Jonas", "Kofi", "Lena", "Mateo",
    "Nadia", "Oscar", "Priya", "Quentin", "Rosa", "Samir", "Tessa", "Ulrich", "Vera", "Wei", "Ximena", "Yusuf", "Zora",
    "Mark", "Amara", "Lars", "Noor",
];

const LAST: &[&str] = &[
    "Watney",
    "Okafor",
    "Lindqvist",
    "Moreau",
    "Tanaka",
    "Kowalski",
    "Haddad",
    "Brennan",
    "Castillo",
    "Novak",
    "Petrov",
    "Schmidt",
    "Duarte",
    "Nakamura",
    "Fischer",
    "Osei",
    "Romano",
    "Varga",
    "Whitfield",
    "Yilmaz",
    "Abbott",
    "Keller",
    "Mendez",
    "Sato",
    "Quinn",
    "Dubois",
    "Ivanova",
    "Larsen",
    "Ferreira",
    "Holm",
];

const LOC: &[&[&str]] = &[
    &["Paris"],
    &["Berlin"],
    &["Lagos"],
    &["Lima"],
    &["Oslo"],
    &["Cairo"],
    &["Madrid"],
    &["Nairobi"],
    &["Kyoto"],
    &["Quito"],
    &["Dublin"],
    &["Hanoi"],
    &["Geneva"],
    &["Mars"],
    &["Texas"],
    &["Bavaria"],
    &["Peru"],
    &["Norway"],
    &["Kenya"],
    &["Vietnam"],
    &["Chile"],
    &["Iceland"],
    &["Morocco"],
    &["Portugal"],
    &["New", "York"],
    &["Buenos", "Aires"],
    &["San", "Francisco"],
    &["Hong", "Kong"],
    &["Cape", "Town"],
    &["Tel", "Aviv"],
    &["Rio", "Grande"],
    &["Lake", "Victoria"],
    &["Mount", "Kenya"],
];

const ORG: &[&[&str]] = &[
    &["Acme", "Corp"],
    &["Globex"],
    &["Initech"],
    &["Umbrella", "Group"],
    &["Stark", "Industries"],
    &["Wayne", "Holdings"],
    &["Hooli"],
    &["Vandelay", "Imports"],
    &["Cyberdyne", "Systems"],
    &["Tyrell", "Corp"],
    &["Soylent", "Foods"],
    &["Oceanic", "Airlines"],
    &["Aperture", "Labs"],
    &["Massive", "Dynamic"],
    &["Wonka", "Industries"],
    &["Nakatomi", "Trading"],
    &["Monarch", "Bank"],
    &["Red", "Cross"],
    &["United", "Nations"],
    &["World", "Bank"],
    &["NASA"],
    &["UNESCO"],
    &["Interpol"],
    &["Reuters"],
    &["Gringotts", "Bank"],
    &["Pied", "Piper"],
    &["Blue", "Sun", "Group"],
    &["Northwind", "Traders"],
];

const TIME: &[&[&str]] = &[
    &["yesterday"],
    &["today"],
    &["tomorrow"],
    &["on", "Monday"],
    &["on", "Friday"],
    &["last", "week"],
    &["this", "morning"],
    &["in", "March"],
    &["in", "October"],
    &["in", "1999"],
    &["in", "2015"],
    &["at", "dawn"],
    &["late", "at", "night"],
    &["early", "on", "Sunday"],
];

const ADJ: &[&str] = &[
    "new",
    "old",
    "large",
    "small",
    "quiet",
    "busy",
    "famous",
    "strange",
    "bright",
    "cold",
    "warm",
    "rapid",
    "careful",
    "modest",
    "ambitious",
    "private",
    "public",
    "local",
    "remote",
    "ancient",
    "modern",
    "fragile",
    "sturdy",
    "popular",
    "rare",
    "green",
    "heavy",
    "narrow",
];

const NOUN: &[&str] = &[
    "report",
    "bridge",
    "market",
    "garden",
    "museum",
    "river",
    "contract",
    "festival",
    "storm",
    "project",
    "harbor",
    "library",
    "station",
    "factory",
    "hospital",
    "school",
    "forest",
    "mission",
    "vessel",
    "treaty",
    "study",
    "engine",
    "satellite",
    "rover",
    "meeting",
    "election",
    "budget",
    "archive",
    "vaccine",
    "railway",
    "theater",
    "island",
];

const VERBED: &[&str] = &[
    "rose",
    "fell",
    "collapsed",
    "recovered",
    "doubled",
    "stalled",
    "surged",
    "slipped",
    "improved",
    "expanded",
    "shrank",
    "stabilized",
    "rebounded",
    "plunged",
    "climbed",
    "weakened",
    "strengthened",
    "paused",
    "resumed",
    "faltered",
];

const VERB: &[&str] = &[
    "inspected",
    "praised",
    "criticized",
    "repaired",
    "visited",
    "funded",
    "studied",
    "designed",
    "approved",
    "rejected",
    "photographed",
    "mapped",
    "measured",
    "tested",
    "described",
];

const ROLE: &[&str] = &[
    "director",
    "engineer",
    "chairman",
    "analyst",
    "spokesperson",
    "researcher",
    "consultant",
    "pilot",
    "treasurer",
    "architect",
    "editor",
    "envoy",
];

const PLACE: &[&str] =
    &["office", "plant", "branch", "laboratory", "warehouse", "studio", "clinic", "campus", "depot", "outpost"];

const TEMPLATES: &[&str] = &[
    "{PER} visited {LOC} {TIME} .",
    "{PER} works for {ORG} in {LOC} .",
    "{ORG} opened a {ADJ} {PLACE} in {LOC} .",
    "{TIME} , {PER} met {PER} at the {ORG} {PLACE} .",
    "the {ADJ} {NOUN} from {LOC} arrived {TIME} .",
    "{PER} said the {NOUN} was {ADJ} .",
    "shares of {ORG} {VERBED} {TIME} .",
    "{PER} and {PER} flew from {LOC} to {LOC} .",
    "a {ADJ} {NOUN} {VERBED} near {LOC} .",
    "{ORG} hired {PER} as {ROLE} .",
    "the {NOUN} {VERBED} {TIME} .",
    "{PER} , the {ROLE} of {ORG} , lives in {LOC} .",
    "in {LOC} , {ORG} reported a {ADJ} {NOUN} .",
    "{PER} wrote about {LOC} for {ORG} .",
    "officials {VERB} the {ADJ} {NOUN} {TIME} .",
    "{PER} {VERB} the {NOUN} with {ORG} in {LOC} .",
    "the {ROLE} {VERB} a {ADJ} {NOUN} .",
    "{ORG} and {ORG} signed a {NOUN} {TIME} .",
    "{PER} left {ORG} to join {ORG} .",
    "{TIME} the {NOUN} in {LOC} {VERBED} .",
    "according to {ORG} , {PER} {VERB} the {NOUN} .",
    "{PER} moved to {LOC} after the {NOUN} .",
];

/// A generated sentence: words and their entity chunks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthSentence {
    pub words: Vec<String>,
    pub chunks: Vec<LabeledChunk>,
}

impl SynthSentence {
    pub fn to_sentence(&self, scheme: TagScheme) -> Sentence {
        let tags = chunks_to_tags(&self.chunks, self.words.len(), scheme).expect("generated chunks are well-formed");
        let tokens = self.words.iter().zip(&tags).map(|(w, t)| Token::new(w, true, Some(t))).collect();
        Sentence::new(tokens).expect("templates are non-empty")
    }
}

fn person(rng: &mut Rng) -> Vec<&'static str> {
    let first = *FIRST.choose(rng).expect("non-empty");
    let last = *LAST.choose(rng).expect("non-empty");
    match rng.random_range(0..10) {
        0..=3 => vec![first, last],
        4..=6 => vec![first],
        _ => vec![last],
    }
}

pub fn generate_one(rng: &mut Rng) -> SynthSentence {
    let template = TEMPLATES.choose(rng).expect("non-empty");
    let mut words = Vec::new();
    let mut chunks = Vec::new();
    for slot in template.split(' ') {
        let start = words.len();
        let (label, fill): (Option<&str>, Vec<&str>) = match slot {
            "{PER}" => (Some("PER"), person(rng)),
            "{LOC}" => (Some("LOC"), LOC.choose(rng).expect("non-empty").to_vec()),
            "{ORG}" => (Some("ORG"), ORG.choose(rng).expect("non-empty").to_vec()),
            "{TIME}" => (None, TIME.choose(rng).expect("non-empty").to_vec()),
            "{ADJ}" => (None, vec![*ADJ.choose(rng).expect("non-empty")]),
            "{NOUN}" => (None, vec![*NOUN.choose(rng).expect("non-empty")]),
            "{VERBED}" => (None, vec![*VERBED.choose(rng).expect("non-empty")]),
            "{VERB}" => (None, vec![*VERB.choose(rng).expect("non-empty")]),
            "{ROLE}" => (None, vec![*ROLE.choose(rng).expect("non-empty")]),
            "{PLACE}" => (None, vec![*PLACE.choose(rng).expect("non-empty")]),
            word => (None, vec![word]),
        };
        words.extend(fill.iter().map(|w| w.to_string()));
        if let Some(label) = label {
            chunks.push(LabeledChunk::new(start, words.len() - 1, label));
        }
    }
    SynthSentence { words, chunks }
}

/// `n` sentences from `seed`.
pub fn generate(n: usize, seed: u64) -> Vec<SynthSentence> {
    let mut rng = Rng::seed_from_u64(seed);
    (0..n).map(|_| generate_one(&mut rng)).collect()
}

/// `n` tagged sentences from `seed` in `scheme`.
pub fn generate_corpus(n: usize, seed: u64, scheme: TagScheme) -> Vec<Sentence> {
    generate(n, seed).iter().map(|s| s.to_sentence(scheme)).collect()
}

/// Every word the generator can emit.
pub fn lexicon() -> Vec<&'static str> {
    let mut all: Vec<&str> = FIRST
        .iter()
        .chain(LAST)
        .chain(ADJ)
        .chain(NOUN)
        .chain(VERBED)
        .chain(VERB)
        .chain(ROLE)
        .chain(PLACE)
        .copied()
        .collect();
    for group in [LOC, ORG, TIME] {
        all.extend(group.iter().flat_map(|g| g.iter().copied()));
    }
    for t in TEMPLATES {
        all.extend(t.split(' ').filter(|w| !w.starts_with('{')));
    }
    all.sort_unstable();
    all.dedup();
    all
}
