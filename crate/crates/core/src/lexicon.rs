//! Surface forms under which a slot value counts as explicitly stated.
//!
//! Matching runs on [`match_form`] text with token boundaries, so `one`
//! never matches inside `someone`. Beyond the literal value, the lexicon
//! supplies number words, common paraphrases of categorical values, phrases
//! for boolean slots and for `dontcare`, and clock-time variants.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::normalize::{is_dontcare, match_form, normalize, parse_time};
use crate::schema::split_slot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BooleanPhrases {
    pub yes: Vec<String>,
    pub no: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    /// Phrases for boolean slots, keyed by bare slot name.
    pub boolean: IndexMap<String, BooleanPhrases>,
    pub dontcare: Vec<String>,
    /// Extra surface forms keyed by normalized value.
    pub synonyms: IndexMap<String, Vec<String>>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

const NUMBER_WORDS: [&str; 11] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

impl Default for Lexicon {
    fn default() -> Self {
        let mut boolean = IndexMap::new();
        boolean.insert(
            "internet".to_owned(),
            BooleanPhrases {
                yes: strings(&["internet", "wifi", "wi fi", "wireless"]),
                no: strings(&["no internet", "without internet", "no wifi", "without wifi"]),
            },
        );
        boolean.insert(
            "parking".to_owned(),
            BooleanPhrases {
                yes: strings(&["parking"]),
                no: strings(&["no parking", "without parking"]),
            },
        );
        let dontcare = strings(&[
            "dont care",
            "do not care",
            "doesnt matter",
            "does not matter",
            "no preference",
            "any",
            "either",
            "whatever",
            "not important",
            "not fussy",
            "open to",
        ]);
        let mut synonyms = IndexMap::new();
        for (value, forms) in [
            ("centre", &["center", "central", "city centre", "city center", "downtown"][..]),
            ("expensive", &["high end", "upscale", "pricey", "luxury", "fine dining"][..]),
            ("cheap", &["inexpensive", "budget", "low cost", "affordable", "cheaply"][..]),
            ("moderate", &["moderately", "mid range", "reasonably priced", "moderately priced"][..]),
            ("guest house", &["guesthouse", "guesthouses", "guest houses", "b and b", "bed and breakfast"][..]),
            ("hotel", &["hotels"][..]),
        ] {
            synonyms.insert(value.to_owned(), strings(forms));
        }
        Self { boolean, dontcare, synonyms }
    }
}

fn twelve_hour(h: u32, m: u32) -> Vec<String> {
    let suffixes: &[&str] = if h < 12 { &["am", "a m", "in the morning"] } else { &["pm", "p m"] };
    let h12 = match h % 12 {
        0 => 12,
        x => x,
    };
    let mut out = Vec::new();
    for s in suffixes {
        out.push(format!("{h12}:{m:02} {s}"));
        if m == 0 {
            out.push(format!("{h12} {s}"));
        }
    }
    if (12..18).contains(&h) {
        out.push(format!("{h12}:{m:02} in the afternoon"));
    }
    if h >= 18 {
        out.push(format!("{h12}:{m:02} in the evening"));
    }
    if m == 0 {
        out.push(format!("{h12} o clock"));
    }
    if h == 12 && m == 0 {
        out.push("noon".into());
        out.push("midday".into());
    }
    out
}

impl Lexicon {
    /// Every surface form that states `value` for `slot`, in match form.
    pub fn variants(&self, slot: &str, value: &str) -> Vec<String> {
        let bare = split_slot(slot).map(|(_, s)| s).unwrap_or(slot);
        let norm = normalize(value);
        let mut out: Vec<String> = Vec::new();

        if is_dontcare(&norm) {
            out.extend(self.dontcare.iter().cloned());
        } else if let Some(phrases) = self.boolean.get(bare).filter(|_| matches!(norm.as_str(), "yes" | "no")) {
            out.extend(if norm == "yes" { phrases.yes.iter() } else { phrases.no.iter() }.cloned());
        } else if let Some((h, m)) = parse_time(&norm) {
            out.push(format!("{h:02}:{m:02}"));
            out.push(format!("{h}:{m:02}"));
            out.extend(twelve_hour(h, m));
        } else {
            out.push(norm.clone());
            if let Ok(n) = norm.parse::<usize>() {
                if let Some(w) = NUMBER_WORDS.get(n) {
                    out.push(w.to_string());
                }
            }
            if let Some(n) = NUMBER_WORDS.iter().position(|w| *w == norm) {
                out.push(n.to_string());
            }
            if let Some(extra) = self.synonyms.get(&norm) {
                out.extend(extra.iter().cloned());
            }
        }
        let mut forms: Vec<String> = out.iter().map(|v| match_form(v)).filter(|v| !v.is_empty()).collect();
        forms.dedup();
        forms
    }

    /// Byte offset in `match_form(utterance)` of the earliest stated form.
    pub fn position(&self, utterance: &str, slot: &str, value: &str) -> Option<usize> {
        let text = format!(" {} ", match_form(utterance));
        self.variants(slot, value)
            .iter()
            .filter_map(|v| text.find(&format!(" {v} ")))
            .min()
    }

    /// Whether `utterance` states `value` for `slot` explicitly.
    pub fn value_appears(&self, utterance: &str, slot: &str, value: &str) -> bool {
        self.position(utterance, slot, value).is_some()
    }
}

/// [`Lexicon::value_appears`] with the default lexicon.
pub fn value_appears(utterance: &str, slot: &str, value: &str) -> bool {
    Lexicon::default().value_appears(utterance, slot, value)
}
