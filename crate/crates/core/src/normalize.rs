//! Value normalization shared by entity lookup, validation and scoring.

/// Canonical form used for exact value comparison.
///
/// Lowercases, trims, collapses internal whitespace, drops a leading
/// article ("the ") and zero-pads clock times (`9:00` becomes `09:00`).
pub fn normalize(value: &str) -> String {
    let collapsed = value
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    let stripped = collapsed
        .strip_prefix("the ")
        .map(str::to_owned)
        .unwrap_or(collapsed);
    match parse_time(&stripped) {
        Some((h, m)) => format!("{h:02}:{m:02}"),
        None => stripped,
    }
}

/// Surface form used for substring matching inside utterances.
///
/// Apostrophes are deleted, every other character that is not alphanumeric
/// or a clock colon becomes a space, and digit/letter boundaries are split
/// so `9:00am` reads as `9:00 am`.
pub fn match_form(text: &str) -> String {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut out = String::with_capacity(chars.len());
    for (i, &c) in chars.iter().enumerate() {
        if c == '\'' || c == '\u{2019}' {
            continue;
        }
        let keep_colon = c == ':'
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if c.is_alphanumeric() || keep_colon {
            if let Some(prev) = out.chars().last() {
                if (prev.is_ascii_digit() && c.is_alphabetic())
                    || (prev.is_alphabetic() && c.is_ascii_digit())
                {
                    out.push(' ');
                }
            }
            out.push(c);
        } else {
            out.push(' ');
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses `h:mm` / `hh:mm` into hours and minutes.
pub fn parse_time(value: &str) -> Option<(u32, u32)> {
    let (h, m) = value.trim().split_once(':')?;
    if h.is_empty() || h.len() > 2 || m.len() != 2 {
        return None;
    }
    if !h.bytes().all(|b| b.is_ascii_digit()) || !m.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let (h, m) = (h.parse().ok()?, m.parse().ok()?);
    (h < 24 && m < 60).then_some((h, m))
}

/// True for the strict `xx:xx` surface form required of time slots.
pub fn is_clock_time(value: &str) -> bool {
    value.len() == 5 && parse_time(value).is_some()
}

/// The special "user does not care" value.
pub const DONTCARE: &str = "dontcare";

pub fn is_dontcare(value: &str) -> bool {
    matches!(
        normalize(value).as_str(),
        "dontcare" | "dont care" | "don't care" | "do not care"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_case_and_space() {
        assert_eq!(
            normalize("Midsummer House Restaurant "),
            "midsummer house restaurant"
        );
        assert_eq!(normalize("  a   b\tc "), "a b c");
    }

    #[test]
    fn pads_times() {
        assert_eq!(normalize("9:00"), "09:00");
        assert_eq!(normalize("12:30"), "12:30");
        assert_eq!(normalize("25:00"), "25:00");
    }

    #[test]
    fn strips_leading_article_only() {
        assert_eq!(normalize("the travellers rest"), "travellers rest");
        assert_eq!(normalize("The Gandhi"), "gandhi");
        assert_eq!(normalize("bathe there"), "bathe there");
    }

    #[test]
    fn match_form_keeps_clock_colons() {
        assert_eq!(match_form("Arrive by 12:30 PM."), "arrive by 12:30 pm");
        assert_eq!(match_form("at 9:00am, ok: fine"), "at 9:00 am ok fine");
        assert_eq!(match_form("Christ's College"), "christs college");
        assert_eq!(match_form("wi-fi"), "wi fi");
    }

    #[test]
    fn clock_time_shape() {
        assert!(is_clock_time("13:00"));
        assert!(!is_clock_time("9:00"));
        assert!(!is_clock_time("13:60"));
        assert!(!is_clock_time("noon"));
    }
}
