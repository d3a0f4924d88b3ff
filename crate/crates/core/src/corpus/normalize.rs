//! Number-word conversion and double-hyphen minus repair.

use std::sync::LazyLock;

use regex::Regex;

static WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[A-Za-z]+(?:-[A-Za-z]+)*").expect("valid regex"));

// Two or more hyphens directly before a digit. Longer runs are folded too so
// the rewrite is idempotent.
static DOUBLE_HYPHEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"-{2,}([0-9])").expect("valid regex"));

fn unit(word: &str) -> Option<u32> {
    Some(match word {
        "zero" => 0,
        "one" => 1,
        "two" => 2,
        "three" => 3,
        "four" => 4,
        "five" => 5,
        "six" => 6,
        "seven" => 7,
        "eight" => 8,
        "nine" => 9,
        _ => return None,
    })
}

fn teen(word: &str) -> Option<u32> {
    Some(match word {
        "ten" => 10,
        "eleven" => 11,
        "twelve" => 12,
        "thirteen" => 13,
        "fourteen" => 14,
        "fifteen" => 15,
        "sixteen" => 16,
        "seventeen" => 17,
        "eighteen" => 18,
        "nineteen" => 19,
        _ => return None,
    })
}

fn tens(word: &str) -> Option<u32> {
    Some(match word {
        "twenty" => 20,
        "thirty" => 30,
        "forty" => 40,
        "fifty" => 50,
        "sixty" => 60,
        "seventy" => 70,
        "eighty" => 80,
        "ninety" => 90,
        _ => return None,
    })
}

/// Value of one word token, which may itself be a hyphenated compound
/// like `twenty-one`. Returns `(value, is_tens)`.
fn word_value(token: &str) -> Option<(u32, bool)> {
    let lower = token.to_ascii_lowercase();
    if let Some((t, u)) = lower.split_once('-') {
        let t = tens(t)?;
        let u = unit(u).filter(|&u| u > 0)?;
        return Some((t + u, false));
    }
    if let Some(v) = tens(&lower) {
        return Some((v, true));
    }
    if lower == "hundred" {
        return Some((100, false));
    }
    unit(&lower).or_else(|| teen(&lower)).map(|v| (v, false))
}

struct Token<'a> {
    start: usize,
    end: usize,
    text: &'a str,
}

/// Parses a number phrase starting at `tokens[i]`. Returns value and the
/// index one past the last consumed token.
fn parse_phrase(src: &str, tokens: &[Token], i: usize) -> Option<(u32, usize)> {
    // Words of one phrase are separated by exactly one space.
    let adjacent = |a: usize, b: usize| b < tokens.len() && &src[tokens[a].end..tokens[b].start] == " ";
    let lower = |k: usize| tokens[k].text.to_ascii_lowercase();

    // Below one hundred: unit | teen | tens [unit] | tens-unit.
    let below_hundred = |k: usize| -> Option<(u32, usize)> {
        let (v, is_tens) = word_value(tokens[k].text)?;
        if v >= 100 {
            return None;
        }
        if is_tens && adjacent(k, k + 1) {
            if let Some(u) = unit(&lower(k + 1)).filter(|&u| u > 0) {
                return Some((v + u, k + 2));
            }
        }
        Some((v, k + 1))
    };

    if lower(i) == "hundred" {
        return Some((100, i + 1));
    }
    let (value, next) = below_hundred(i)?;
    // <unit> hundred [and] [<below hundred>]
    if (1..10).contains(&value) && next == i + 1 && adjacent(i, next) && lower(next) == "hundred" {
        let base = value * 100;
        let after_hundred = next + 1;
        let rest_start = if adjacent(next, after_hundred) && lower(after_hundred) == "and" {
            after_hundred + 1
        } else {
            after_hundred
        };
        if adjacent(rest_start - 1, rest_start) {
            if let Some((rest, end)) = below_hundred(rest_start).filter(|(r, _)| *r > 0) {
                return Some((base + rest, end));
            }
        }
        return Some((base, after_hundred));
    }
    Some((value, next))
}

/// Replaces standalone English cardinal words (zero through hundred and their
/// compounds) with digits and rewrites `--<digit>` as `-<digit>`.
///
/// Ordinals are left alone, as are words hyphen-joined to non-number words
/// (`two-sided`).
pub fn normalize_numbers(text: &str) -> String {
    let standalone = |start: usize, end: usize| {
        let touches = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_');
        !touches(text[..start].chars().next_back()) && !touches(text[end..].chars().next())
    };
    let tokens: Vec<Token> = WORD
        .find_iter(text)
        .filter(|m| standalone(m.start(), m.end()))
        .map(|m| Token {
            start: m.start(),
            end: m.end(),
            text: m.as_str(),
        })
        .collect();

    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    let mut i = 0;
    while i < tokens.len() {
        match parse_phrase(text, &tokens, i) {
            Some((value, next)) => {
                out.push_str(&text[cursor..tokens[i].start]);
                out.push_str(&value.to_string());
                cursor = tokens[next - 1].end;
                i = next;
            }
            None => i += 1,
        }
    }
    out.push_str(&text[cursor..]);
    DOUBLE_HYPHEN.replace_all(&out, "-$1").into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn number_words() {
        assert_eq!(normalize_numbers("twenty participants"), "20 participants");
        assert_eq!(normalize_numbers("Twenty-one died"), "21 died");
        assert_eq!(normalize_numbers("twenty one died"), "21 died");
        assert_eq!(normalize_numbers("one hundred and five women"), "105 women");
        assert_eq!(normalize_numbers("two hundred"), "200");
        assert_eq!(normalize_numbers("a hundred"), "a 100");
        assert_eq!(normalize_numbers("zero events in eleven arms"), "0 events in 11 arms");
    }

    #[test]
    fn double_hyphen_minus() {
        assert_eq!(normalize_numbers("--5.2 change"), "-5.2 change");
        assert_eq!(normalize_numbers("mean ---3"), "mean -3");
        assert_eq!(normalize_numbers("a -- b"), "a -- b");
    }

    #[test]
    fn leaves_other_text_alone() {
        for s in [
            "no numbers here",
            "the first endpoint",
            "someone often bones",
            "two-sided test",
            "twenty-first day",
            "",
        ] {
            assert_eq!(normalize_numbers(s), s, "{s}");
        }
        assert_eq!(normalize_numbers("thirty, seven"), "30, 7");
        assert_eq!(normalize_numbers("x1one café"), "x1one café");
        assert_eq!(normalize_numbers("oneé"), "oneé");
    }

    proptest! {
        #[test]
        fn idempotent(s in "((one|twenty|hundred|and|ninety-nine|-|--|[0-9]|[a-z]{1,4}|[ ,.])){0,30}") {
            let once = normalize_numbers(&s);
            prop_assert_eq!(normalize_numbers(&once), once);
        }

        #[test]
        fn idempotent_any(s in "\\PC{0,60}") {
            let once = normalize_numbers(&s);
            prop_assert_eq!(normalize_numbers(&once), once);
        }
    }
}
