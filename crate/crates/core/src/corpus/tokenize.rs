//! Token counting behind a pluggable interface.
//!
//! The pipeline has to run offline, so the default [`HeuristicTokenizer`]
//! approximates a BPE vocabulary with a few deterministic rules. Plug a
//! vendor tokenizer in through [`Tokenizer`] to reproduce vendor counts.

use std::ops::Range;

pub trait Tokenizer: Send + Sync {
    /// Byte spans of the tokens in `text`, in order and non-overlapping.
    ///
    /// Implementations must be prefix-stable: re-tokenizing `text[..spans[i].start]`
    /// yields exactly `spans[..i]`. Hard splitting in the chunker relies on it.
    fn token_spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.token_spans(text).len()
    }
}

/// Whitespace/punctuation word-piece heuristic.
///
/// * a run of letters is one token per started `max_word_piece` characters,
/// * a run of digits is one token per started 3 digits,
/// * every other non-whitespace character is a token of its own,
/// * whitespace never produces tokens.
///
/// With the default piece length of 6 English prose lands near the
/// ~4 characters per token seen with BPE vocabularies.
#[derive(Debug, Clone, Copy)]
pub struct HeuristicTokenizer {
    pub max_word_piece: usize,
}

impl Default for HeuristicTokenizer {
    fn default() -> Self {
        HeuristicTokenizer { max_word_piece: 6 }
    }
}

#[derive(PartialEq, Clone, Copy)]
enum Class {
    Letter,
    Digit,
    Space,
    Other,
}

fn class_of(c: char) -> Class {
    if c.is_alphabetic() {
        Class::Letter
    } else if c.is_ascii_digit() {
        Class::Digit
    } else if c.is_whitespace() {
        Class::Space
    } else {
        Class::Other
    }
}

impl Tokenizer for HeuristicTokenizer {
    fn token_spans(&self, text: &str) -> Vec<Range<usize>> {
        let piece = self.max_word_piece.max(1);
        let mut spans = Vec::new();
        let mut chars = text.char_indices().peekable();
        while let Some((start, c)) = chars.next() {
            let class = class_of(c);
            match class {
                Class::Space => {}
                Class::Other => spans.push(start..start + c.len_utf8()),
                Class::Letter | Class::Digit => {
                    let limit = if class == Class::Digit { 3 } else { piece };
                    let mut piece_start = start;
                    let mut in_piece = 1;
                    let mut end = start + c.len_utf8();
                    while let Some(&(i, next)) = chars.peek() {
                        if class_of(next) != class {
                            break;
                        }
                        chars.next();
                        if in_piece == limit {
                            spans.push(piece_start..i);
                            piece_start = i;
                            in_piece = 0;
                        }
                        in_piece += 1;
                        end = i + next.len_utf8();
                    }
                    spans.push(piece_start..end);
                }
            }
        }
        spans
    }
}

/// Token count under the default tokenizer.
pub fn count_tokens(text: &str) -> usize {
    HeuristicTokenizer::default().count(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_has_no_tokens() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("  \n\t "), 0);
    }

    #[test]
    fn heuristic_rules() {
        let t = HeuristicTokenizer::default();
        // "Group" "A" "had" "10" "events" "."
        assert_eq!(t.count("Group A had 10 events."), 6);
        // "123" "456" "7"
        assert_eq!(t.count("1234567"), 3);
        // "random" "ized" "-" "5" "." "2"
        assert_eq!(t.count("randomized -5.2"), 6);
        let spans = t.token_spans("ab 12");
        assert_eq!(spans, vec![0..2, 3..5]);
    }

    proptest! {
        #[test]
        fn nonempty_text_has_tokens(s in "\\PC*") {
            let n = count_tokens(&s);
            prop_assert_eq!(n == 0, s.trim().is_empty());
        }

        #[test]
        fn prefix_stable(s in "[a-zA-Z0-9 .,|-]{0,80}") {
            let t = HeuristicTokenizer::default();
            let spans = t.token_spans(&s);
            for i in 0..spans.len() {
                let prefix = t.token_spans(&s[..spans[i].start]);
                prop_assert_eq!(&prefix[..], &spans[..i]);
            }
        }
    }
}
