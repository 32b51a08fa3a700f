//! Text normalization and token-level dictionary matching.

mod automaton;
mod normalize;
mod table;

pub use automaton::{build_matcher, DictionaryMatcher, ScanCounts};
pub use normalize::{decode_lossy_dropping, for_each_token, normalize_bytes, normalize_text, TokenSeq};
pub use table::{MatchRecord, MatchTable};
