use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::normalize::{for_each_token, TokenSeq};
use crate::par;
use crate::vocab::{TermIdx, Thesaurus};

const ROOT: u32 = 0;
const NONE: u32 = u32::MAX;

/// Multi-pattern matcher over token sequences (Aho-Corasick on token ids).
///
/// Tokens that occur in no pattern reset the automaton to the root, so the
/// scan never needs to look them up further.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DictionaryMatcher {
    token_ids: HashMap<String, u32>,
    /// Root transitions indexed by token id; `ROOT` means no edge.
    root: Vec<u32>,
    edge_start: Vec<u32>,
    edges: Vec<(u32, u32)>,
    fail: Vec<u32>,
    /// Nearest proper suffix state that carries an output.
    dict: Vec<u32>,
    out_start: Vec<u32>,
    outs: Vec<TermIdx>,
    patterns: usize,
}

/// Per-batch throughput counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanCounts {
    pub documents: u64,
    pub tokens: u64,
    pub matches: u64,
}

impl ScanCounts {
    pub fn merge(self, other: ScanCounts) -> ScanCounts {
        ScanCounts {
            documents: self.documents + other.documents,
            tokens: self.tokens + other.tokens,
            matches: self.matches + other.matches,
        }
    }
}

pub fn build_matcher(thesaurus: &Thesaurus) -> DictionaryMatcher {
    DictionaryMatcher::from_patterns(
        thesaurus
            .terms()
            .iter()
            .enumerate()
            .map(|(i, t)| (TermIdx(i as u32), t.tokens.as_ref())),
    )
}

impl DictionaryMatcher {
    /// Builds the automaton. Empty patterns are ignored. Build order only
    /// affects internal numbering, never the match sets.
    pub fn from_patterns<'a, I>(patterns: I) -> Self
    where
        I: IntoIterator<Item = (TermIdx, &'a [String])>,
    {
        let mut token_ids: HashMap<String, u32> = HashMap::new();
        let mut children: Vec<HashMap<u32, u32>> = vec![HashMap::new()];
        let mut outputs: Vec<Vec<TermIdx>> = vec![Vec::new()];
        let mut count = 0;

        for (term, tokens) in patterns {
            if tokens.is_empty() {
                continue;
            }
            count += 1;
            let mut state = ROOT;
            for tok in tokens {
                let next_id = token_ids.len() as u32;
                let id = *token_ids.entry(tok.clone()).or_insert(next_id);
                state = match children[state as usize].get(&id) {
                    Some(&s) => s,
                    None => {
                        let s = children.len() as u32;
                        children.push(HashMap::new());
                        outputs.push(Vec::new());
                        children[state as usize].insert(id, s);
                        s
                    }
                };
            }
            outputs[state as usize].push(term);
        }

        let n = children.len();
        let mut fail = vec![ROOT; n];
        let mut dict = vec![NONE; n];
        let mut queue = VecDeque::new();
        for &s in children[0].values() {
            queue.push_back(s);
        }
        while let Some(s) = queue.pop_front() {
            let mut kids: Vec<(u32, u32)> = children[s as usize].iter().map(|(&t, &c)| (t, c)).collect();
            kids.sort_unstable();
            for (tok, child) in kids {
                let mut f = fail[s as usize];
                let target = loop {
                    if let Some(&g) = children[f as usize].get(&tok) {
                        break g;
                    }
                    if f == ROOT {
                        break ROOT;
                    }
                    f = fail[f as usize];
                };
                fail[child as usize] = target;
                dict[child as usize] = if !outputs[target as usize].is_empty() {
                    target
                } else {
                    dict[target as usize]
                };
                queue.push_back(child);
            }
        }

        let mut root = vec![ROOT; token_ids.len()];
        for (&t, &c) in &children[0] {
            root[t as usize] = c;
        }
        let mut edge_start = Vec::with_capacity(n + 1);
        let mut edges = Vec::new();
        let mut out_start = Vec::with_capacity(n + 1);
        let mut outs = Vec::new();
        for s in 0..n {
            edge_start.push(edges.len() as u32);
            if s != 0 {
                let mut kids: Vec<(u32, u32)> = children[s].iter().map(|(&t, &c)| (t, c)).collect();
                kids.sort_unstable();
                edges.extend(kids);
            }
            out_start.push(outs.len() as u32);
            let mut o = std::mem::take(&mut outputs[s]);
            o.sort_unstable();
            o.dedup();
            outs.extend(o);
        }
        edge_start.push(edges.len() as u32);
        out_start.push(outs.len() as u32);

        DictionaryMatcher {
            token_ids,
            root,
            edge_start,
            edges,
            fail,
            dict,
            out_start,
            outs,
            patterns: count,
        }
    }

    pub fn pattern_count(&self) -> usize {
        self.patterns
    }

    pub fn state_count(&self) -> usize {
        self.fail.len()
    }

    #[inline]
    fn goto(&self, state: u32, tok: u32) -> Option<u32> {
        if state == ROOT {
            let s = self.root[tok as usize];
            (s != ROOT).then_some(s)
        } else {
            let lo = self.edge_start[state as usize] as usize;
            let hi = self.edge_start[state as usize + 1] as usize;
            let slice = &self.edges[lo..hi];
            slice
                .binary_search_by_key(&tok, |&(t, _)| t)
                .ok()
                .map(|i| slice[i].1)
        }
    }

    #[inline]
    fn step(&self, mut state: u32, tok: Option<u32>, hits: &mut Vec<TermIdx>) -> u32 {
        let Some(tok) = tok else {
            return ROOT;
        };
        state = loop {
            if let Some(next) = self.goto(state, tok) {
                break next;
            }
            if state == ROOT {
                break ROOT;
            }
            state = self.fail[state as usize];
        };
        let mut s = state;
        while s != NONE && s != ROOT {
            let lo = self.out_start[s as usize] as usize;
            let hi = self.out_start[s as usize + 1] as usize;
            hits.extend_from_slice(&self.outs[lo..hi]);
            s = self.dict[s as usize];
        }
        state
    }

    /// Term set of an already-normalized document, sorted ascending.
    pub fn find_terms(&self, doc: &TokenSeq) -> Vec<TermIdx> {
        let mut hits = Vec::new();
        let mut state = ROOT;
        for tok in doc.iter() {
            state = self.step(state, self.token_ids.get(tok.as_str()).copied(), &mut hits);
        }
        finish(hits)
    }

    /// Normalizes and scans raw text in one pass.
    pub fn find_in_text(&self, raw: &str) -> Vec<TermIdx> {
        self.find_in_text_counted(raw).0
    }

    /// As [`find_in_text`](Self::find_in_text), also returning the token count.
    pub fn find_in_text_counted(&self, raw: &str) -> (Vec<TermIdx>, u64) {
        let mut hits = Vec::new();
        let mut state = ROOT;
        let mut tokens = 0u64;
        let mut buf = String::new();
        for_each_token(raw, &mut buf, |tok| {
            tokens += 1;
            state = self.step(state, self.token_ids.get(tok).copied(), &mut hits);
        });
        (finish(hits), tokens)
    }

    /// Scans a batch of raw documents, data-parallel when enabled. Output order
    /// matches input order.
    pub fn scan_batch<S: AsRef<str> + Sync>(&self, docs: &[S]) -> (Vec<Vec<TermIdx>>, ScanCounts) {
        let chunks = par::map_chunks(docs, 256, |chunk| {
            let mut counts = ScanCounts::default();
            let found: Vec<Vec<TermIdx>> = chunk
                .iter()
                .map(|d| {
                    let (terms, tokens) = self.find_in_text_counted(d.as_ref());
                    counts.documents += 1;
                    counts.tokens += tokens;
                    counts.matches += terms.len() as u64;
                    terms
                })
                .collect();
            (found, counts)
        });
        let mut all = Vec::with_capacity(docs.len());
        let mut counts = ScanCounts::default();
        for (found, c) in chunks {
            all.extend(found);
            counts = counts.merge(c);
        }
        (all, counts)
    }
}

fn finish(mut hits: Vec<TermIdx>) -> Vec<TermIdx> {
    hits.sort_unstable();
    hits.dedup();
    hits
}
