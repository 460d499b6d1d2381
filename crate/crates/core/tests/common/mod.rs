//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::HashSet;
use std::path::Path;

use crowdmatch::corpus::Workspace;
use crowdmatch::text::TokenSpan;
use unicode_normalization::UnicodeNormalization;

const STOPWORDS_FILE: &str = include_str!("../../resources/stopwords_en.txt");

/// FNV-1a, 64 bit, written out from the published constants.
pub fn fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 14695981039346656037;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(1099511628211);
    }
    h
}

pub fn stopwords() -> HashSet<String> {
    STOPWORDS_FILE
        .lines()
        .map(|l| match l.find('#') {
            Some(p) => &l[..p],
            None => l,
        })
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn words(text: &str) -> Vec<String> {
    let normalized: String = text.nfkc().collect::<String>().to_lowercase();
    normalized
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect()
}

/// Feature-hashing embedding computed straight from its definition.
/// `None` when the text has no tokens or every bucket cancels.
pub fn hash_embed(text: &str, dim: usize) -> Option<Vec<f64>> {
    let stop = stopwords();
    let all = words(text);
    let content: Vec<&String> = all
        .iter()
        .filter(|w| w.chars().count() >= 2)
        .filter(|w| !w.chars().all(char::is_numeric))
        .filter(|w| !stop.contains(w.as_str()))
        .collect();
    let used: Vec<&String> = if content.is_empty() { all.iter().collect() } else { content };
    if used.is_empty() {
        return None;
    }
    let mut v = vec![0.0f64; dim];
    for w in used {
        let h = fnv(w.as_bytes());
        let bucket = (h % dim as u64) as usize;
        if h & (1u64 << 63) == 0 {
            v[bucket] += 1.0;
        } else {
            v[bucket] -= 1.0;
        }
    }
    unit(&v)
}

pub fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let mut sq = 0.0;
    for x in v {
        sq += x * x;
    }
    let n = sq.sqrt();
    if n == 0.0 {
        None
    } else {
        Some(v.iter().map(|x| x / n).collect())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Every similarity computed, the whole list sorted, then cut.
pub fn top_k(entries: &[(u64, Vec<f64>)], query: &[f64], k: usize, threshold: Option<f64>) -> Vec<(u64, f64)> {
    let q = unit(query).expect("non-zero query");
    let mut all: Vec<(u64, f64)> = entries
        .iter()
        .map(|(iid, v)| {
            let s = dot(&q, &unit(v).expect("non-zero entry"));
            (*iid, s.clamp(-1.0, 1.0))
        })
        .collect();
    if let Some(t) = threshold {
        all.retain(|&(_, s)| s >= t);
    }
    // Insertion sort: slow, obviously correct.
    for i in 1..all.len() {
        let mut j = i;
        while j > 0 && before(all[j], all[j - 1]) {
            all.swap(j, j - 1);
            j -= 1;
        }
    }
    all.truncate(k);
    all
}

fn before(a: (u64, f64), b: (u64, f64)) -> bool {
    a.1 > b.1 || (a.1 == b.1 && a.0 < b.0)
}

/// All-pairs overlap check.
pub fn brute_align(a: &[TokenSpan], b: &[TokenSpan]) -> Vec<Vec<usize>> {
    a.iter()
        .map(|x| {
            (0..b.len())
                .filter(|&j| x.start.max(b[j].start) < x.end.min(b[j].end))
                .collect()
        })
        .collect()
}

/// hit@k of the mini corpus computed entirely with the oracles above.
pub fn mini_oracle_hits(ws: &Workspace, k: usize) -> (usize, usize) {
    let entries: Vec<(u64, Vec<f64>)> = ws
        .issues()
        .unwrap()
        .into_iter()
        .map(|i| (i.iid, hash_embed(&i.title, 384).unwrap()))
        .collect();
    let reviews = ws.review_map().unwrap();
    let gold = ws.gold_links().unwrap();
    let hits = gold
        .iter()
        .filter(|g| {
            let q = hash_embed(&reviews[&g.review_id].original_text, 384).unwrap();
            top_k(&entries, &q, k, None).iter().any(|(iid, _)| *iid == g.issue_iid)
        })
        .count();
    (hits, gold.len())
}

pub fn file_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
