use std::collections::HashMap;
use std::hash::Hash;

pub const CHAR_ORDER: usize = 6;
pub const WORD_ORDER: usize = 2;
pub const BETA: f64 = 2.0;
const EPS: f64 = 1e-16;

/// Punctuation split off word edges before word n-gram counting.
fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
}

/// Whitespace tokens, with one leading or trailing punctuation character
/// split into its own token (`"mat."` -> `"mat"`, `"."`).
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for w in text.split_whitespace() {
        let chars: Vec<char> = w.chars().collect();
        if chars.len() == 1 {
            out.push(w.to_string());
        } else if is_punct(chars[chars.len() - 1]) {
            out.push(chars[..chars.len() - 1].iter().collect());
            out.push(chars[chars.len() - 1].to_string());
        } else if is_punct(chars[0]) {
            out.push(chars[0].to_string());
            out.push(chars[1..].iter().collect());
        } else {
            out.push(w.to_string());
        }
    }
    out
}

fn ngram_counts<T: Clone + Eq + Hash>(items: &[T], n: usize) -> HashMap<Vec<T>, usize> {
    let mut counts = HashMap::new();
    if items.len() >= n {
        for w in items.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// (hypothesis n-grams, reference n-grams, matched n-grams) for one order.
fn order_stats<T: Clone + Eq + Hash>(hyp: &[T], reference: &[T], n: usize) -> [usize; 3] {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matched = h
        .iter()
        .map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0)))
        .sum();
    [h.values().sum(), r.values().sum(), matched]
}

/// Per-order statistics: character orders 1..=6, then word orders 1..=2.
pub fn statistics(hypothesis: &str, reference: &str) -> Vec<[usize; 3]> {
    let hc: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();
    let rc: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let hw = words(hypothesis);
    let rw = words(reference);
    (1..=CHAR_ORDER)
        .map(|n| order_stats(&hc, &rc, n))
        .chain((1..=WORD_ORDER).map(|n| order_stats(&hw, &rw, n)))
        .collect()
}

/// F-beta over precision and recall averaged across the orders that occur
/// in both strings.
pub fn f_score(stats: &[[usize; 3]], beta: f64) -> f64 {
    let factor = beta * beta;
    let (mut avg_prec, mut avg_rec) = (0.0, 0.0);
    let mut effective = 0usize;
    for &[n_hyp, n_ref, n_match] in stats {
        avg_prec += if n_hyp > 0 { n_match as f64 / n_hyp as f64 } else { EPS };
        avg_rec += if n_ref > 0 { n_match as f64 / n_ref as f64 } else { EPS };
        if n_hyp > 0 && n_ref > 0 {
            effective += 1;
        }
    }
    if effective == 0 {
        return 0.0;
    }
    avg_prec /= effective as f64;
    avg_rec /= effective as f64;
    if avg_prec + avg_rec == 0.0 {
        return 0.0;
    }
    let score = 100.0 * (1.0 + factor) * avg_prec * avg_rec / (factor * avg_prec + avg_rec);
    score.clamp(0.0, 100.0)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("empty reference")]
pub struct EmptyReference;

/// Sentence-level chrF++ (character 6-grams, word bigrams, beta 2) in
/// `[0, 100]`. Whitespace is ignored for character n-grams.
pub fn chrf_pp(hypothesis: &str, reference: &str) -> Result<f64, EmptyReference> {
    if reference.trim().is_empty() {
        return Err(EmptyReference);
    }
    Ok(f_score(&statistics(hypothesis, reference), BETA))
}
