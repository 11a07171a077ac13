use std::collections::HashMap;

use super::EvalError;

/// Smoothing numerator for zero-match n-gram orders.
const EPSILON: f64 = 0.1;

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3000..=0x303F     // punctuation
        | 0x3040..=0x30FF   // kana
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xAC00..=0xD7AF   // hangul syllables
        | 0xF900..=0xFAFF
        | 0xFF00..=0xFFEF   // full-width forms
        | 0x20000..=0x2FA1F)
}

/// Splits on whitespace, with every CJK codepoint its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_whitespace() || is_cjk(c) {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        } else {
            word.push(c);
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if n <= tokens.len() {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Running n-gram statistics for corpus BLEU.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuStats {
    max_n: usize,
    matches: Vec<usize>,
    totals: Vec<usize>,
    cand_len: usize,
    ref_len: usize,
}

impl BleuStats {
    pub fn new(max_n: usize) -> Result<Self, EvalError> {
        if max_n == 0 {
            return Err(EvalError::InvalidInput("BLEU order must be at least 1".into()));
        }
        Ok(BleuStats {
            max_n,
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            cand_len: 0,
            ref_len: 0,
        })
    }

    pub fn add(&mut self, candidate: &str, references: &[&str]) -> Result<(), EvalError> {
        let cand = tokenize(candidate);
        let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
        if cand.is_empty() || refs.is_empty() || refs.iter().all(Vec::is_empty) {
            return Err(EvalError::EmptyInput);
        }
        for n in 1..=self.max_n {
            let c = ngrams(&cand, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in &refs {
                for (g, k) in ngrams(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(k);
                }
            }
            self.matches[n - 1] += c
                .iter()
                .map(|(g, &k)| k.min(max_ref.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
            self.totals[n - 1] += cand.len().saturating_sub(n - 1);
        }
        self.cand_len += cand.len();
        // closest reference length, shorter on ties
        self.ref_len += refs
            .iter()
            .map(Vec::len)
            .min_by_key(|&l| (l.abs_diff(cand.len()), l))
            .expect("non-empty");
        Ok(())
    }

    /// Geometric mean of modified precisions over the orders the candidates
    /// are long enough for, times the brevity penalty.
    pub fn score(&self) -> f64 {
        let orders: Vec<usize> = (0..self.max_n).filter(|&i| self.totals[i] > 0).collect();
        if orders.is_empty() || orders.iter().all(|&i| self.matches[i] == 0) {
            return 0.0;
        }
        let log_p: f64 = orders
            .iter()
            .map(|&i| {
                let m = if self.matches[i] == 0 { EPSILON } else { self.matches[i] as f64 };
                (m / self.totals[i] as f64).ln()
            })
            .sum::<f64>()
            / orders.len() as f64;
        let bp = if self.cand_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.cand_len as f64).exp()
        };
        bp * log_p.exp()
    }
}

pub fn bleu(candidate: &str, references: &[&str], max_n: usize) -> Result<f64, EvalError> {
    let mut s = BleuStats::new(max_n)?;
    s.add(candidate, references)?;
    Ok(s.score())
}

/// Corpus BLEU over `(candidate, references)` pairs.
pub fn corpus_bleu<'a>(
    pairs: impl IntoIterator<Item = (&'a str, Vec<&'a str>)>,
    max_n: usize,
) -> Result<f64, EvalError> {
    let mut s = BleuStats::new(max_n)?;
    let mut any = false;
    for (c, refs) in pairs {
        s.add(c, &refs)?;
        any = true;
    }
    if !any {
        return Err(EvalError::EmptyInput);
    }
    Ok(s.score())
}
