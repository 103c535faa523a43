//! Corpus-level BLEU with clipped n-gram precisions and brevity penalty.
//!
//! No smoothing: a zero precision at any order forces the score to 0 while
//! the component precisions still report their raw values, so the closed
//! form `bp * exp(mean ln pn)` reproduces published component tables
//! exactly.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result};
use crate::numfmt::format_fixed;

const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizeMode {
    Whitespace,
    Character,
}

impl TokenizeMode {
    pub fn parse(s: &str) -> Result<TokenizeMode> {
        match s {
            "whitespace" => Ok(TokenizeMode::Whitespace),
            "character" => Ok(TokenizeMode::Character),
            other => Err(Error::Config(format!("unknown tokenize mode: {other}"))),
        }
    }
}

/// Split text into scoring tokens after NFC normalization.
///
/// Whitespace mode splits on Unicode whitespace; character mode yields one
/// token per extended grapheme cluster with whitespace clusters dropped
/// (the practical choice for scripts like Thai that do not delimit words).
pub fn tokenize(text: &str, mode: TokenizeMode) -> Vec<String> {
    let normalized: String = text.nfc().collect();
    match mode {
        TokenizeMode::Whitespace => normalized.split_whitespace().map(str::to_string).collect(),
        TokenizeMode::Character => normalized
            .graphemes(true)
            .filter(|g| !g.chars().all(char::is_whitespace))
            .map(str::to_string)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPair {
    pub hypothesis: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// 0..100.
    pub bleu: f64,
    /// Clipped n-gram precisions p1..p4, in percent.
    pub precisions: [f64; 4],
    /// Brevity penalty, 1 when the hypothesis corpus is longer.
    pub bp: f64,
    /// Hypothesis/reference token-length ratio.
    pub ratio: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuReport {
    /// `BLEU | p1/p2/p3/p4 | BP | Ratio` table row.
    pub fn table_row(&self) -> String {
        format!(
            "{} | {} | {} | {}",
            format_fixed(self.bleu, 2),
            self.precisions
                .iter()
                .map(|p| format_fixed(*p, 1))
                .collect::<Vec<_>>()
                .join("/"),
            format_fixed(self.bp, 3),
            format_fixed(self.ratio, 3),
        )
    }
}

/// Per-segment statistics; merging is plain summation so corpus accumulation
/// can happen in any order or in parallel.
#[derive(Debug, Clone, Copy, Default)]
struct CorpusStats {
    clipped: [u64; MAX_ORDER],
    total: [u64; MAX_ORDER],
    hyp_len: usize,
    ref_len: usize,
}

impl CorpusStats {
    fn add_segment(&mut self, hyp: &[String], reference: &[String]) {
        self.hyp_len += hyp.len();
        self.ref_len += reference.len();
        for order in 1..=MAX_ORDER {
            if hyp.len() < order {
                continue;
            }
            let mut hyp_counts: HashMap<&[String], u64> = HashMap::new();
            for gram in hyp.windows(order) {
                *hyp_counts.entry(gram).or_default() += 1;
            }
            let mut ref_counts: HashMap<&[String], u64> = HashMap::new();
            for gram in reference.windows(order) {
                *ref_counts.entry(gram).or_default() += 1;
            }
            let clipped: u64 = hyp_counts
                .iter()
                .map(|(gram, count)| (*count).min(ref_counts.get(gram).copied().unwrap_or(0)))
                .sum();
            self.clipped[order - 1] += clipped;
            self.total[order - 1] += (hyp.len() - order + 1) as u64;
        }
    }
}

/// Combine component precisions (percent) and brevity penalty into BLEU.
///
/// Returns 0 when any precision is 0 (unsmoothed geometric mean).
pub fn bleu_from_components(precisions: [f64; 4], bp: f64) -> f64 {
    if precisions.iter().any(|&p| p <= 0.0) {
        return 0.0;
    }
    let mean_log = precisions.iter().map(|p| (p / 100.0).ln()).sum::<f64>() / 4.0;
    bp * mean_log.exp() * 100.0
}

/// Brevity penalty for a hypothesis/reference length pair.
pub fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len > ref_len {
        1.0
    } else if hyp_len == 0 {
        0.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

/// Corpus BLEU over single-reference segment pairs.
///
/// Clipped n-gram counts (n = 1..4) and token lengths are summed corpus-wide,
/// so the result is independent of segment order.
pub fn corpus_bleu(pairs: &[SegmentPair], mode: TokenizeMode) -> Result<BleuReport> {
    if pairs.is_empty() {
        return Err(Error::Data(
            "corpus_bleu needs at least one segment pair".into(),
        ));
    }
    let mut stats = CorpusStats::default();
    for (i, pair) in pairs.iter().enumerate() {
        let reference = tokenize(&pair.reference, mode);
        if reference.is_empty() {
            return Err(Error::Data(format!("segment {i} has an empty reference")));
        }
        let hypothesis = tokenize(&pair.hypothesis, mode);
        stats.add_segment(&hypothesis, &reference);
    }

    let mut precisions = [0.0; MAX_ORDER];
    for (p, (clipped, total)) in precisions
        .iter_mut()
        .zip(stats.clipped.iter().zip(&stats.total))
    {
        if *total > 0 {
            *p = 100.0 * *clipped as f64 / *total as f64;
        }
    }
    let bp = brevity_penalty(stats.hyp_len, stats.ref_len);
    Ok(BleuReport {
        bleu: bleu_from_components(precisions, bp),
        precisions,
        bp,
        ratio: stats.hyp_len as f64 / stats.ref_len as f64,
        hyp_len: stats.hyp_len,
        ref_len: stats.ref_len,
    })
}
