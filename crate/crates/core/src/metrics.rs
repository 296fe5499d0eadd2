//! Per-instance utility in `[0, 1]` for natural-language, time-series and
//! tabular answers, plus slice aggregation.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::bench::{parse_finite, ParsedAnswer, TaskInstance, TaskKind};
use crate::error::MetricError;

/// Lexical-stage cap.
pub const LEXICAL_CAP: f64 = 0.8;
/// Weight of token F1 in the lexical blend.
pub const TOKEN_F1_WEIGHT: f64 = 0.6;
/// Weight of character similarity in the lexical blend.
pub const CHAR_SIM_WEIGHT: f64 = 0.4;
/// Denominator floor of the relative numeric error.
pub const REL_ERROR_FLOOR: f64 = 1e-12;
/// Denominator floor of sMAPE and MAAPE, and the MAAPE index threshold.
pub const SERIES_EPS: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Exact,
    Numeric,
    Lexical,
    TsCombined,
    Accuracy,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityScore {
    pub value: f64,
    pub stage: Stage,
    #[serde(default)]
    pub terms: BTreeMap<String, f64>,
}

impl UtilityScore {
    fn new(value: f64, stage: Stage) -> Self {
        UtilityScore {
            value: value.clamp(0.0, 1.0),
            stage,
            terms: BTreeMap::new(),
        }
    }

    fn with(mut self, name: &str, v: f64) -> Self {
        self.terms.insert(name.to_string(), v);
        self
    }
}

fn map_unicode(c: char) -> char {
    match c {
        '\u{2018}' | '\u{2019}' => '\'',
        '\u{201C}' | '\u{201D}' => '"',
        '\u{2013}' | '\u{2014}' | '\u{2212}' => '-',
        '\u{00A0}' => ' ',
        '\u{00D7}' => 'x',
        other => other,
    }
}

/// Answer normalization: Unicode map, then strip outer whitespace and ASCII
/// quotes, then collapse inner whitespace runs. Idempotent.
pub fn normalize_text(s: &str) -> String {
    let mapped: String = s.chars().map(map_unicode).collect();
    let stripped = mapped.trim_matches(|c: char| c.is_whitespace() || c == '"' || c == '\'');
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits a normalized answer into LaTeX commands, words, numbers and single
/// symbols, in that priority.
pub fn tokenize_answer(s: &str) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c == '\\' && chars.get(i + 1).is_some_and(|n| n.is_alphabetic()) {
            i += 1;
            while i < chars.len() && chars[i].is_alphabetic() {
                i += 1;
            }
        } else if c.is_alphabetic() {
            while i < chars.len() && chars[i].is_alphabetic() {
                i += 1;
            }
        } else if c.is_ascii_digit() || is_signed_number_start(&chars, i) {
            if !c.is_ascii_digit() {
                i += 1;
            }
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
        } else {
            i += 1;
        }
        tokens.push(chars[start..i].iter().collect());
    }
    tokens
}

fn is_signed_number_start(chars: &[char], i: usize) -> bool {
    matches!(chars[i], '+' | '-')
        && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())
        && (i == 0 || chars[i - 1].is_whitespace())
}

/// Multiset token F1.
pub fn token_f1<S: AsRef<str>>(pred: &[S], gold: &[S]) -> f64 {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *gold_counts.entry(t.as_ref()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in pred {
        if let Some(c) = gold_counts.get_mut(t.as_ref()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / pred.len() as f64;
    let r = overlap as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// Longest common block in `a[alo..ahi]` x `b[blo..bhi]`; ties go to the
/// earliest start in `a`, then in `b`.
fn longest_match(
    a: &[char],
    b_index: &HashMap<char, Vec<usize>>,
    (alo, ahi): (usize, usize),
    (blo, bhi): (usize, usize),
    run_len: &mut [usize],
) -> (usize, usize, usize) {
    let (mut best_i, mut best_j, mut best) = (alo, blo, 0usize);
    // run_len[j + 1] holds the match length ending at (i - 1, j) from the previous row.
    let mut prev: Vec<(usize, usize)> = Vec::new();
    let mut cur: Vec<(usize, usize)> = Vec::new();
    for (i, ch) in a.iter().enumerate().take(ahi).skip(alo) {
        cur.clear();
        if let Some(positions) = b_index.get(ch) {
            for &j in positions {
                if j < blo {
                    continue;
                }
                if j >= bhi {
                    break;
                }
                let k = if j > blo { run_len[j] } else { 0 } + 1;
                cur.push((j, k));
                if k > best {
                    best_i = i + 1 - k;
                    best_j = j + 1 - k;
                    best = k;
                }
            }
        }
        for &(j, _) in &prev {
            run_len[j + 1] = 0;
        }
        for &(j, k) in &cur {
            run_len[j + 1] = k;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    for &(j, _) in &prev {
        run_len[j + 1] = 0;
    }
    (best_i, best_j, best)
}

/// Total size of the matching blocks found by recursive longest-common-block
/// partitioning (no junk heuristic).
pub fn matching_characters(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut b_index: HashMap<char, Vec<usize>> = HashMap::new();
    for (j, ch) in b.iter().enumerate() {
        b_index.entry(*ch).or_default().push(j);
    }
    let mut run_len = vec![0usize; b.len() + 1];
    let mut total = 0;
    let mut pending = vec![(0, a.len(), 0, b.len())];
    while let Some((alo, ahi, blo, bhi)) = pending.pop() {
        let (i, j, k) = longest_match(&a, &b_index, (alo, ahi), (blo, bhi), &mut run_len);
        if k == 0 {
            continue;
        }
        total += k;
        if alo < i && blo < j {
            pending.push((alo, i, blo, j));
        }
        if i + k < ahi && j + k < bhi {
            pending.push((i + k, ahi, j + k, bhi));
        }
    }
    total
}

/// Ratcliff/Obershelp similarity `2M / (|a| + |b|)`; 1 when both are empty.
pub fn char_similarity(a: &str, b: &str) -> f64 {
    let total = a.chars().count() + b.chars().count();
    if total == 0 {
        return 1.0;
    }
    2.0 * matching_characters(a, b) as f64 / total as f64
}

/// Plain decimal with optional sign and exponent; no `inf`/`nan`, no separators.
pub fn parse_single_number(s: &str) -> Option<f64> {
    let bytes = s.as_bytes();
    let mut i = 0;
    if matches!(bytes.first(), Some(b'+' | b'-')) {
        i += 1;
    }
    let int_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i - int_start;
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        digits += i - frac_start;
    }
    if digits == 0 {
        return None;
    }
    if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
        i += 1;
        if matches!(bytes.get(i), Some(b'+' | b'-')) {
            i += 1;
        }
        let exp_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            return None;
        }
    }
    if i != bytes.len() {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Exact match, then numeric relative error, then the capped lexical blend.
pub fn score_natural_language(pred: &str, gold: &str) -> UtilityScore {
    let p = normalize_text(pred);
    let g = normalize_text(gold);
    if p == g {
        return UtilityScore::new(1.0, Stage::Exact);
    }
    if let (Some(pv), Some(gv)) = (parse_single_number(&p), parse_single_number(&g)) {
        let e_rel = (pv - gv).abs() / gv.abs().max(REL_ERROR_FLOOR);
        return UtilityScore::new((-e_rel).exp(), Stage::Numeric).with("e_rel", e_rel);
    }
    let f1 = token_f1(&tokenize_answer(&p), &tokenize_answer(&g));
    let s_char = char_similarity(&p, &g);
    let value = (TOKEN_F1_WEIGHT * f1 + CHAR_SIM_WEIGHT * s_char).min(LEXICAL_CAP);
    UtilityScore::new(value, Stage::Lexical)
        .with("F1_tok", f1)
        .with("S_char", s_char)
}

/// sMAPE and MAAPE of aligned value sequences.
pub fn smape_maape(pred: &[f64], gold: &[f64]) -> Result<(f64, f64), MetricError> {
    if pred.len() != gold.len() {
        return Err(MetricError::LengthMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricError::Empty);
    }
    if let Some(pos) = pred.iter().chain(gold).position(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite(pos % gold.len()));
    }
    let h = gold.len() as f64;
    let smape = gold
        .iter()
        .zip(pred)
        .map(|(y, yh)| 2.0 * (y - yh).abs() / (y.abs() + yh.abs()).max(SERIES_EPS))
        .sum::<f64>()
        / h;
    let (sum, count) = gold
        .iter()
        .zip(pred)
        .filter(|(y, _)| y.abs() > SERIES_EPS)
        .fold((0.0, 0usize), |(s, n), (y, yh)| {
            (s + ((y - yh).abs() / y.abs().max(SERIES_EPS)).atan(), n + 1)
        });
    let maape = if count == 0 { 0.0 } else { sum / count as f64 };
    Ok((smape, maape))
}

fn combined(pred: &[f64], gold: &[f64], stage: Stage) -> Result<UtilityScore, MetricError> {
    let (smape, maape) = smape_maape(pred, gold)?;
    let u = 1.0 - 0.5 * (smape / 2.0 + maape / FRAC_PI_2);
    Ok(UtilityScore::new(u, stage).with("sMAPE", smape).with("MAAPE", maape))
}

/// Forecast utility from values aligned by position; timestamps are ignored.
pub fn score_series_values(pred: &[f64], gold: &[f64]) -> Result<UtilityScore, MetricError> {
    combined(pred, gold, Stage::TsCombined)
}

pub fn score_time_series(pred: &crate::bench::Series, gold: &crate::bench::Series) -> Result<UtilityScore, MetricError> {
    score_series_values(&pred.values(), &gold.values())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TabularKind {
    Classification,
    Regression,
}

/// Top-1 accuracy (classification) or the series utility over row-wise
/// predictions (regression).
pub fn score_tabular<S: AsRef<str>>(pred: &[S], gold: &[S], kind: TabularKind) -> Result<UtilityScore, MetricError> {
    if pred.len() != gold.len() {
        return Err(MetricError::LengthMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricError::Empty);
    }
    match kind {
        TabularKind::Classification => {
            let hits = pred
                .iter()
                .zip(gold)
                .filter(|(p, g)| normalize_text(p.as_ref()) == normalize_text(g.as_ref()))
                .count();
            let acc = hits as f64 / gold.len() as f64;
            Ok(UtilityScore::new(acc, Stage::Accuracy).with("accuracy", acc))
        }
        TabularKind::Regression => {
            let to_numbers = |cells: &[S]| -> Result<Vec<f64>, MetricError> {
                cells
                    .iter()
                    .map(|c| parse_finite(c.as_ref()).ok_or_else(|| MetricError::NonNumeric(c.as_ref().to_string())))
                    .collect()
            };
            combined(&to_numbers(pred)?, &to_numbers(gold)?, Stage::Regression)
        }
    }
}

/// Scores an already-parsed answer against the instance's gold label.
pub fn score_parsed(task: &TaskInstance, answer: &ParsedAnswer) -> Result<UtilityScore, MetricError> {
    match (task.task, answer) {
        (TaskKind::Qa, ParsedAnswer::Text(text)) => Ok(score_natural_language(text, &task.label)),
        (TaskKind::Forecast, ParsedAnswer::Series(pred)) => {
            let gold = crate::bench::parse_series_csv(&task.label).map_err(|_| MetricError::Empty)?;
            score_time_series(pred, &gold)
        }
        (TaskKind::Classification | TaskKind::Regression, ParsedAnswer::Values(pred)) => {
            let target = task.table().map(|t| t.target_column).ok();
            let gold = crate::bench::parse_value_list(&task.label, target.as_deref());
            let kind = if task.task == TaskKind::Regression {
                TabularKind::Regression
            } else {
                TabularKind::Classification
            };
            score_tabular(pred, &gold, kind)
        }
        _ => Err(MetricError::Empty),
    }
}

/// Parses a raw answer under the task's output contract and scores it.
pub fn score_answer(task: &TaskInstance, raw: &str) -> Result<UtilityScore, String> {
    let parsed = task.parse_answer(raw)?;
    score_parsed(task, &parsed).map_err(|e| e.to_string())
}

/// Mean with sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceSummary {
    pub mean: f64,
    pub sample_std: f64,
    pub n: usize,
}

/// Unweighted mean and `n - 1` standard deviation (0 for a singleton).
pub fn summarize(values: &[f64]) -> Result<SliceSummary, MetricError> {
    if values.is_empty() {
        return Err(MetricError::Empty);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sample_std = if n == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    Ok(SliceSummary {
        mean: mean.clamp(lo, hi),
        sample_std,
        n,
    })
}

pub fn aggregate(scores: &[UtilityScore]) -> Result<SliceSummary, MetricError> {
    summarize(&scores.iter().map(|s| s.value).collect::<Vec<_>>())
}
