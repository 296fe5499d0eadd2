//! Straight-line reference scorer. Shares no code with the library.

use std::collections::BTreeMap;
use std::f64::consts::PI;

const EPS: f64 = 0.01;

pub fn normalize(s: &str) -> String {
    let mut mapped = String::new();
    for c in s.chars() {
        let m = match c {
            '\u{2018}' => '\'',
            '\u{2019}' => '\'',
            '\u{201C}' => '"',
            '\u{201D}' => '"',
            '\u{2013}' => '-',
            '\u{2014}' => '-',
            '\u{2212}' => '-',
            '\u{00A0}' => ' ',
            '\u{00D7}' => 'x',
            _ => c,
        };
        mapped.push(m);
    }
    let chars: Vec<char> = mapped.chars().collect();
    let strip = |c: char| c.is_whitespace() || c == '"' || c == '\'';
    let mut lo = 0;
    while lo < chars.len() && strip(chars[lo]) {
        lo += 1;
    }
    let mut hi = chars.len();
    while hi > lo && strip(chars[hi - 1]) {
        hi -= 1;
    }
    let mut out = String::new();
    let mut in_space = false;
    for &c in &chars[lo..hi] {
        if c.is_whitespace() {
            in_space = true;
        } else {
            if in_space && !out.is_empty() {
                out.push(' ');
            }
            in_space = false;
            out.push(c);
        }
    }
    out
}

pub fn tokens(s: &str) -> Vec<String> {
    let c: Vec<char> = s.chars().collect();
    let n = c.len();
    let digit = |i: usize| i < n && c[i].is_ascii_digit();
    let alpha = |i: usize| i < n && c[i].is_alphabetic();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if c[i].is_whitespace() {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        if (c[i] == '\\' && alpha(i + 1)) || c[i].is_alphabetic() {
            while alpha(j) {
                j += 1;
            }
        } else if digit(i) || ((c[i] == '+' || c[i] == '-') && digit(i + 1) && (i == 0 || c[i - 1].is_whitespace())) {
            while digit(j) {
                j += 1;
            }
            if j < n && c[j] == '.' && digit(j + 1) {
                j += 1;
                while digit(j) {
                    j += 1;
                }
            }
        }
        out.push(c[i..j].iter().collect());
        i = j;
    }
    out
}

pub fn f1(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut cp: BTreeMap<&str, i64> = BTreeMap::new();
    let mut cg: BTreeMap<&str, i64> = BTreeMap::new();
    for t in pred {
        *cp.entry(t).or_insert(0) += 1;
    }
    for t in gold {
        *cg.entry(t).or_insert(0) += 1;
    }
    let mut o = 0i64;
    for (t, n) in &cp {
        if let Some(m) = cg.get(t) {
            o += (*n).min(*m);
        }
    }
    if o == 0 {
        return 0.0;
    }
    let p = o as f64 / pred.len() as f64;
    let r = o as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

fn matched(a: &[char], b: &[char]) -> usize {
    let mut best = 0;
    let mut bi = 0;
    let mut bj = 0;
    for i in 0..a.len() {
        for j in 0..b.len() {
            let mut k = 0;
            while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                k += 1;
            }
            if k > best {
                best = k;
                bi = i;
                bj = j;
            }
        }
    }
    if best == 0 {
        return 0;
    }
    best + matched(&a[..bi], &b[..bj]) + matched(&a[bi + best..], &b[bj + best..])
}

pub fn ratcliff(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * matched(&a, &b) as f64 / (a.len() + b.len()) as f64
}

pub fn number(s: &str) -> Option<f64> {
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(k) => (&s[..k], Some(&s[k + 1..])),
        None => (s, None),
    };
    let m = mantissa.strip_prefix(['+', '-']).unwrap_or(mantissa);
    let mut parts = m.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next().unwrap_or("");
    let all_digits = |t: &str| t.chars().all(|c| c.is_ascii_digit());
    if !all_digits(int) || !all_digits(frac) || int.len() + frac.len() == 0 {
        return None;
    }
    if let Some(e) = exponent {
        let e = e.strip_prefix(['+', '-']).unwrap_or(e);
        if e.is_empty() || !all_digits(e) {
            return None;
        }
    }
    let v: f64 = s.parse().ok()?;
    if v.is_finite() {
        Some(v)
    } else {
        None
    }
}

pub fn nl(pred: &str, gold: &str) -> f64 {
    let p = normalize(pred);
    let g = normalize(gold);
    if p == g {
        return 1.0;
    }
    if let (Some(x), Some(y)) = (number(&p), number(&g)) {
        let denom = if y.abs() > 1e-12 { y.abs() } else { 1e-12 };
        return (-(x - y).abs() / denom).exp();
    }
    let lex = 0.6 * f1(&tokens(&p), &tokens(&g)) + 0.4 * ratcliff(&p, &g);
    if lex < 0.8 {
        lex
    } else {
        0.8
    }
}

pub fn series(pred: &[f64], gold: &[f64]) -> f64 {
    let h = gold.len();
    let mut smape = 0.0;
    for t in 0..h {
        let d = gold[t].abs() + pred[t].abs();
        smape += 2.0 * (gold[t] - pred[t]).abs() / if d > EPS { d } else { EPS };
    }
    smape /= h as f64;
    let mut maape = 0.0;
    let mut count = 0;
    for t in 0..h {
        if gold[t].abs() > EPS {
            maape += ((gold[t] - pred[t]).abs() / gold[t].abs()).atan();
            count += 1;
        }
    }
    if count > 0 {
        maape /= count as f64;
    }
    let u = 1.0 - 0.5 * (smape / 2.0 + maape / (PI / 2.0));
    u.clamp(0.0, 1.0)
}

pub fn accuracy(pred: &[String], gold: &[String]) -> f64 {
    let mut hits = 0;
    for i in 0..gold.len() {
        if normalize(&pred[i]) == normalize(&gold[i]) {
            hits += 1;
        }
    }
    hits as f64 / gold.len() as f64
}
