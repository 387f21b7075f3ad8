//! BLEU, perplexity, accuracy and the run report.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::cage::PipelineSpec;
use crate::error::{Error, Result};
use crate::neural::LanguageModel;
use crate::quality::{ContainmentStats, LengthAnalysis, OverlapStats};
use crate::text::normalize;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram matches and candidate n-gram totals for orders `1..=max_n`.
fn modified_counts(candidates: &[Vec<String>], references: &[Vec<String>], max_n: usize) -> Vec<(usize, usize)> {
    let mut totals = vec![(0, 0); max_n];
    for (cand, reference) in candidates.iter().zip(references) {
        for (n, total) in (1..=max_n).zip(totals.iter_mut()) {
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in ngram_counts(cand, n) {
                total.0 += count.min(ref_counts.get(gram).copied().unwrap_or(0));
                total.1 += count;
            }
        }
    }
    totals
}

fn bleu_impl(candidates: &[Vec<String>], references: &[Vec<String>], max_n: usize, smooth: bool) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate list"));
    }
    if candidates.len() != references.len() {
        return Err(Error::Argument(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    if max_n == 0 {
        return Err(Error::Argument("max_n must be at least 1".into()));
    }
    let c: usize = candidates.iter().map(Vec::len).sum();
    let r: usize = references.iter().map(Vec::len).sum();
    if c == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for (i, (matched, total)) in modified_counts(candidates, references, max_n).into_iter().enumerate() {
        let (matched, total) = if smooth && i > 0 {
            (matched + 1, total + 1)
        } else {
            (matched, total)
        };
        if matched == 0 {
            return Ok(0.0);
        }
        log_sum += (matched as f64 / total as f64).ln();
    }
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    Ok(bp * (log_sum / max_n as f64).exp())
}

/// Corpus BLEU with one reference per candidate: clipped n-gram precisions,
/// their geometric mean and the brevity penalty. Unsmoothed, so any zero
/// precision makes the score zero.
pub fn bleu(candidates: &[Vec<String>], references: &[Vec<String>], max_n: usize) -> Result<f64> {
    bleu_impl(candidates, references, max_n, false)
}

/// Add-one smoothing on orders 2 and up, for per-sentence display.
pub fn bleu_smoothed(candidates: &[Vec<String>], references: &[Vec<String>], max_n: usize) -> Result<f64> {
    bleu_impl(candidates, references, max_n, true)
}

/// BLEU-4 over normalized texts.
pub fn text_bleu<S: AsRef<str>>(candidates: &[S], references: &[S]) -> Result<f64> {
    let tok = |v: &[S]| v.iter().map(|s| normalize(s.as_ref())).collect::<Vec<_>>();
    bleu(&tok(candidates), &tok(references), 4)
}

/// Anything that assigns `log P(e_i | context, e_<i)` to explanation tokens.
pub trait ExplanationScorer {
    fn explanation_log_probs(&self, context: &[usize], explanation: &[usize]) -> Result<Vec<f64>>;
}

impl ExplanationScorer for LanguageModel {
    fn explanation_log_probs(&self, context: &[usize], explanation: &[usize]) -> Result<Vec<f64>> {
        LanguageModel::explanation_log_probs(self, context, explanation)
    }
}

/// `exp` of the token-weighted mean negative log-likelihood over all
/// explanation tokens.
pub fn perplexity<M: ExplanationScorer + ?Sized>(model: &M, pairs: &[(Vec<usize>, Vec<usize>)]) -> Result<f64> {
    let (mut nll, mut tokens) = (0.0, 0usize);
    for (context, explanation) in pairs {
        if explanation.is_empty() {
            continue;
        }
        let log_probs = model.explanation_log_probs(context, explanation)?;
        nll -= log_probs.iter().sum::<f64>();
        tokens += log_probs.len();
    }
    if tokens == 0 {
        return Err(Error::Empty("explanation tokens"));
    }
    Ok((nll / tokens as f64).exp())
}

/// Fraction of ids present in both maps whose predictions agree.
pub fn accuracy(predictions: &HashMap<String, usize>, gold: &HashMap<String, usize>) -> Result<f64> {
    let (mut shared, mut agree) = (0usize, 0usize);
    for (id, p) in predictions {
        if let Some(g) = gold.get(id) {
            shared += 1;
            agree += (p == g) as usize;
        }
    }
    if shared == 0 {
        return Err(Error::Empty("shared prediction ids"));
    }
    Ok(agree as f64 / shared as f64)
}

/// Example counts behind a report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub train: usize,
    pub eval: usize,
}

/// Everything one pipeline run measures, with the pipeline spec that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub spec: PipelineSpec,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<OverlapStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub containment: Option<ContainmentStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_analysis: Option<LengthAnalysis>,
    pub n: Counts,
}

/// Rounds to the six decimals a report is written with.
pub fn round6(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.6}").parse().unwrap_or(x)
    } else {
        x
    }
}

impl MetricsReport {
    /// Rounds every real to six decimals so that writing and reading back
    /// gives an equal report.
    pub fn rounded(mut self) -> Self {
        self.accuracy = round6(self.accuracy);
        self.bleu = self.bleu.map(round6);
        self.perplexity = self.perplexity.map(round6);
        if let Some(o) = self.overlap.as_mut() {
            for v in [
                &mut o.pct_contains_answer,
                &mut o.pct_contains_distractor,
                &mut o.pct_contains_either,
                &mut o.pct_bigram,
                &mut o.pct_trigram,
            ] {
                *v = round6(*v);
            }
        }
        if let Some(c) = self.containment.as_mut() {
            c.pct_any_choice = round6(c.pct_any_choice);
            c.pct_predicted_choice = round6(c.pct_predicted_choice);
        }
        if let Some(l) = self.length_analysis.as_mut() {
            l.mean_words_incorrect = l.mean_words_incorrect.map(round6);
            l.mean_words_correct = l.mean_words_correct.map(round6);
        }
        self
    }
}

/// Pretty JSON with every float printed in fixed six-decimal notation.
struct FixedSix(PrettyFormatter<'static>);

impl Formatter for FixedSix {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.6}")
        } else {
            w.write_all(b"null")
        }
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with fixed six-decimal reals.
pub fn to_fixed_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedSix(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn write_report(report: &MetricsReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_fixed_json(report)?).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<MetricsReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        let x = vec![toks("a b c d e")];
        assert_eq!(bleu(&x, &x, 4).unwrap(), 1.0);
        assert_eq!(bleu(&[toks("a b c d")], &[toks("w x y z")], 4).unwrap(), 0.0);
    }

    #[test]
    fn bleu_hand_case() {
        let b = bleu(&[toks("a b c d e")], &[toks("a b c d f")], 4).unwrap();
        // p1..p4 = 4/5, 3/4, 2/3, 1/2; product 1/5
        assert!((b - 0.2f64.powf(0.25)).abs() < 1e-9, "{b}");
    }

    #[test]
    fn bleu_clips_repeats() {
        // "the the the" vs "the cat": unigram precision 1/3
        let b = bleu(&[toks("the the the")], &[toks("the cat")], 1).unwrap();
        assert!((b - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn brevity_penalty_applies() {
        let b = bleu(&[toks("a b")], &[toks("a b c d")], 1).unwrap();
        assert!((b - (1.0f64 - 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn smoothing_only_rescues_higher_orders() {
        let c = [toks("a b x y")];
        let r = [toks("a b c d")];
        assert_eq!(bleu(&c, &r, 4).unwrap(), 0.0);
        let s = bleu_smoothed(&c, &r, 4).unwrap();
        // p1 = 2/4, p2 = 2/4, p3 = 1/3, p4 = 1/2
        let expected = (0.5f64 * 0.5 * (1.0 / 3.0) * 0.5).powf(0.25);
        assert!((s - expected).abs() < 1e-12);
        assert_eq!(bleu_smoothed(&[toks("q r")], &[toks("a b")], 2).unwrap(), 0.0);
    }

    #[test]
    fn bleu_errors() {
        assert!(matches!(bleu(&[], &[], 4), Err(Error::Empty(_))));
        assert!(matches!(bleu(&[toks("a")], &[], 4), Err(Error::Argument(_))));
    }

    struct Fixed(Vec<Vec<f64>>);

    impl ExplanationScorer for Fixed {
        fn explanation_log_probs(&self, context: &[usize], explanation: &[usize]) -> Result<Vec<f64>> {
            let row = &self.0[context[0]];
            assert_eq!(row.len(), explanation.len());
            Ok(row.clone())
        }
    }

    #[test]
    fn perplexity_is_token_weighted() {
        let probs = [vec![0.5, 0.25], vec![0.1, 0.9, 0.8]];
        let model = Fixed(probs.iter().map(|r| r.iter().map(|p: &f64| p.ln()).collect()).collect());
        let pairs = vec![(vec![0], vec![7, 7]), (vec![1], vec![7, 7, 7])];
        let nll: f64 = probs.iter().flatten().map(|p| -p.ln()).sum();
        let expected = (nll / 5.0).exp();
        assert!((perplexity(&model, &pairs).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn perplexity_needs_tokens() {
        let model = Fixed(vec![vec![]]);
        assert!(matches!(perplexity(&model, &[(vec![0], vec![])]), Err(Error::Empty(_))));
        let peaked = Fixed(vec![vec![0.0, 0.0]]);
        assert_eq!(perplexity(&peaked, &[(vec![0], vec![1, 2])]).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_counts_shared_ids() {
        let map = |v: &[(&str, usize)]| v.iter().map(|(k, x)| (k.to_string(), *x)).collect::<HashMap<_, _>>();
        let gold = map(&[("a", 0), ("b", 1), ("c", 2)]);
        assert_eq!(accuracy(&gold, &gold).unwrap(), 1.0);
        assert_eq!(accuracy(&map(&[("a", 1), ("b", 0)]), &gold).unwrap(), 0.0);
        let gold10: HashMap<_, _> = (0..10).map(|i| (i.to_string(), 0)).collect();
        let pred: HashMap<_, _> = (0..10).map(|i| (i.to_string(), (i >= 7) as usize)).collect();
        assert!((accuracy(&pred, &gold10).unwrap() - 0.7).abs() < 1e-15);
        assert!(accuracy(&map(&[("z", 0)]), &gold).is_err());
    }

    #[test]
    fn fixed_six_formatting() {
        let json = to_fixed_json(&serde_json::json!({"x": 0.1234567, "n": 3, "v": [1.0]})).unwrap();
        assert!(json.contains("\"x\": 0.123457"));
        assert!(json.contains("\"n\": 3"));
        assert!(json.contains("1.000000"));
        assert_eq!(round6(2.0 / 3.0), 0.666667);
    }
}
