//! Binary search for a similarity threshold driven by yes/no equivalence
//! judgments on explanation pairs.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::annotations::Annotations;
use crate::sim::{MatrixEntry, SimilarityMatrix};
use crate::{Error, FeatureId, Result};

/// A feature pair shown to the judge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePair {
    pub up: FeatureId,
    pub down: FeatureId,
    pub similarity: f64,
    pub up_explanation: Option<String>,
    pub down_explanation: Option<String>,
}

/// Answers whether the two features of a pair mean the same thing.
pub trait Judge {
    fn equivalent(&mut self, pair: &ProbePair) -> Result<bool>;
}

/// A judge backed by a closure, for scripted runs.
pub struct ScriptedJudge<F>(pub F);

impl<F: FnMut(&ProbePair) -> bool> Judge for ScriptedJudge<F> {
    fn equivalent(&mut self, pair: &ProbePair) -> Result<bool> {
        Ok((self.0)(pair))
    }
}

/// Shows each pair on `output` and reads `y` or `n` from `input`.
pub struct TerminalJudge<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> TerminalJudge<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self { input, output }
    }
}

impl<R: BufRead, W: Write> Judge for TerminalJudge<R, W> {
    fn equivalent(&mut self, pair: &ProbePair) -> Result<bool> {
        let text = |e: &Option<String>| e.clone().unwrap_or_else(|| "(no explanation)".into());
        writeln!(self.output, "\n{}  {}", pair.up, text(&pair.up_explanation))?;
        writeln!(self.output, "{}  {}", pair.down, text(&pair.down_explanation))?;
        loop {
            write!(self.output, "same meaning? [y/n] ")?;
            self.output.flush()?;
            let mut line = String::new();
            if self.input.read_line(&mut line)? == 0 {
                return Err(Error::Missing("judge input closed".into()));
            }
            match line.trim().to_ascii_lowercase().as_str() {
                "y" | "yes" => return Ok(true),
                "n" | "no" => return Ok(false),
                _ => {}
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub start: f64,
    pub bounds: (f64, f64),
    /// Stop once the bracketing interval is at most this wide.
    pub target_width: f64,
    pub max_probes: usize,
    /// Pairs shown per probe; the majority decides.
    pub pairs_per_probe: usize,
    /// Pairs are taken from `[t, t + window]`.
    pub window: f64,
    /// How often an empty window is doubled before the probe is skipped.
    pub max_widenings: u32,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            start: 0.5,
            bounds: (0.0, 1.0),
            target_width: 0.02,
            max_probes: 12,
            pairs_per_probe: 5,
            window: 0.02,
            max_widenings: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub threshold: f64,
    pub pairs: Vec<ProbePair>,
    pub answers: Vec<bool>,
    /// None when no pairs were found near the threshold.
    pub equivalent: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub interval: (f64, f64),
    pub converged: bool,
    pub probes: Vec<ProbeRecord>,
}

impl Calibration {
    pub fn width(&self) -> f64 {
        self.interval.1 - self.interval.0
    }
}

/// The `n` entries with the smallest values in `[t, t + window]`, widening
/// the window when it is empty.
fn pairs_near<'a>(sorted: &'a [MatrixEntry], t: f64, cfg: &CalibrationConfig) -> &'a [MatrixEntry] {
    let start = sorted.partition_point(|e| e.value < t);
    let mut window = cfg.window;
    for _ in 0..=cfg.max_widenings {
        let end = sorted.partition_point(|e| e.value <= t + window);
        if end > start {
            return &sorted[start..end.min(start + cfg.pairs_per_probe)];
        }
        window *= 2.0;
    }
    &[]
}

/// Binary search on judged equivalence: a probe at `t` that the judge calls
/// equivalent moves the upper end of the interval down to `t`, otherwise the
/// lower end moves up. The probes show the pairs whose similarity is closest
/// to `t` from above, so the interval brackets the similarity where judgments
/// flip. A probe with no nearby pairs is recorded and ends the search
/// unconverged.
pub fn calibrate_threshold(
    matrix: &SimilarityMatrix,
    annotations: &Annotations,
    judge: &mut dyn Judge,
    cfg: &CalibrationConfig,
) -> Result<Calibration> {
    let (mut lo, mut hi) = cfg.bounds;
    if lo.is_nan()
        || hi.is_nan()
        || lo >= hi
        || !(lo..=hi).contains(&cfg.start)
        || cfg.target_width <= 0.0
        || cfg.pairs_per_probe == 0
    {
        return Err(Error::Invalid(format!(
            "calibration needs lo < start < hi, a positive width and pairs per probe, got {cfg:?}"
        )));
    }
    let mut sorted = matrix.entries().to_vec();
    sorted.sort_by(|a, b| a.value.total_cmp(&b.value).then((a.up, a.down).cmp(&(b.up, b.down))));
    let explain = |f: FeatureId| annotations.get(f).map(str::to_owned);
    let mut probes = Vec::new();
    let mut t = cfg.start;
    while hi - lo > cfg.target_width && probes.len() < cfg.max_probes {
        let pairs: Vec<ProbePair> = pairs_near(&sorted, t, cfg)
            .iter()
            .map(|e| {
                let up = FeatureId::new(matrix.upstream_layer, e.up);
                let down = FeatureId::new(matrix.downstream_layer(), e.down);
                ProbePair {
                    up,
                    down,
                    similarity: e.value,
                    up_explanation: explain(up),
                    down_explanation: explain(down),
                }
            })
            .collect();
        if pairs.is_empty() {
            log::warn!("no pairs near threshold {t}; probe skipped");
            probes.push(ProbeRecord {
                threshold: t,
                pairs,
                answers: vec![],
                equivalent: None,
            });
            break;
        }
        let answers = pairs.iter().map(|p| judge.equivalent(p)).collect::<Result<Vec<_>>>()?;
        let yes = answers.iter().filter(|&&a| a).count();
        let equivalent = 2 * yes > answers.len();
        if equivalent {
            hi = t;
        } else {
            lo = t;
        }
        probes.push(ProbeRecord {
            threshold: t,
            pairs,
            answers,
            equivalent: Some(equivalent),
        });
        t = 0.5 * (lo + hi);
    }
    Ok(Calibration {
        interval: (lo, hi),
        converged: hi - lo <= cfg.target_width,
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::MeasureKind;
    use rand::{Rng, SeedableRng};

    fn uniform_matrix(n: u32, seed: u64) -> SimilarityMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..n * n)
            .map(|k| MatrixEntry {
                up: k / n,
                down: k % n,
                value: rng.random_range(-1.0..1.0),
            })
            .collect();
        SimilarityMatrix::new(MeasureKind::Pearson, 0, n, n, entries).unwrap()
    }

    #[test]
    fn scripted_judge_brackets_its_cutoff() {
        let m = uniform_matrix(64, 3);
        for cutoff in [0.9, 0.33, 0.71] {
            let mut judge = ScriptedJudge(|p: &ProbePair| p.similarity >= cutoff);
            let c = calibrate_threshold(&m, &Annotations::new(), &mut judge, &CalibrationConfig::default()).unwrap();
            assert!(c.converged);
            assert!(c.width() <= 0.02);
            assert!(
                c.interval.0 <= cutoff && cutoff <= c.interval.1,
                "{cutoff} {:?}",
                c.interval
            );
            assert!(c.probes.len() <= 12);
        }
    }

    #[test]
    fn always_yes_moves_toward_lower_bound() {
        let m = uniform_matrix(64, 4);
        let mut judge = ScriptedJudge(|_: &ProbePair| true);
        let c = calibrate_threshold(&m, &Annotations::new(), &mut judge, &CalibrationConfig::default()).unwrap();
        assert_eq!(c.interval.0, 0.0);
        assert!(c.interval.1 <= 0.02);
    }

    #[test]
    fn empty_neighborhood_skips() {
        let entries = vec![MatrixEntry {
            up: 0,
            down: 0,
            value: -0.5,
        }];
        let m = SimilarityMatrix::new(MeasureKind::Pearson, 0, 1, 1, entries).unwrap();
        let mut judge = ScriptedJudge(|_: &ProbePair| true);
        let c = calibrate_threshold(&m, &Annotations::new(), &mut judge, &CalibrationConfig::default()).unwrap();
        assert!(!c.converged);
        assert_eq!(c.probes.len(), 1);
        assert_eq!(c.probes[0].equivalent, None);
    }

    #[test]
    fn terminal_judge_reads_answers() {
        let pair = ProbePair {
            up: FeatureId::new(0, 1),
            down: FeatureId::new(1, 2),
            similarity: 0.9,
            up_explanation: Some("dates".into()),
            down_explanation: None,
        };
        let mut out = Vec::new();
        let mut judge = TerminalJudge::new(&b"maybe\nY\n"[..], &mut out);
        assert!(judge.equivalent(&pair).unwrap());
        let shown = String::from_utf8(out).unwrap();
        assert!(shown.contains("0/1  dates") && shown.contains("(no explanation)"));
        let mut judge = TerminalJudge::new(&b""[..], Vec::new());
        assert!(judge.equivalent(&pair).is_err());
    }
}
