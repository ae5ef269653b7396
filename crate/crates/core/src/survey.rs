//! Monte-Carlo volumes of the separable, hidden-nonlocal and CHSH-violating
//! classes over states whose first marginal is maximally mixed.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use crate::correlation::{analyze_with, Tolerances};
use crate::error::{Error, Result};
use crate::linalg::{c, inv_sqrt_psd2, kron, Mat2};
use crate::qstate::{random_channel_choi, random_ginibre_state, reduce, validate_state, Side, TwoQubitState, DEFAULT_STATE_TOL};
use crate::rng::SeedStream;

pub const DEFAULT_MEASURE: &str = "stinespring-env4";
pub const GINIBRE_FILTERED: &str = "ginibre-filtered";
/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

const CHUNK: usize = 1024;

/// How survey samples are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    /// Choi state of a Haar-random isometry into `2 x env` dimensions.
    Stinespring { env_dim: usize },
    /// Full-rank Ginibre state with side A whitened to I/2.
    GinibreFiltered,
}

impl Measure {
    /// Accepts `stinespring-envN` (N = 1..=64) and `ginibre-filtered`.
    pub fn parse(tag: &str) -> Result<Self> {
        if tag == GINIBRE_FILTERED {
            return Ok(Measure::GinibreFiltered);
        }
        tag.strip_prefix("stinespring-env")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|n| (1..=64).contains(n))
            .map(|env_dim| Measure::Stinespring { env_dim })
            .ok_or_else(|| Error::UnknownMeasure(tag.to_string()))
    }

    pub fn sample(&self, seed: &SeedStream) -> Result<TwoQubitState> {
        match *self {
            Measure::Stinespring { env_dim } => Ok(random_channel_choi(seed, env_dim)),
            Measure::GinibreFiltered => {
                let g = random_ginibre_state(seed, 4);
                let x = inv_sqrt_psd2(&(reduce(g.rho(), Side::A) * c(2.0, 0.0)), 1e-14)
                    .ok_or_else(|| Error::InvalidConfig("degenerate Ginibre marginal".into()))?;
                let k = kron(&x, &Mat2::identity());
                let out = k * g.rho() * k.adjoint();
                let tr = out.trace();
                validate_state(&(out / tr), DEFAULT_STATE_TOL)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurveyConfig {
    pub n_samples: usize,
    pub seed: SeedStream,
    pub measure_tag: String,
    pub tolerances: Tolerances,
}

impl SurveyConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            seed: SeedStream::new(seed),
            measure_tag: DEFAULT_MEASURE.to_string(),
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Separable,
    EntangledNoHiddenNl,
    HiddenNlOnly,
    ChshViolating,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 4] =
        [ClassLabel::Separable, ClassLabel::EntangledNoHiddenNl, ClassLabel::HiddenNlOnly, ClassLabel::ChshViolating];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassLabel::Separable => "separable",
            ClassLabel::EntangledNoHiddenNl => "entangled_no_hidden_nl",
            ClassLabel::HiddenNlOnly => "hidden_nl_only",
            ClassLabel::ChshViolating => "chsh_violating",
        }
    }
}

/// Labels from the three flags; combinations breaking
/// `chsh => hidden nonlocal => entangled` are errors.
pub fn label_from_flags(separable: bool, hidden_nonlocal: bool, chsh: bool) -> Result<ClassLabel> {
    match (separable, hidden_nonlocal, chsh) {
        (true, false, false) => Ok(ClassLabel::Separable),
        (false, false, false) => Ok(ClassLabel::EntangledNoHiddenNl),
        (false, true, false) => Ok(ClassLabel::HiddenNlOnly),
        (false, true, true) => Ok(ClassLabel::ChshViolating),
        _ => Err(Error::ConsistencyViolation(format!(
            "separable = {separable}, hidden_nonlocal = {hidden_nonlocal}, chsh_violating = {chsh}"
        ))),
    }
}

pub fn class_label(s: &TwoQubitState) -> Result<ClassLabel> {
    class_label_with(s, &Tolerances::default())
}

pub fn class_label_with(s: &TwoQubitState, tol: &Tolerances) -> Result<ClassLabel> {
    let r = analyze_with(s, tol)?;
    label_from_flags(r.separable, r.hidden_nonlocal, r.horodecki_m > 1.0)
}

/// A binomial fraction with its 95% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub count: u64,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    pub fn wilson(count: u64, n: u64) -> Self {
        let nf = n as f64;
        let p = count as f64 / nf;
        let z2 = Z_95 * Z_95;
        let denom = 1.0 + z2 / nf;
        let center = (p + z2 / (2.0 * nf)) / denom;
        let half = Z_95 / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
        Estimate { count, value: p, ci_low: (center - half).max(0.0), ci_high: (center + half).min(1.0) }
    }

    pub fn width(&self) -> f64 {
        self.ci_high - self.ci_low
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassCounts {
    pub separable: u64,
    pub entangled_no_hidden_nl: u64,
    pub hidden_nl_only: u64,
    pub chsh_violating: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurveyReport {
    pub n: u64,
    pub frac_not_hidden_nonlocal: Estimate,
    pub frac_separable: Estimate,
    pub frac_no_unfiltered_chsh: Estimate,
    pub consistency_violations: u64,
    pub class_counts: ClassCounts,
    pub measure_tag: String,
    pub seed: SeedStream,
    pub tolerances: Tolerances,
}

impl SurveyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Header `label,count,fraction,ci_low,ci_high`; one row per class, then
    /// the three nested fractions.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,count,fraction,ci_low,ci_high\n");
        let counts = [
            self.class_counts.separable,
            self.class_counts.entangled_no_hidden_nl,
            self.class_counts.hidden_nl_only,
            self.class_counts.chsh_violating,
        ];
        let rows = ClassLabel::ALL
            .iter()
            .zip(counts)
            .map(|(l, k)| (l.as_str(), Estimate::wilson(k, self.n)))
            .chain([
                ("frac_separable", self.frac_separable),
                ("frac_not_hidden_nonlocal", self.frac_not_hidden_nonlocal),
                ("frac_no_unfiltered_chsh", self.frac_no_unfiltered_chsh),
            ]);
        for (label, e) in rows {
            let _ = writeln!(out, "{label},{},{},{},{}", e.count, e.value, e.ci_low, e.ci_high);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    separable: u64,
    not_hidden: u64,
    no_chsh: u64,
    classes: [u64; 4],
    violations: u64,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.separable += o.separable;
        self.not_hidden += o.not_hidden;
        self.no_chsh += o.no_chsh;
        self.violations += o.violations;
        for k in 0..4 {
            self.classes[k] += o.classes[k];
        }
        self
    }
}

pub fn run_survey(cfg: &SurveyConfig) -> Result<SurveyReport> {
    run_survey_with_progress(cfg, |_, _| {})
}

/// Like [`run_survey`], calling `progress(done, total)` each time another
/// tenth of the samples is finished.
pub fn run_survey_with_progress<F>(cfg: &SurveyConfig, progress: F) -> Result<SurveyReport>
where
    F: Fn(usize, usize) + Sync,
{
    if cfg.n_samples < 1 {
        return Err(Error::InvalidConfig("n_samples must be at least 1".into()));
    }
    let measure = Measure::parse(&cfg.measure_tag)?;
    let n = cfg.n_samples;
    let done = AtomicUsize::new(0);
    let tally = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| -> Result<Tally> {
            let mut t = Tally::default();
            let range = chunk * CHUNK..((chunk + 1) * CHUNK).min(n);
            let len = range.len();
            for i in range {
                let s = measure.sample(&cfg.seed.child(i as u64))?;
                let r = analyze_with(&s, &cfg.tolerances)?;
                let chsh = r.horodecki_m > 1.0;
                t.separable += r.separable as u64;
                t.not_hidden += !r.hidden_nonlocal as u64;
                t.no_chsh += !chsh as u64;
                match label_from_flags(r.separable, r.hidden_nonlocal, chsh) {
                    Ok(label) => t.classes[label as usize] += 1,
                    Err(_) => t.violations += 1,
                }
            }
            let before = done.fetch_add(len, Ordering::Relaxed);
            let after = before + len;
            if (after * 10) / n > (before * 10) / n {
                progress(after, n);
            }
            Ok(t)
        })
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;

    let nn = n as u64;
    Ok(SurveyReport {
        n: nn,
        frac_not_hidden_nonlocal: Estimate::wilson(tally.not_hidden, nn),
        frac_separable: Estimate::wilson(tally.separable, nn),
        frac_no_unfiltered_chsh: Estimate::wilson(tally.no_chsh, nn),
        consistency_violations: tally.violations,
        class_counts: ClassCounts {
            separable: tally.classes[0],
            entangled_no_hidden_nl: tally.classes[1],
            hidden_nl_only: tally.classes[2],
            chsh_violating: tally.classes[3],
        },
        measure_tag: cfg.measure_tag.clone(),
        seed: cfg.seed,
        tolerances: cfg.tolerances,
    })
}
