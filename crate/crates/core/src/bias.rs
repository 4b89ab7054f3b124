//! Odds ratios of a circumstance variable between demographic groups, from
//! single-binary-predictor logistic regressions.

use std::collections::BTreeSet;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Demographics, Race, Sex};
use crate::discovery::ErrorCountLedger;
use crate::error::{Error, Result};
use crate::rng;

pub const YOUTH_AGE_LIMIT: u32 = 24;
const GRADIENT_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Age,
    Race,
    Sex,
}

/// Comparison group (coded 1) against a reference group (coded 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub axis: Axis,
}

impl GroupSpec {
    pub const ALL: [GroupSpec; 3] = [
        GroupSpec { axis: Axis::Age },
        GroupSpec { axis: Axis::Race },
        GroupSpec { axis: Axis::Sex },
    ];

    /// `Some(true)` comparison, `Some(false)` reference, `None` neither.
    pub fn code(&self, d: &Demographics) -> Option<bool> {
        match self.axis {
            Axis::Age => d.age_years.map(|a| a < YOUTH_AGE_LIMIT),
            Axis::Race => match d.race {
                Race::Black => Some(true),
                Race::White => Some(false),
                _ => None,
            },
            Axis::Sex => match d.sex {
                Sex::Female => Some(true),
                Sex::Male => Some(false),
                _ => None,
            },
        }
    }

    pub fn comparison_name(&self) -> &'static str {
        match self.axis {
            Axis::Age => "youth",
            Axis::Race => "black",
            Axis::Sex => "female",
        }
    }

    pub fn reference_name(&self) -> &'static str {
        match self.axis {
            Axis::Age => "adult",
            Axis::Race => "white",
            Axis::Sex => "male",
        }
    }
}

/// Cell counts: a/b comparison positive/negative, c/d reference
/// positive/negative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2x2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Table2x2 {
    pub fn from_data(outcomes: &[bool], predictor: &[bool]) -> Result<Self> {
        if outcomes.len() != predictor.len() {
            return Err(Error::Invalid(format!(
                "{} outcomes but {} predictor values",
                outcomes.len(),
                predictor.len()
            )));
        }
        let mut t = Table2x2 {
            a: 0.0,
            b: 0.0,
            c: 0.0,
            d: 0.0,
        };
        for (&y, &x) in outcomes.iter().zip(predictor) {
            match (x, y) {
                (true, true) => t.a += 1.0,
                (true, false) => t.b += 1.0,
                (false, true) => t.c += 1.0,
                (false, false) => t.d += 1.0,
            }
        }
        Ok(t)
    }

    fn has_zero_cell(&self) -> bool {
        [self.a, self.b, self.c, self.d].contains(&0.0)
    }

    fn corrected(&self) -> Self {
        Table2x2 {
            a: self.a + 0.5,
            b: self.b + 0.5,
            c: self.c + 0.5,
            d: self.d + 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub coefficient: f64,
    pub intercept: f64,
    pub standard_error: f64,
    pub continuity_corrected: bool,
    pub iterations: usize,
}

fn sigmoid(z: f64) -> f64 {
    crate::classifier::head::sigmoid(z)
}

fn log_likelihood(t: &Table2x2, b0: f64, b1: f64) -> f64 {
    let ll = |pos: f64, neg: f64, z: f64| {
        let p = sigmoid(z);
        pos * p.ln() + neg * (1.0 - p).ln()
    };
    ll(t.a, t.b, b0 + b1) + ll(t.c, t.d, b0)
}

/// Newton iterations on the weighted table, with step halving.
fn newton(t: &Table2x2) -> Result<LogisticFit> {
    let (n1, n0) = (t.a + t.b, t.c + t.d);
    let (mut b0, mut b1) = (0.0f64, 0.0f64);
    for iter in 0..MAX_ITERATIONS {
        let (p1, p0) = (sigmoid(b0 + b1), sigmoid(b0));
        let g1 = t.a - n1 * p1;
        let g0 = g1 + t.c - n0 * p0;
        let (w1, w0) = (n1 * p1 * (1.0 - p1), n0 * p0 * (1.0 - p0));
        // observed information [[w0 + w1, w1], [w1, w1]]
        let det = (w0 + w1) * w1 - w1 * w1;
        if det.is_nan() || det <= 0.0 {
            return Err(Error::Statistics("singular information matrix".into()));
        }
        let var_b1 = (w0 + w1) / det;
        if g0.hypot(g1) < GRADIENT_TOL {
            return Ok(LogisticFit {
                coefficient: b1,
                intercept: b0,
                standard_error: var_b1.sqrt(),
                continuity_corrected: false,
                iterations: iter,
            });
        }
        let d0 = (w1 * g0 - w1 * g1) / det;
        let d1 = (-w1 * g0 + (w0 + w1) * g1) / det;
        let base = log_likelihood(t, b0, b1);
        let mut step = 1.0;
        loop {
            let (c0, c1) = (b0 + step * d0, b1 + step * d1);
            if log_likelihood(t, c0, c1) >= base - 1e-12 || step < 1e-8 {
                b0 = c0;
                b1 = c1;
                break;
            }
            step *= 0.5;
        }
    }
    Err(Error::Statistics(format!(
        "Newton iterations did not converge in {MAX_ITERATIONS} steps"
    )))
}

pub fn fit_table(table: &Table2x2) -> Result<LogisticFit> {
    if table.a + table.b == 0.0 || table.c + table.d == 0.0 {
        return Err(Error::Statistics("both predictor groups must be present".into()));
    }
    if table.has_zero_cell() {
        let mut fit = newton(&table.corrected())?;
        fit.continuity_corrected = true;
        Ok(fit)
    } else {
        newton(table)
    }
}

pub fn fit_binary_logistic(outcomes: &[bool], predictor: &[bool]) -> Result<LogisticFit> {
    fit_table(&Table2x2::from_data(outcomes, predictor)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiForm {
    /// e^(coef ± z·SE)
    #[default]
    Exponentiated,
    /// e^coef ± z·SE
    Additive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    pub or_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn odds_ratio_ci(coefficient: f64, standard_error: f64, z: f64, form: CiForm) -> OddsRatio {
    let or_value = coefficient.exp();
    let half = z * standard_error;
    match form {
        CiForm::Exponentiated => OddsRatio {
            or_value,
            ci_low: (coefficient - half).exp(),
            ci_high: (coefficient + half).exp(),
        },
        CiForm::Additive => OddsRatio {
            or_value,
            ci_low: or_value - half,
            ci_high: or_value + half,
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationVariant {
    Original,
    FlagsRemoved,
    RandomDropped,
}

/// The base corpus minus a set of dropped instances.
#[derive(Clone, Debug)]
pub struct CorpusVariant<'a> {
    pub variant: AnnotationVariant,
    pub corpus: &'a Corpus,
    pub dropped: BTreeSet<String>,
}

/// Original, flags removed, and the same number of random target-source
/// instances removed.
pub fn build_variants<'a>(
    corpus: &'a Corpus,
    ledger: &ErrorCountLedger,
    seed: u64,
) -> Result<[CorpusVariant<'a>; 3]> {
    let flags: BTreeSet<String> = ledger.flags.iter().cloned().collect();
    let pool: Vec<&str> = corpus
        .incidents()
        .iter()
        .filter(|i| i.source == ledger.target_source && i.label(&ledger.variable).known().is_some())
        .map(|i| i.incident_id.as_str())
        .collect();
    if flags.len() > pool.len() {
        return Err(Error::Insufficient(format!(
            "{} flags but only {} labeled target instances",
            flags.len(),
            pool.len()
        )));
    }
    let random: BTreeSet<String> = index::sample(&mut rng::derived_rng(seed, "bias-random-drop", 0), pool.len(), flags.len())
        .into_iter()
        .map(|i| pool[i].to_string())
        .collect();
    Ok([
        CorpusVariant {
            variant: AnnotationVariant::Original,
            corpus,
            dropped: BTreeSet::new(),
        },
        CorpusVariant {
            variant: AnnotationVariant::FlagsRemoved,
            corpus,
            dropped: flags,
        },
        CorpusVariant {
            variant: AnnotationVariant::RandomDropped,
            corpus,
            dropped: random,
        },
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ORRecord {
    pub variable: String,
    pub annotation_variant: AnnotationVariant,
    pub axis: Axis,
    /// Positive-labeled instances per group.
    pub comparison_count: u64,
    pub reference_count: u64,
    pub comparison_total: u64,
    pub reference_total: u64,
    /// Instances in neither group or with an unknown label.
    pub excluded: u64,
    pub coefficient: f64,
    pub standard_error: f64,
    pub or_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub continuity_corrected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub variable: String,
    pub z: f64,
    pub ci_form: CiForm,
    pub records: Vec<ORRecord>,
    pub warnings: Vec<String>,
}

pub fn run_bias_analysis(
    variants: &[CorpusVariant<'_>],
    variable: &str,
    group_specs: &[GroupSpec],
    z: f64,
    ci_form: CiForm,
) -> Result<BiasReport> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Invalid(format!("z must be positive, got {z}")));
    }
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for v in variants {
        for spec in group_specs {
            let mut outcomes = Vec::new();
            let mut predictor = Vec::new();
            let mut excluded = 0u64;
            for inc in v.corpus.incidents() {
                if v.dropped.contains(&inc.incident_id) {
                    continue;
                }
                match (inc.label(variable).known(), spec.code(&inc.demographics)) {
                    (Some(y), Some(x)) => {
                        outcomes.push(y);
                        predictor.push(x);
                    }
                    _ => excluded += 1,
                }
            }
            let table = Table2x2::from_data(&outcomes, &predictor)?;
            if table.a + table.b == 0.0 || table.c + table.d == 0.0 {
                warnings.push(format!(
                    "{:?}/{:?}: empty {} or {} group, skipped",
                    v.variant,
                    spec.axis,
                    spec.comparison_name(),
                    spec.reference_name()
                ));
                continue;
            }
            let fit = fit_table(&table)?;
            let or = odds_ratio_ci(fit.coefficient, fit.standard_error, z, ci_form);
            records.push(ORRecord {
                variable: variable.to_string(),
                annotation_variant: v.variant,
                axis: spec.axis,
                comparison_count: table.a as u64,
                reference_count: table.c as u64,
                comparison_total: (table.a + table.b) as u64,
                reference_total: (table.c + table.d) as u64,
                excluded,
                coefficient: fit.coefficient,
                standard_error: fit.standard_error,
                or_value: or.or_value,
                ci_low: or.ci_low,
                ci_high: or.ci_high,
                continuity_corrected: fit.continuity_corrected,
            });
        }
    }
    Ok(BiasReport {
        variable: variable.to_string(),
        z,
        ci_form,
        records,
        warnings,
    })
}

impl BiasReport {
    /// One row per variant, one `OR[low;high]` column and one
    /// `comparison/reference` positive-count column per axis.
    pub fn table_csv(&self) -> String {
        let axes: BTreeSet<Axis> = self.records.iter().map(|r| r.axis).collect();
        let variants: BTreeSet<AnnotationVariant> =
            self.records.iter().map(|r| r.annotation_variant).collect();
        let name = |a: &Axis| GroupSpec { axis: *a }.comparison_name();
        let mut out = String::from("variable,variant");
        for a in &axes {
            out.push_str(&format!(",{}_or,{}_counts", name(a), name(a)));
        }
        out.push('\n');
        for v in &variants {
            let tag = serde_json::to_value(v).expect("serializable");
            out.push_str(&format!("{},{}", self.variable, tag.as_str().unwrap_or_default()));
            for a in &axes {
                match self
                    .records
                    .iter()
                    .find(|r| r.annotation_variant == *v && r.axis == *a)
                {
                    Some(r) => out.push_str(&format!(
                        ",{:.2}[{:.2};{:.2}],{}/{}",
                        r.or_value, r.ci_low, r.ci_high, r.comparison_count, r.reference_count
                    )),
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }
}
