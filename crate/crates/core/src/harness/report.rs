//! Evaluation report: the full condition matrix, seed summaries, flags and
//! itemized skips/failures, plus a plain-text rendering.

use std::fmt::{self, Write as _};

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::metrics::{Condition, GapResult, SeedSummary, VpResult};
use crate::perturb::PerturbationKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult<F> {
    pub condition: Condition,
    /// Condition the Emd/VP columns compare against.
    pub baseline: Option<Condition>,
    pub n: usize,
    pub correct: usize,
    /// Instances without a prediction (backend failures); scored wrong.
    pub missing: usize,
    pub em: F,
    pub baseline_em: Option<F>,
    pub emd: Option<F>,
    pub vp: Option<VpResult<F>>,
    pub gap: Option<GapResult<F>>,
    /// For answer-changing kinds: Em of the same predictions against the
    /// answers before editing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub em_against_original_answers: Option<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary<F> {
    pub kind: PerturbationKind,
    pub em: SeedSummary<F>,
    pub emd: SeedSummary<F>,
    pub vp: SeedSummary<F>,
    /// Present when every seed had both a compare and a non-compare split.
    pub gap: Option<SeedSummary<F>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedInstance {
    pub condition: Condition,
    pub instance_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendFailure {
    pub condition: Condition,
    pub instance_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportFlags {
    /// Whether every prediction under REMOVE_TABLE equals the ORIGINAL
    /// prediction for the same instance; absent when REMOVE_TABLE was not
    /// evaluated.
    pub table_independent: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub dataset: String,
    pub instances: usize,
    pub evaluated_instances: usize,
    pub kinds: Vec<PerturbationKind>,
    pub seeds: Vec<u64>,
    pub max_tokens: Option<usize>,
    pub serialization: String,
    pub token_counting: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<F> {
    pub model_id: String,
    pub metadata: ReportMetadata,
    /// ORIGINAL first, then the shortened baseline if evaluated, then every
    /// `(kind, seed)` in request order.
    pub conditions: Vec<ConditionResult<F>>,
    pub summaries: Vec<KindSummary<F>>,
    pub flags: ReportFlags,
    pub skipped: Vec<SkippedInstance>,
    pub failures: Vec<BackendFailure>,
}

impl<F: Float> MetricsReport<F> {
    pub fn condition(&self, condition: Condition) -> Option<&ConditionResult<F>> {
        self.conditions.iter().find(|c| c.condition == condition)
    }

    pub fn original(&self) -> &ConditionResult<F> {
        self.condition(Condition::Original)
            .expect("ORIGINAL is always evaluated")
    }

    pub fn summary(&self, kind: PerturbationKind) -> Option<&KindSummary<F>> {
        self.summaries.iter().find(|s| s.kind == kind)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = self.write_text(&mut out);
        out
    }

    fn write_text(&self, out: &mut String) -> fmt::Result {
        let m = &self.metadata;
        writeln!(out, "model: {}", self.model_id)?;
        writeln!(
            out,
            "dataset: {} ({} instances, {} evaluated)",
            m.dataset, m.instances, m.evaluated_instances
        )?;
        let seeds: Vec<String> = m.seeds.iter().map(u64::to_string).collect();
        writeln!(out, "seeds: {}", seeds.join(", "))?;
        writeln!(out, "serialization: {}", m.serialization)?;
        writeln!(out)?;
        writeln!(
            out,
            "{:<30} {:>6} {:>8} {:>8} {:>8} {:>5} {:>5} {:>8}",
            "condition", "n", "Em", "Emd", "VP%", "C2W", "W2C", "Gap"
        )?;
        for c in &self.conditions {
            writeln!(
                out,
                "{:<30} {:>6} {:>8} {:>8} {:>8} {:>5} {:>5} {:>8}",
                c.condition.to_string(),
                c.n,
                fixed(Some(c.em)),
                fixed(c.emd),
                fixed(c.vp.map(|v| v.percent())),
                c.vp.map_or("-".into(), |v| v.c2w.to_string()),
                c.vp.map_or("-".into(), |v| v.w2c.to_string()),
                fixed(c.gap.and_then(|g| g.gap)),
            )?;
        }
        if !self.summaries.is_empty() {
            writeln!(out)?;
            writeln!(out, "mean ± sample std over seeds")?;
            writeln!(
                out,
                "{:<22} {:>17} {:>17} {:>17} {:>17}",
                "kind", "Em", "Emd", "VP%", "Gap"
            )?;
            let hundred = F::from(100).expect("100 fits");
            for s in &self.summaries {
                let vp_pct = SeedSummary {
                    mean: s.vp.mean * hundred,
                    std: s.vp.std * hundred,
                    n: s.vp.n,
                };
                writeln!(
                    out,
                    "{:<22} {:>17} {:>17} {:>17} {:>17}",
                    s.kind.name(),
                    pm(&s.em),
                    pm(&s.emd),
                    pm(&vp_pct),
                    s.gap.as_ref().map_or("-".into(), pm),
                )?;
            }
        }
        writeln!(out)?;
        match self.flags.table_independent {
            Some(true) => writeln!(out, "flag: predictions do not depend on the table (REMOVE_TABLE leaves every answer unchanged)")?,
            Some(false) => writeln!(out, "flag: table dependence observed under REMOVE_TABLE")?,
            None => {}
        }
        writeln!(out, "skipped instance-conditions: {}", self.skipped.len())?;
        writeln!(out, "backend failures: {}", self.failures.len())?;
        Ok(())
    }
}

fn fixed<F: Float>(v: Option<F>) -> String {
    match v.and_then(|x| x.to_f64()) {
        Some(x) => format!("{x:.4}"),
        None => "-".into(),
    }
}

fn pm<F: Float>(s: &SeedSummary<F>) -> String {
    format!(
        "{:.4} ± {:.4}",
        s.mean.to_f64().unwrap_or(f64::NAN),
        s.std.to_f64().unwrap_or(f64::NAN)
    )
}
