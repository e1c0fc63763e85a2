//! Grid execution: render every (pair, method, model) prompt up front, run
//! them with bounded concurrency through the gateway, and emit records in
//! (pair, method, model) order.

use std::collections::HashSet;
use std::ops::RangeInclusive;
use std::path::Path;

use futures::stream::{self, StreamExt};
use pic_core::corpus::{
    evaluation_corpus, load_annotated, select_subset, AnnotatedPair, CorpusSelector,
};
use pic_core::parsing::{extract_chain, parse_choice, ChainTrace, ParsedVerdict};
use pic_core::promptkit::{
    load_exemplars, select_shots, InferenceChainExemplar, PromptKit, PromptMethod,
    RenderedPrompt, TemplateSet, CHAIN_STEPS, STEP_INSTRUCTIONS,
};
use pic_core::records::{run_header, write_run_records, RunRecord, TokenUsage};
use pic_gateway::clock::rfc3339;
use pic_gateway::{CompletionRequest, Gateway, MockFallback, MockProvider, ModelSpec};

use crate::config::{CorpusSelectorField, ExperimentConfig};
use crate::error::{Result, RunError};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Numbered steps a response to `method` is expected to contain.
pub fn expected_steps(method: PromptMethod) -> usize {
    match method {
        PromptMethod::PicOneShot
        | PromptMethod::PicStepInstructions
        | PromptMethod::PicStepsPlusShots(_) => STEP_INSTRUCTIONS.len(),
        _ => CHAIN_STEPS,
    }
}

/// A config with its inputs loaded and validated.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub pairs: Vec<AnnotatedPair>,
    pub exemplars: Vec<InferenceChainExemplar>,
    pub kit: PromptKit,
}

struct Job {
    pair_id: String,
    gold: pic_core::ToxicityLabel,
    method: PromptMethod,
    request: CompletionRequest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunSummary {
    pub total: usize,
    pub errored: usize,
    pub unparsed: usize,
    pub provider_calls: u64,
}

impl RunSummary {
    pub fn within_budget(&self, budget: usize) -> bool {
        self.errored + self.unparsed <= budget
    }
}

impl Experiment {
    pub fn load(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let config_hash = config.config_hash()?;
        let exemplars = match &config.exemplars {
            Some(p) => load_exemplars(p)?,
            None => Vec::new(),
        };
        let chain_ids: HashSet<String> = exemplars
            .iter()
            .filter(|e| e.is_complete())
            .map(|e| e.pair_id.clone())
            .collect();
        let corpus = evaluation_corpus(load_annotated(&config.corpus)?);
        let pairs = select_subset(&corpus, &config.selector.0, &chain_ids)?;
        if pairs.is_empty() {
            return Err(RunError::EmptySubset);
        }
        let templates = match &config.templates {
            Some(dir) => TemplateSet::load_dir(dir)?,
            None => TemplateSet::bundled(),
        };
        Ok(Experiment {
            config,
            config_hash,
            pairs,
            exemplars,
            kit: PromptKit::new(templates),
        })
    }

    /// Load an ablation sweep: steps `ks` on the chain-annotated subset,
    /// plus the zero-shot baseline when the range starts at step 1.
    pub fn load_ablation(mut config: ExperimentConfig, ks: RangeInclusive<usize>) -> Result<Self> {
        if ks.is_empty() || *ks.start() < 1 || *ks.end() > CHAIN_STEPS {
            return Err(RunError::Config(format!(
                "ablation steps must lie within 1..={CHAIN_STEPS}"
            )));
        }
        let mut methods = Vec::new();
        if *ks.start() == 1 {
            methods.push(PromptMethod::ZeroShot);
        }
        methods.extend(ks.map(PromptMethod::AblationCumulative));
        config.methods = methods;
        config.selector = CorpusSelectorField(CorpusSelector::AnnotatedChains);
        if config.exemplars.is_none() {
            return Err(RunError::Config("ablation needs an exemplars file".into()));
        }
        match Self::load(config) {
            Err(RunError::EmptySubset) => Err(RunError::MissingChain(
                "(no pair in the corpus has one)".into(),
            )),
            other => other,
        }
    }

    /// Mock provider configured by the experiment.
    pub fn mock_provider(&self) -> Result<MockProvider> {
        let fallback = match &self.config.mock_fallback {
            Some(s) => s.parse::<MockFallback>().map_err(RunError::Config)?,
            None => MockFallback::default(),
        };
        Ok(MockProvider::new(fallback))
    }

    fn render(&self, pair: &AnnotatedPair, method: PromptMethod) -> Result<RenderedPrompt> {
        let p = &pair.pair;
        let prompt = match method {
            PromptMethod::AblationCumulative(_) => {
                let own = self
                    .exemplars
                    .iter()
                    .find(|e| e.pair_id == p.pair_id && e.is_complete())
                    .ok_or_else(|| RunError::MissingChain(p.pair_id.clone()))?;
                self.kit.render(method, p, &[own])?
            }
            _ => {
                let shots = select_shots(
                    &self.exemplars,
                    &p.pair_id,
                    method.exemplars_needed(),
                    self.config.exemplar_set.as_deref(),
                );
                self.kit.render(method, p, &shots)?
            }
        };
        Ok(prompt)
    }

    fn jobs(&self) -> Result<Vec<Job>> {
        let mut jobs = Vec::new();
        for pair in &self.pairs {
            let gold = pair.final_label.ok_or_else(|| {
                RunError::Config(format!("pair {} has no final label", pair.pair_id()))
            })?;
            for &method in &self.config.methods {
                let prompt = self.render(pair, method)?;
                for model in &self.config.models {
                    jobs.push(Job {
                        pair_id: pair.pair_id().to_string(),
                        gold,
                        method,
                        request: CompletionRequest::new(model.clone(), &prompt),
                    });
                }
            }
        }
        Ok(jobs)
    }

    /// Execute the grid. Every prompt is rendered before the first call, so
    /// rendering problems abort without side effects. Provider failures
    /// become per-record error markers.
    pub async fn run(&self, gateway: &Gateway) -> Result<Vec<RunRecord>> {
        let jobs = self.jobs()?;
        let clock = gateway.clock().clone();
        let mut records: Vec<RunRecord> = stream::iter(jobs)
            .map(|job| {
                let clock = clock.clone();
                async move {
                    let model_name = job.request.model.model_name.clone();
                    let prompt_hash = job.request.prompt_hash.clone();
                    match gateway.complete(&job.request).await {
                        Ok(resp) => RunRecord {
                            pair_id: job.pair_id,
                            model_name,
                            method: job.method,
                            prompt_hash,
                            verdict: parse_choice(&resp.text),
                            chain: extract_chain(&resp.text, expected_steps(job.method)),
                            raw_response: resp.text,
                            gold: job.gold,
                            usage: resp.usage,
                            latency_ms: resp.latency_ms,
                            timestamp: resp.timestamp,
                            error: None,
                        },
                        Err(e) => {
                            tracing::warn!(pair = %job.pair_id, model = %model_name, error = %e, "call failed");
                            RunRecord {
                                pair_id: job.pair_id,
                                model_name,
                                method: job.method,
                                prompt_hash,
                                raw_response: String::new(),
                                verdict: ParsedVerdict::unparsed(),
                                gold: job.gold,
                                chain: ChainTrace::default(),
                                usage: TokenUsage::default(),
                                latency_ms: 0,
                                timestamp: rfc3339(clock.wall()),
                                error: Some(e.marker()),
                            }
                        }
                    }
                }
            })
            .buffer_unordered(self.config.concurrency)
            .collect()
            .await;
        records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Ok(records)
    }

    pub fn write(&self, path: &Path, records: &[RunRecord], kind: &str) -> Result<()> {
        let header = run_header(&self.config_hash, CODE_VERSION).with("kind", kind);
        write_run_records(path, &header, records)?;
        Ok(())
    }

    /// Build a gateway for the configured models, using `mock` for every
    /// mock model.
    pub fn gateway(
        &self,
        clock: std::sync::Arc<dyn pic_gateway::Clock>,
    ) -> Result<Gateway> {
        let mock = self.mock_provider()?;
        let mut builder = Gateway::builder()
            .cache_dir(&self.config.cache_dir)
            .clock(clock);
        for spec in &self.config.models {
            builder = builder.model(spec, &mock)?;
        }
        Ok(builder.build())
    }

    /// True when every configured model is a mock.
    pub fn all_mock(&self) -> bool {
        self.config
            .models
            .iter()
            .all(|m| m.provider == pic_gateway::ProviderKind::Mock)
    }
}

pub fn summarize(records: &[RunRecord], provider_calls: u64) -> RunSummary {
    RunSummary {
        total: records.len(),
        errored: records.iter().filter(|r| r.error.is_some()).count(),
        unparsed: records
            .iter()
            .filter(|r| r.error.is_none() && r.verdict.label.is_none())
            .count(),
        provider_calls,
    }
}

/// Convenience: mock spec list for tests and demos.
pub fn mock_models(names: &[&str]) -> Vec<ModelSpec> {
    names.iter().map(|n| ModelSpec::mock(*n)).collect()
}
