//! Navigator contract: planning the first round and reflecting on ranked
//! results to refine later rounds.

use crate::backend::{BackendFailure, TokenUsage};
use crate::channels::{SearchStrategy, DEFAULT_PER_CHANNEL_LIMIT};
use crate::corpus::PaperId;
use crate::verify::Checklist;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::sync::Mutex;

/// A natural-language search request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchIntent {
    pub query: String,
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub strategy: SearchStrategy,
    pub checklist: Checklist,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub strategy: SearchStrategy,
    pub checklist: Checklist,
    #[serde(default)]
    pub stop: bool,
}

/// One candidate of the ranked scored pool, as shown to the navigator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectCandidate {
    pub paper_id: PaperId,
    pub title: String,
    pub relevance: f64,
    pub mean_score: f64,
    pub checkpoint_scores: Vec<u8>,
}

/// Inputs to a reflect call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectContext {
    pub query: String,
    /// Rounds completed so far.
    pub round: u32,
    pub strategy: SearchStrategy,
    pub checklist: Checklist,
    /// Whole cumulative scored pool in rank order.
    pub ranked: Vec<ReflectCandidate>,
}

pub trait NavigatorBackend: Send + Sync {
    fn name(&self) -> &str;

    fn plan(&self, intent: &SearchIntent) -> Result<(Plan, TokenUsage), BackendFailure>;

    fn reflect(&self, context: &ReflectContext) -> Result<(Reflection, TokenUsage), BackendFailure>;
}

/// Offline navigator.
///
/// Plans one semantic query (the intent itself) and a checklist built from
/// the intent's clauses (split on `;` and line breaks). Each reflection seeds
/// citation expansion with the top-ranked papers and stops once the seed
/// set stops changing.
#[derive(Debug, Clone)]
pub struct HeuristicNavigator {
    pub per_channel_limit: usize,
    pub seed_count: usize,
    pub expansion_depth: u32,
}

impl Default for HeuristicNavigator {
    fn default() -> Self {
        Self {
            per_channel_limit: DEFAULT_PER_CHANNEL_LIMIT,
            seed_count: 5,
            expansion_depth: 1,
        }
    }
}

impl HeuristicNavigator {
    pub fn clauses(query: &str) -> Vec<String> {
        let clauses: Vec<String> = query
            .split([';', '\n'])
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(str::to_string)
            .collect();
        if clauses.is_empty() {
            vec![query.trim().to_string()]
        } else {
            clauses
        }
    }
}

impl NavigatorBackend for HeuristicNavigator {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn plan(&self, intent: &SearchIntent) -> Result<(Plan, TokenUsage), BackendFailure> {
        Ok((
            Plan {
                strategy: SearchStrategy {
                    semantic_queries: vec![intent.query.clone()],
                    per_channel_limit: self.per_channel_limit,
                    ..Default::default()
                },
                checklist: Checklist::from_texts(Self::clauses(&intent.query)),
            },
            TokenUsage::none(),
        ))
    }

    fn reflect(&self, context: &ReflectContext) -> Result<(Reflection, TokenUsage), BackendFailure> {
        let seeds: Vec<PaperId> = context
            .ranked
            .iter()
            .take(self.seed_count)
            .map(|c| c.paper_id.clone())
            .collect();
        let previous: BTreeSet<&PaperId> = context.strategy.seed_paper_ids.iter().collect();
        let stop = seeds.is_empty() || seeds.iter().all(|s| previous.contains(s));
        let mut strategy = context.strategy.clone();
        strategy.seed_paper_ids = seeds;
        strategy.expansion_depth = self.expansion_depth.max(1);
        Ok((
            Reflection {
                strategy,
                checklist: context.checklist.clone(),
                stop,
            },
            TokenUsage::none(),
        ))
    }
}

/// Navigator replaying a fixed plan and a list of reflections.
///
/// Reflection `i` is returned after round `i + 1`; once the list runs out
/// the navigator asks to stop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedNavigator {
    pub plan: Plan,
    #[serde(default)]
    pub reflections: Vec<Reflection>,
}

impl NavigatorBackend for ScriptedNavigator {
    fn name(&self) -> &str {
        "scripted"
    }

    fn plan(&self, _intent: &SearchIntent) -> Result<(Plan, TokenUsage), BackendFailure> {
        Ok((self.plan.clone(), TokenUsage::none()))
    }

    fn reflect(&self, context: &ReflectContext) -> Result<(Reflection, TokenUsage), BackendFailure> {
        let index = context.round.saturating_sub(1) as usize;
        let reflection = self.reflections.get(index).cloned().unwrap_or_else(|| Reflection {
            strategy: context.strategy.clone(),
            checklist: context.checklist.clone(),
            stop: true,
        });
        Ok((reflection, TokenUsage::none()))
    }
}

type PlanFn = dyn Fn(&SearchIntent) -> Result<Plan, BackendFailure> + Send + Sync;
type ReflectFn = dyn Fn(&ReflectContext) -> Result<Reflection, BackendFailure> + Send + Sync;

/// Navigator built from closures, for tests. Records every reflect context
/// it receives.
pub struct FnNavigator {
    name: String,
    plan: Box<PlanFn>,
    reflect: Box<ReflectFn>,
    seen: Mutex<Vec<ReflectContext>>,
}

impl FnNavigator {
    pub fn new<P, R>(name: impl Into<String>, plan: P, reflect: R) -> Self
    where
        P: Fn(&SearchIntent) -> Result<Plan, BackendFailure> + Send + Sync + 'static,
        R: Fn(&ReflectContext) -> Result<Reflection, BackendFailure> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            plan: Box::new(plan),
            reflect: Box::new(reflect),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn contexts(&self) -> Vec<ReflectContext> {
        self.seen.lock().expect("not poisoned").clone()
    }
}

impl NavigatorBackend for FnNavigator {
    fn name(&self) -> &str {
        &self.name
    }

    fn plan(&self, intent: &SearchIntent) -> Result<(Plan, TokenUsage), BackendFailure> {
        (self.plan)(intent).map(|p| (p, TokenUsage::none()))
    }

    fn reflect(&self, context: &ReflectContext) -> Result<(Reflection, TokenUsage), BackendFailure> {
        self.seen.lock().expect("not poisoned").push(context.clone());
        (self.reflect)(context).map(|r| (r, TokenUsage::none()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clauses_split() {
        assert_eq!(
            HeuristicNavigator::clauses("graph models; evaluated on QM9\n after 2019 "),
            ["graph models", "evaluated on QM9", "after 2019"]
        );
        assert_eq!(HeuristicNavigator::clauses("single intent"), ["single intent"]);
    }

    #[test]
    fn heuristic_reflect_seeds_and_stops() {
        let nav = HeuristicNavigator::default();
        let intent = SearchIntent {
            query: "a; b".into(),
            session_id: "s".into(),
        };
        let (plan, _) = nav.plan(&intent).unwrap();
        assert_eq!(plan.checklist.len(), 2);
        let ctx = ReflectContext {
            query: intent.query.clone(),
            round: 1,
            strategy: plan.strategy.clone(),
            checklist: plan.checklist.clone(),
            ranked: vec![ReflectCandidate {
                paper_id: "x".into(),
                title: "X".into(),
                relevance: 0.9,
                mean_score: 5.0,
                checkpoint_scores: vec![5, 5],
            }],
        };
        let (r1, _) = nav.reflect(&ctx).unwrap();
        assert!(!r1.stop);
        assert_eq!(r1.strategy.seed_paper_ids, vec![PaperId::from("x")]);
        let ctx2 = ReflectContext {
            strategy: r1.strategy,
            round: 2,
            ..ctx
        };
        assert!(nav.reflect(&ctx2).unwrap().0.stop);
    }

    #[test]
    fn scripted_runs_out() {
        let plan = Plan {
            strategy: SearchStrategy {
                semantic_queries: vec!["q".into()],
                ..Default::default()
            },
            checklist: Checklist::from_texts(["c"]),
        };
        let nav = ScriptedNavigator {
            plan: plan.clone(),
            reflections: vec![Reflection {
                strategy: plan.strategy.clone(),
                checklist: plan.checklist.clone(),
                stop: false,
            }],
        };
        let mut ctx = ReflectContext {
            query: "q".into(),
            round: 1,
            strategy: plan.strategy.clone(),
            checklist: plan.checklist.clone(),
            ranked: vec![],
        };
        assert!(!nav.reflect(&ctx).unwrap().0.stop);
        ctx.round = 2;
        assert!(nav.reflect(&ctx).unwrap().0.stop);
    }
}
