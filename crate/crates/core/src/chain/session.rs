//! Per-user dialogue state around the chain.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio_util::sync::CancellationToken;

use crate::home::HomeTemplate;
use crate::plan::GoalType;

use super::{Chain, ChainError, ChainOutcome, ChainTrace, FeedbackResult, Proposal, StepObserver, Verdict};

const START_OVER: &str = "I still can't find anything in this home for that, so I'll leave things as they are.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "turn", rename_all = "snake_case")]
pub enum Turn {
    User { text: String },
    System { text: String },
    Proposal { plan_id: u64, plan: Value },
    Verdict { plan_id: u64, accepted: bool, critique: Option<String> },
}

/// One goal being worked out, possibly over several clarifying messages.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub command: String,
    pub goal: Option<GoalType>,
    /// Grows within the episode; cleared with it.
    pub clarifications: Vec<String>,
    pub awaiting_clarification: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendingPlan {
    pub id: u64,
    pub proposal: Proposal,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("no plan is pending")]
    NoPendingPlan,
    #[error("plan {0} is not the pending plan")]
    UnknownPlan(u64),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Clone)]
pub struct MessageResult {
    pub trace: ChainTrace,
    pub plan_id: Option<u64>,
    pub needs_clarification: bool,
}

#[derive(Debug, Clone)]
pub struct SessionState {
    pub id: String,
    pub template: Arc<HomeTemplate>,
    pub history: Vec<Turn>,
    pub pending: Option<PendingPlan>,
    pub episode: Option<Episode>,
    next_plan_id: u64,
}

impl SessionState {
    pub fn new(id: impl Into<String>, template: Arc<HomeTemplate>) -> Self {
        SessionState { id: id.into(), template, history: Vec::new(), pending: None, episode: None, next_plan_id: 1 }
    }

    /// A new command, or a clarification if the last reply asked for one.
    /// Any pending plan is superseded.
    pub async fn post_message(
        &mut self,
        chain: &Chain,
        text: &str,
        goal: Option<GoalType>,
        cancel: &CancellationToken,
    ) -> MessageResult {
        self.post_message_observed(chain, text, goal, cancel, None).await
    }

    pub async fn post_message_observed(
        &mut self,
        chain: &Chain,
        text: &str,
        goal: Option<GoalType>,
        cancel: &CancellationToken,
        observer: Option<&StepObserver>,
    ) -> MessageResult {
        self.history.push(Turn::User { text: text.to_string() });
        self.pending = None;
        let mut episode = match self.episode.take() {
            Some(mut episode) if episode.awaiting_clarification => {
                episode.clarifications.push(text.trim().to_string());
                episode.goal = goal.or(episode.goal);
                episode
            }
            _ => Episode { command: text.trim().to_string(), goal, clarifications: Vec::new(), awaiting_clarification: false },
        };
        let mut trace = chain
            .run_observed(&self.template, &episode.command, episode.goal, &episode.clarifications, cancel, observer)
            .await;
        episode.goal = trace.goal;
        let mut plan_id = None;
        let mut needs_clarification = false;
        match trace.outcome {
            ChainOutcome::PlanProposed => {
                let proposal = Proposal::from_trace(&trace).expect("proposed trace carries a plan");
                let id = self.propose(proposal);
                plan_id = Some(id);
                episode.awaiting_clarification = false;
                self.episode = Some(episode);
            }
            ChainOutcome::NoRelevantDevices if episode.clarifications.len() >= chain.config().max_clarify_rounds => {
                trace.outcome = ChainOutcome::Abandoned;
                trace.utterance = START_OVER.into();
            }
            ChainOutcome::NoRelevantDevices => {
                episode.awaiting_clarification = true;
                needs_clarification = true;
                self.episode = Some(episode);
            }
            ChainOutcome::Abandoned | ChainOutcome::Error => {}
        }
        self.history.push(Turn::System { text: trace.utterance.clone() });
        MessageResult { trace, plan_id, needs_clarification }
    }

    fn propose(&mut self, proposal: Proposal) -> u64 {
        let id = self.next_plan_id;
        self.next_plan_id += 1;
        self.history.push(Turn::Proposal { plan_id: id, plan: proposal.plan.to_json() });
        self.pending = Some(PendingPlan { id, proposal });
        id
    }

    /// Accept or critique the pending plan. A successful revision becomes the
    /// new pending plan under a fresh id.
    pub async fn resolve(
        &mut self,
        chain: &Chain,
        plan_id: u64,
        verdict: &Verdict,
        cancel: &CancellationToken,
    ) -> Result<(FeedbackResult, Option<u64>), SessionError> {
        self.resolve_observed(chain, plan_id, verdict, cancel, None).await
    }

    pub async fn resolve_observed(
        &mut self,
        chain: &Chain,
        plan_id: u64,
        verdict: &Verdict,
        cancel: &CancellationToken,
        observer: Option<&StepObserver>,
    ) -> Result<(FeedbackResult, Option<u64>), SessionError> {
        let pending = self.pending.as_ref().ok_or(SessionError::NoPendingPlan)?;
        if pending.id != plan_id {
            return Err(SessionError::UnknownPlan(plan_id));
        }
        let proposal = pending.proposal.clone();
        let result = chain.feedback_observed(&self.template, &proposal, verdict, cancel, observer).await?;
        let critique = match verdict {
            Verdict::Accept => None,
            Verdict::Critique { critique } => Some(critique.clone()),
        };
        self.history.push(Turn::Verdict { plan_id, accepted: critique.is_none(), critique });
        self.pending = None;
        let mut new_id = None;
        match &result.revised {
            Some(plan) => new_id = Some(self.propose(Proposal { plan: plan.clone(), ..proposal })),
            None => self.episode = None,
        }
        self.history.push(Turn::System { text: result.utterance.clone() });
        Ok((result, new_id))
    }
}
