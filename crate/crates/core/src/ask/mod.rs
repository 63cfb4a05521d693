//! Learning when to ask: the requester, the adaptive state selector, the
//! advisor and ask losses, episode sampling and the training loop.

mod loss;
mod meta;
mod selector;
mod train;

pub use loss::{advisor_loss, ask_loss, total_loss, AdvisorExampleSet, AskLossWeights};
pub use meta::{decide_meta, MetaAction};
pub use selector::{
    select_unstable, unstable_count, unstable_rate, update_ewma, value_errors, value_loss, SelectorState,
    UnstableSelection,
};
pub use train::{heu_importance, Algorithm, AskConfig, MetricsRow, Observer, StepRecord, TrainConfig, Trainer};
