//! Dynamics models and the ensemble that stands in for the belief over
//! transition functions.

mod ensemble;
mod history;
mod tabular;

pub use ensemble::{
    EnsembleConfig, EnsembleMode, Member, MemberKind, ModelEnsemble, NetworkModel, Predictive,
    TrainConfig,
};
pub use history::{History, NormStats, Normalizer, Transition, STD_FLOOR};
pub use tabular::TabularModel;
