//! The experiment driver: run configurations, the scenario pipeline, the two
//! ablation grids, the three-model sequential chain, and scatter export.

pub mod ablation;
pub mod config;
pub mod scatter;
pub mod scenario;
pub mod sequential;

pub use ablation::{run_ablation_alpha, run_ablation_denoise, AblationPoint};
pub use config::{
    AblationBlock, DatasetConfig, EvalBlock, GeneratorConfig, LossKind, MethodBlock, MethodKind,
    ModelConfig, RunConfig, SequentialBlock,
};
pub use scatter::export_scatter;
pub use scenario::{run_id, run_scenario, ScenarioOutcome};
pub use sequential::{run_sequential, SequentialOutcome};
