//! RIS-assisted vehicular edge computing simulator with DDPG phase-shift
//! control and multi-agent power allocation.

pub mod baselines;
pub mod channel;
pub mod config;
pub mod env;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod geometry;
pub mod learner;
pub mod nn;
pub mod phase;
pub mod power;
pub mod replay;
pub mod rng;

pub use baselines::{run_baseline, BaselineKind, BaselineSetup, Td3Params};
pub use channel::{ChannelModel, ChannelSet, FadingParams, PhaseConfig};
pub use env::{EnvConfig, PowerAction, StepOutcome, VecEnv};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use evaluation::{rollout, MetricsRow, PowerPolicy, Rollout};
pub use experiment::{cmd_baseline, cmd_sweep, cmd_test, cmd_train_phase, cmd_train_power, SweepVariable};
pub use geometry::{Position3D, ScenarioLayout, VehicleState};
pub use learner::{DdpgConfig, NoiseSchedule};
pub use nn::{Checkpoint, Mlp, MlpSpec};
pub use phase::{train_phase, PhaseAgent};
pub use power::{train_power, Maddpg, MaddpgConfig, PhaseSource, UpdateSchedule};
pub use replay::{ReplayBuffer, Transition};
pub use rng::{stream_rng, Domain, Stream};
