//! Actuation planning: from a score to a timed plan of key and head-joint
//! movements, plus transient-fingering hazard detection and tempo limits.
//!
//! Times in an [`ActuationTimeline`] are on the audio clock: score time plus
//! the configured lead-in. Keys for a note transition all begin travelling
//! together and are timed so the slowest one closes exactly at the onset of
//! the next note; faster keys finish early, which is where transient
//! fingerings come from.

mod bpm;
mod hazards;
mod profile;
mod timeline;

pub use bpm::{bpm_table, max_bpm, BpmLimit, NoteValue};
pub use hazards::{detect_transient_hazards, Hazard};
pub use profile::{ActuationProfile, KeyLatency, Latency, ProfileError, REFERENCE_PROFILE_TEXT};
pub use timeline::{
    build_timeline, schedule_head_joint, ActuationEvent, ActuationTimeline, EventKind, Target,
};

use serde::Serialize;

use crate::fingering::{FingeringError, KeyId, RegisterBounds};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchedulerError {
    #[error("infeasible timing before note {note_index}: {} needs {required_ms:.2} ms but only {available_ms:.2} ms are available", actuator_name(*.key))]
    InfeasibleTiming {
        note_index: usize,
        /// `None` is the head joint.
        key: Option<KeyId>,
        required_ms: f64,
        available_ms: f64,
    },
    #[error("timeline violates its invariants: {0}")]
    InvalidTimeline(String),
    #[error("limit must be positive, got {0} ms")]
    Domain(f64),
    #[error(transparent)]
    Fingering(#[from] FingeringError),
}

fn actuator_name(key: Option<KeyId>) -> String {
    match key {
        Some(k) => format!("the {k} key"),
        None => "the head joint".to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchedulerConfig {
    pub registers: RegisterBounds,
    /// Fraction of the motor/key time excess spent before key travel, in [0, 1].
    pub split_factor: f64,
    /// Audio time before the first note, used to set up the first fingering.
    pub lead_in_ms: f64,
    pub hazard_threshold_ms: f64,
    /// Whether the head joint rotates for low-register notes.
    pub assist: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            registers: RegisterBounds::default(),
            split_factor: 1.0,
            lead_in_ms: 500.0,
            hazard_threshold_ms: 10.0,
            assist: true,
        }
    }
}
