//! Measured actuation latencies.

use serde::Serialize;

use crate::fingering::KeyId;
use crate::kv::{KvError, KvFile};

/// Profile shipped with the crate: per-key motor and key/lever travel times
/// and head-joint timing of the reference robot.
pub const REFERENCE_PROFILE_TEXT: &str = include_str!("../../../../profiles/reference_robot.profile");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error(transparent)]
    Syntax(#[from] KvError),
    #[error("profile is missing `{0}`")]
    Missing(String),
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("unknown profile entry `{0}`")]
    Unknown(String),
}

/// Motor run time and the part of it during which the key actually travels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Latency {
    pub motor_ms: f64,
    pub key_ms: f64,
}

impl Latency {
    /// Motor time spent before key travel starts, for a given split of the
    /// motor/key excess (1.0 puts all of it before travel).
    pub fn pre_travel_ms(&self, split_factor: f64) -> f64 {
        split_factor * (self.motor_ms - self.key_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyLatency {
    pub motor_ms: f64,
    pub key_ms: f64,
    pub motor_sd_ms: f64,
    pub key_sd_ms: f64,
    /// Release timing when it differs from the press timing.
    pub release: Option<Latency>,
}

impl KeyLatency {
    pub fn press(&self) -> Latency {
        Latency {
            motor_ms: self.motor_ms,
            key_ms: self.key_ms,
        }
    }

    pub fn release(&self) -> Latency {
        self.release.unwrap_or_else(|| self.press())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActuationProfile {
    pub version: String,
    keys: [KeyLatency; 14],
    pub head_motor_ms: f64,
    pub head_motor_sd_ms: f64,
    pub head_joint_ms: f64,
    pub head_joint_sd_ms: f64,
    pub head_angle_deg: f64,
}

impl Default for ActuationProfile {
    fn default() -> Self {
        Self::parse(REFERENCE_PROFILE_TEXT).expect("shipped profile parses")
    }
}

fn numbers(value: &str, line: usize, count: usize) -> Result<Vec<f64>, ProfileError> {
    let parsed: Result<Vec<f64>, _> = value.split_whitespace().map(str::parse).collect();
    match parsed {
        Ok(v) if v.len() == count && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(ProfileError::Invalid {
            line,
            message: format!("expected {count} numbers, got `{value}`"),
        }),
    }
}

impl ActuationProfile {
    pub fn parse(text: &str) -> Result<Self, ProfileError> {
        let kv = KvFile::parse(text)?;
        for key in kv.keys() {
            let known = key == "version"
                || key.starts_with("head.")
                || key
                    .strip_prefix("key.")
                    .or_else(|| key.strip_prefix("release."))
                    .is_some_and(|k| k.parse::<KeyId>().is_ok());
            if !known {
                return Err(ProfileError::Unknown(key.to_string()));
            }
        }
        let mut keys = [KeyLatency {
            motor_ms: 0.0,
            key_ms: 0.0,
            motor_sd_ms: 0.0,
            key_sd_ms: 0.0,
            release: None,
        }; 14];
        for id in KeyId::ALL {
            let name = format!("key.{id}");
            let (value, line) = kv.get(&name).ok_or(ProfileError::Missing(name))?;
            let v = numbers(value, line, 4)?;
            let release = match kv.get(&format!("release.{id}")) {
                Some((value, line)) => {
                    let r = numbers(value, line, 2)?;
                    check_latency(r[0], r[1], line)?;
                    Some(Latency {
                        motor_ms: r[0],
                        key_ms: r[1],
                    })
                }
                None => None,
            };
            check_latency(v[0], v[2], line)?;
            if v[1] < 0.0 || v[3] < 0.0 {
                return Err(ProfileError::Invalid {
                    line,
                    message: "standard deviations must be non-negative".into(),
                });
            }
            keys[id.index()] = KeyLatency {
                motor_ms: v[0],
                motor_sd_ms: v[1],
                key_ms: v[2],
                key_sd_ms: v[3],
                release,
            };
        }
        let scalar = |name: &str| -> Result<(f64, usize), ProfileError> {
            let (value, line) = kv.get(name).ok_or_else(|| ProfileError::Missing(name.into()))?;
            Ok((numbers(value, line, 1)?[0], line))
        };
        let (head_motor_ms, line) = scalar("head.motor_ms")?;
        let (head_joint_ms, _) = scalar("head.joint_ms")?;
        check_latency(head_motor_ms, head_joint_ms, line)?;
        let head_motor_sd_ms = scalar("head.motor_sd_ms").map_or(0.0, |v| v.0);
        let head_joint_sd_ms = scalar("head.joint_sd_ms").map_or(0.0, |v| v.0);
        let (head_angle_deg, _) = scalar("head.angle_deg")?;
        Ok(Self {
            version: kv.get("version").map_or("unversioned", |v| v.0).to_string(),
            keys,
            head_motor_ms,
            head_motor_sd_ms,
            head_joint_ms,
            head_joint_sd_ms,
            head_angle_deg,
        })
    }

    pub fn key(&self, id: KeyId) -> &KeyLatency {
        &self.keys[id.index()]
    }

    pub fn key_mut(&mut self, id: KeyId) -> &mut KeyLatency {
        &mut self.keys[id.index()]
    }

    /// The key with the longest press travel; this bounds the note rate.
    pub fn slowest_key(&self) -> (KeyId, f64) {
        KeyId::ALL
            .into_iter()
            .map(|k| (k, self.key(k).key_ms))
            .fold((KeyId::LowC, f64::MIN), |best, cur| if cur.1 > best.1 { cur } else { best })
    }

    /// Motor lead before the head joint starts turning.
    pub fn head_motor_lead_ms(&self) -> f64 {
        self.head_motor_ms - self.head_joint_ms
    }
}

fn check_latency(motor_ms: f64, key_ms: f64, line: usize) -> Result<(), ProfileError> {
    if !(key_ms > 0.0) {
        return Err(ProfileError::Invalid {
            line,
            message: format!("movement time {key_ms} must be positive"),
        });
    }
    if motor_ms < key_ms {
        return Err(ProfileError::Invalid {
            line,
            message: format!("motor time {motor_ms} is shorter than movement time {key_ms}"),
        });
    }
    Ok(())
}
