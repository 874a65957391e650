use std::path::PathBuf;

use clap::ValueEnum;
use msaccel::accel::{Damping, DEFAULT_ALPHA, DEFAULT_LAMBDA0, DEFAULT_RHO};
use msaccel::oracles::{LazyPolicy, DEFAULT_SIGMA};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum MethodTag {
    /// Bisection-free accelerated scheme with momentum damping.
    #[value(name = "OPTMS")]
    #[serde(rename = "OPTMS")]
    OptMs,
    /// Classical accelerated scheme with a bracketing search over λ′.
    #[value(name = "MSBISECT")]
    #[serde(rename = "MSBISECT")]
    MsBisect,
    #[value(name = "CR")]
    #[serde(rename = "CR")]
    Cr,
    #[value(name = "ACR")]
    #[serde(rename = "ACR")]
    Acr,
    #[value(name = "NEWTON")]
    #[serde(rename = "NEWTON")]
    Newton,
    #[value(name = "GD")]
    #[serde(rename = "GD")]
    Gd,
    #[value(name = "AGD")]
    #[serde(rename = "AGD")]
    Agd,
    #[value(name = "SONG")]
    #[serde(rename = "SONG")]
    Song,
    #[value(name = "ITERATE_AMSN")]
    #[serde(rename = "ITERATE_AMSN")]
    IterateAmsn,
    #[value(name = "ITERATE_AMSN_FO")]
    #[serde(rename = "ITERATE_AMSN_FO")]
    IterateAmsnFo,
}

impl MethodTag {
    pub fn uses_oracle(self) -> bool {
        matches!(self, MethodTag::OptMs | MethodTag::MsBisect)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum OracleTag {
    #[value(name = "GD")]
    #[serde(rename = "GD")]
    Gd,
    #[value(name = "CR")]
    #[serde(rename = "CR")]
    Cr,
    #[value(name = "AMSN")]
    #[serde(rename = "AMSN")]
    Amsn,
    #[value(name = "AMSN_FO")]
    #[serde(rename = "AMSN_FO")]
    AmsnFo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DampingFlag {
    On,
    Off,
    Argmin,
}

impl From<DampingFlag> for Damping {
    fn from(d: DampingFlag) -> Self {
        match d {
            DampingFlag::On => Damping::ConvexCombination,
            DampingFlag::Off => Damping::Off,
            DampingFlag::Argmin => Damping::Argmin,
        }
    }
}

/// `on` is lazy on every call but the first (OPTMS) or on every call
/// (MSBISECT); `always` includes the first call; `off` never.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LazyFlag {
    On,
    Off,
    Always,
}

/// Everything that defines one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: MethodTag,
    pub oracle: OracleTag,
    pub data: String,
    pub alpha: f64,
    pub sigma: f64,
    pub lambda0: f64,
    pub eta: Option<f64>,
    pub m: Option<f64>,
    pub h: Option<f64>,
    pub rho: f64,
    pub damping: DampingFlag,
    /// `None` picks the method's default.
    pub lazy: Option<LazyFlag>,
    pub budget_calls: usize,
    pub target_gap: Option<f64>,
    pub max_seconds: Option<f64>,
    pub seed: u64,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub audit: bool,
    #[serde(skip)]
    pub cache_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults for everything but the method and the data.
    pub fn new(method: MethodTag, data: impl Into<String>) -> Self {
        Self {
            method,
            oracle: OracleTag::Amsn,
            data: data.into(),
            alpha: DEFAULT_ALPHA,
            sigma: DEFAULT_SIGMA,
            lambda0: DEFAULT_LAMBDA0,
            eta: None,
            m: None,
            h: None,
            rho: DEFAULT_RHO,
            damping: DampingFlag::On,
            lazy: None,
            budget_calls: 100,
            target_gap: None,
            max_seconds: None,
            seed: 0,
            out: None,
            audit: false,
            cache_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(self.alpha > 1.0 && self.alpha.is_finite()) {
            return bad(format!("--alpha must exceed 1, got {}", self.alpha));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return bad(format!("--sigma must lie in (0, 1), got {}", self.sigma));
        }
        if !positive(self.lambda0) {
            return bad(format!("--lambda0 must be positive, got {}", self.lambda0));
        }
        if !(self.rho > 1.0 && self.rho.is_finite()) {
            return bad(format!("--rho must exceed 1, got {}", self.rho));
        }
        if self.budget_calls == 0 {
            return bad("--budget-calls must be at least 1".into());
        }
        for (name, v) in [
            ("--eta", self.eta),
            ("--M", self.m),
            ("--H", self.h),
            ("--max-seconds", self.max_seconds),
        ] {
            if let Some(v) = v {
                if !positive(v) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if let Some(g) = self.target_gap {
            if !(g >= 0.0) {
                return bad(format!("--target-gap must be non-negative, got {g}"));
            }
        }
        if self.method.uses_oracle() {
            if self.oracle == OracleTag::Gd && self.eta.is_none() {
                return bad("the GD oracle needs --eta".into());
            }
            if self.oracle == OracleTag::AmsnFo && self.lazy == Some(LazyFlag::Off) {
                return bad("the AMSN_FO oracle is only available in lazy mode".into());
            }
        }
        Ok(())
    }

    pub fn lazy_policy(&self) -> LazyPolicy {
        match (self.lazy, self.method) {
            (Some(LazyFlag::Off), _) | (None, MethodTag::MsBisect) => LazyPolicy::Never,
            (Some(LazyFlag::Always), _) | (Some(LazyFlag::On), MethodTag::MsBisect) => {
                LazyPolicy::Always
            }
            _ => LazyPolicy::AfterFirst,
        }
    }
}
