//! Experiment configuration: a flat `key = value` file overlaid by flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use pinball_core::maps::{MapParams, NumericPolicy, SignVariant, SingularPolicy};
use pinball_core::renorm::{CaseFormulas, RenormContext};
use pinball_core::return_map::i_min;
use pinball_core::Alpha;
use serde::Serialize;

use crate::alpha_expr::parse_alpha;
use crate::error::{ExpError, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PINBALL_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    ReturnMap,
    Intervals,
    RenormCheck,
    Escape,
    Kesten,
    Figure1,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Simulate,
        Experiment::ReturnMap,
        Experiment::Intervals,
        Experiment::RenormCheck,
        Experiment::Escape,
        Experiment::Kesten,
        Experiment::Figure1,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::ReturnMap => "return-map",
            Experiment::Intervals => "intervals",
            Experiment::RenormCheck => "renorm-check",
            Experiment::Escape => "escape",
            Experiment::Kesten => "kesten",
            Experiment::Figure1 => "figure1",
        }
    }

    pub fn list() -> String {
        Self::ALL.iter().map(|e| e.name()).collect::<Vec<_>>().join(", ")
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            ExpError::usage(
                "experiment",
                format!("unknown experiment `{s}`; expected one of {}", Self::list()),
            )
        })
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which map `simulate` iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    Az,
    Pinball,
    ErdosKesten,
    Switching,
    SawtoothFu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyChoice {
    Fixed(NumericPolicy),
    /// Escalate through the precision ladder (escape only).
    Auto,
}

/// Every key accepted in a config file or as a flag.
pub const KEYS: [&str; 22] = [
    "experiment",
    "map",
    "alpha",
    "z",
    "L",
    "variant",
    "singular",
    "policy",
    "phi0",
    "I0",
    "I",
    "seeds",
    "grid",
    "steps",
    "returns",
    "decimation",
    "m",
    "N0",
    "perturb",
    "formulas",
    "out",
    "rng-seed",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub map: MapKind,
    pub alpha: Alpha,
    pub alpha_text: String,
    pub z: f64,
    pub circle_len: f64,
    pub variant: SignVariant,
    pub singular: SingularPolicy,
    pub policy: PolicyChoice,
    pub phi0: f64,
    pub i0: f64,
    pub i_list: Vec<u64>,
    pub seeds: u64,
    pub grid: u64,
    pub steps: u64,
    pub returns: u64,
    pub decimation: u64,
    pub m: u64,
    pub n0: u64,
    pub perturb: f64,
    pub formulas: CaseFormulas,
    pub rng_seed: u64,
    /// Not part of the report, so reports from different directories compare equal.
    #[serde(skip)]
    pub out_dir: PathBuf,
}

/// Reads a flat config file: one `key = value` per line, `#` comments.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| ExpError::io(path, e))?;
    parse_config_text(&text)
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            ExpError::usage(
                format!("line {}", lineno + 1),
                format!("expected key = value, got `{line}`"),
            )
        })?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(ExpError::usage(k, "unknown key"));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| ExpError::usage(key, format!("cannot parse `{v}`"))),
    }
}

fn get_list(map: &BTreeMap<String, String>, key: &str, default: &[u64]) -> Result<Vec<u64>> {
    match map.get(key) {
        None => Ok(default.to_vec()),
        Some(v) => v
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| ExpError::usage(key, format!("cannot parse `{s}` in `{v}`")))
            })
            .collect(),
    }
}

fn get_enum<T: Copy>(map: &BTreeMap<String, String>, key: &str, default: T, table: &[(&str, T)]) -> Result<T> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => table.iter().find(|(n, _)| n == v).map(|(_, t)| *t).ok_or_else(|| {
            let names: Vec<_> = table.iter().map(|(n, _)| *n).collect();
            ExpError::usage(key, format!("`{v}` is not one of {}", names.join(", ")))
        }),
    }
}

fn positive(key: &str, v: u64) -> Result<()> {
    if v == 0 {
        return Err(ExpError::usage(key, "must be at least 1"));
    }
    Ok(())
}

struct Defaults {
    map: MapKind,
    alpha: &'static str,
    policy: NumericPolicy,
    i_list: &'static [u64],
    seeds: u64,
    grid: u64,
    steps: u64,
    decimation: u64,
    phi0: f64,
}

fn defaults(e: Experiment) -> Defaults {
    let base = Defaults {
        map: MapKind::Pinball,
        alpha: "1/ln(2)",
        policy: NumericPolicy::CompensatedDouble,
        i_list: &[101],
        seeds: 1000,
        grid: 10_000,
        steps: 10_000,
        decimation: 1,
        phi0: 0.01,
    };
    match e {
        Experiment::Simulate => Defaults { alpha: "1", ..base },
        Experiment::ReturnMap | Experiment::Intervals => base,
        Experiment::RenormCheck => Defaults {
            i_list: &[100, 200, 400, 800, 1600],
            grid: 2000,
            ..base
        },
        Experiment::Escape => Defaults {
            policy: NumericPolicy::DoubleDouble,
            decimation: 10,
            ..base
        },
        Experiment::Kesten => Defaults {
            map: MapKind::ErdosKesten,
            alpha: "1/2",
            grid: 100,
            steps: 100_000,
            decimation: 100,
            phi0: 0.1,
            ..base
        },
        Experiment::Figure1 => Defaults {
            alpha: "1",
            steps: 1_000_000,
            decimation: 10,
            ..base
        },
    }
}

impl ExperimentConfig {
    /// Builds and validates a config from merged key/value pairs.
    ///
    /// `default_out` is used when no `out` key is present.
    pub fn from_map(map: &BTreeMap<String, String>, default_out: Option<PathBuf>) -> Result<Self> {
        for k in map.keys() {
            if !KEYS.contains(&k.as_str()) {
                return Err(ExpError::usage(k, "unknown key"));
            }
        }
        let experiment = match map.get("experiment") {
            Some(name) => Experiment::parse(name)?,
            None => {
                return Err(ExpError::usage(
                    "experiment",
                    format!("missing experiment; expected one of {}", Experiment::list()),
                ))
            }
        };
        let d = defaults(experiment);
        let map_kind = get_enum(
            map,
            "map",
            d.map,
            &[
                ("az", MapKind::Az),
                ("pinball", MapKind::Pinball),
                ("erdos-kesten", MapKind::ErdosKesten),
                ("switching", MapKind::Switching),
                ("sawtooth-fu", MapKind::SawtoothFu),
            ],
        )?;
        let m = get(map, "m", 1u64)?;
        let alpha_text = match (experiment, map.get("alpha")) {
            (_, Some(a)) => a.clone(),
            (Experiment::Escape, None) => format!("1/ln({})", 2 * m),
            (_, None) => d.alpha.to_string(),
        };
        let alpha = parse_alpha(&alpha_text).map_err(|e| ExpError::usage("alpha", format!("`{alpha_text}`: {e}")))?;
        let default_z = match map_kind {
            MapKind::Pinball => -1.0,
            MapKind::ErdosKesten => 0.0,
            MapKind::Switching => 0.5,
            MapKind::Az | MapKind::SawtoothFu => -1.0,
        };
        let default_l = if map_kind == MapKind::ErdosKesten { 1.0 } else { 2.0 };
        let default_variant = if map_kind == MapKind::Pinball {
            SignVariant::PinballProofs
        } else {
            SignVariant::AzHalf
        };
        let policy = match map.get("policy").map(String::as_str) {
            Some("auto") => PolicyChoice::Auto,
            _ => PolicyChoice::Fixed(get_enum(
                map,
                "policy",
                d.policy,
                &[
                    ("double", NumericPolicy::Double),
                    ("compensated", NumericPolicy::CompensatedDouble),
                    ("double-double", NumericPolicy::DoubleDouble),
                ],
            )?),
        };
        let out_dir = match map.get("out") {
            Some(p) => PathBuf::from(p),
            None => default_out.unwrap_or_else(|| PathBuf::from("pinball-out")),
        };
        let cfg = ExperimentConfig {
            experiment,
            map: map_kind,
            alpha,
            alpha_text,
            z: get(map, "z", default_z)?,
            circle_len: get(map, "L", default_l)?,
            variant: get_enum(
                map,
                "variant",
                default_variant,
                &[
                    ("az-half", SignVariant::AzHalf),
                    ("pinball-proofs", SignVariant::PinballProofs),
                ],
            )?,
            singular: get_enum(
                map,
                "singular",
                SingularPolicy::Halt,
                &[
                    ("halt", SingularPolicy::Halt),
                    ("plus", SingularPolicy::TreatAsPlus),
                    ("minus", SingularPolicy::TreatAsMinus),
                ],
            )?,
            policy,
            phi0: get(map, "phi0", d.phi0)?,
            i0: get(map, "I0", 50.0)?,
            i_list: get_list(map, "I", d.i_list)?,
            seeds: get(map, "seeds", d.seeds)?,
            grid: get(map, "grid", d.grid)?,
            steps: get(map, "steps", d.steps)?,
            returns: get(map, "returns", 10_000u64)?,
            decimation: get(map, "decimation", d.decimation)?,
            m,
            n0: get(map, "N0", 1000u64)?,
            perturb: get(map, "perturb", 0.0)?,
            formulas: get_enum(
                map,
                "formulas",
                CaseFormulas::Printed,
                &[("printed", CaseFormulas::Printed), ("restored", CaseFormulas::Restored)],
            )?,
            rng_seed: get(map, "rng-seed", 1u64)?,
            out_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the module preconditions of the selected experiment.
    pub fn validate(&self) -> Result<()> {
        positive("decimation", self.decimation)?;
        if self.policy == PolicyChoice::Auto && self.experiment != Experiment::Escape {
            return Err(ExpError::usage("policy", "`auto` is only available for escape"));
        }
        let pinball_fiber = |key: &str| -> Result<()> {
            if self.i_list.is_empty() {
                return Err(ExpError::usage(key, "empty list"));
            }
            let lo = i_min(self.alpha.value());
            for &i in &self.i_list {
                if (i as f64) < lo {
                    return Err(ExpError::usage(
                        key,
                        format!("I = {i} is below the smallest admissible action {lo}"),
                    ));
                }
            }
            Ok(())
        };
        match self.experiment {
            Experiment::Simulate | Experiment::Figure1 => {
                positive("steps", self.steps)?;
                self.map_params()
                    .validate()
                    .map_err(|e| ExpError::usage("map", e.to_string()))?;
                if !(self.phi0.is_finite() && self.i0.is_finite()) {
                    return Err(ExpError::usage("phi0", "initial state must be finite"));
                }
                if self.map == MapKind::Pinball && self.i0 <= 0.0 {
                    return Err(ExpError::usage("I0", "pinball action must be positive"));
                }
            }
            Experiment::ReturnMap => {
                positive("seeds", self.seeds)?;
                pinball_fiber("I")?;
            }
            Experiment::Intervals => {
                positive("grid", self.grid)?;
                pinball_fiber("I")?;
            }
            Experiment::RenormCheck => {
                positive("grid", self.grid)?;
                pinball_fiber("I")?;
                let ctx = RenormContext::new(self.alpha).map_err(|e| ExpError::usage("alpha", e.to_string()))?;
                ctx.require_low().map_err(|e| ExpError::usage("alpha", e.to_string()))?;
                if self.i_list.len() < 2 {
                    return Err(ExpError::usage("I", "a slope needs at least two actions"));
                }
            }
            Experiment::Escape => {
                if self.alpha != Alpha::escape(self.m) {
                    return Err(ExpError::usage(
                        "alpha",
                        format!("escape uses alpha = 1/ln(2m) = {}", Alpha::escape(self.m)),
                    ));
                }
                positive("m", self.m)?;
                positive("returns", self.returns)?;
                if self.n0 < 100 {
                    return Err(ExpError::usage("N0", "must be at least 100"));
                }
                if !self.perturb.is_finite() {
                    return Err(ExpError::usage("perturb", "must be finite"));
                }
            }
            Experiment::Kesten => {
                positive("steps", self.steps)?;
                if self.grid < 2 {
                    return Err(ExpError::usage("grid", "must be at least 2"));
                }
                if !(0.0..1.0).contains(&self.phi0) {
                    return Err(ExpError::usage("phi0", "starting point must lie in [0, 1)"));
                }
            }
        }
        Ok(())
    }

    /// Map parameters for `simulate` and `figure1`.
    pub fn map_params(&self) -> MapParams {
        let base = match self.map {
            MapKind::Az => MapParams::alpha_z(self.alpha, self.z, self.circle_len),
            MapKind::Pinball => MapParams::pinball(self.alpha),
            MapKind::ErdosKesten => MapParams::erdos_kesten(self.alpha),
            MapKind::Switching => MapParams::switching_potential(self.alpha),
            MapKind::SawtoothFu => MapParams::sawtooth_fermi_ulam(),
        };
        let mut p = base.with_sign_variant(self.variant).with_singular_policy(self.singular);
        if self.map != MapKind::SawtoothFu {
            p.z = self.z;
            p.circle_len = self.circle_len;
        }
        if let PolicyChoice::Fixed(policy) = self.policy {
            p = p.with_policy(policy);
        }
        p
    }

    /// Pinball parameters at the configured α and policy.
    pub fn pinball_params(&self) -> MapParams {
        let p = MapParams::pinball(self.alpha);
        match self.policy {
            PolicyChoice::Fixed(policy) => p.with_policy(policy),
            PolicyChoice::Auto => p,
        }
    }

    pub fn numeric_policy(&self) -> NumericPolicy {
        match self.policy {
            PolicyChoice::Fixed(p) => p,
            PolicyChoice::Auto => NumericPolicy::DoubleDouble,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(pairs: &[(&str, &str)]) -> Result<ExperimentConfig> {
        let map = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        ExperimentConfig::from_map(&map, None)
    }

    fn usage_key(r: Result<ExperimentConfig>) -> String {
        match r {
            Err(ExpError::Usage { key, .. }) => key,
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn escape_defaults() {
        let c = cfg(&[
            ("experiment", "escape"),
            ("m", "1"),
            ("N0", "1000"),
            ("returns", "10000"),
        ])
        .unwrap();
        assert_eq!(c.alpha, Alpha::inverse_log(2));
        assert_eq!(c.alpha.mu(), 2.0);
        assert_eq!(c.policy, PolicyChoice::Fixed(NumericPolicy::DoubleDouble));
        assert_eq!(c.returns, 10_000);
        let c = cfg(&[("experiment", "escape"), ("m", "2")]).unwrap();
        assert_eq!(c.alpha.mu_exact(), Some((4, 1)));
        assert_eq!(usage_key(cfg(&[("experiment", "escape"), ("alpha", "1")])), "alpha");
        assert_eq!(usage_key(cfg(&[("experiment", "escape"), ("N0", "50")])), "N0");
    }

    #[test]
    fn renorm_regime_is_enforced() {
        assert_eq!(
            usage_key(cfg(&[("experiment", "renorm-check"), ("alpha", "1/ln(3)")])),
            "alpha"
        );
        assert_eq!(
            usage_key(cfg(&[("experiment", "renorm-check"), ("alpha", "1/2")])),
            "alpha"
        );
        assert!(cfg(&[("experiment", "renorm-check"), ("alpha", "1")]).is_ok());
        assert!(cfg(&[("experiment", "renorm-check"), ("alpha", "1/ln(2.5)")]).is_ok());
    }

    #[test]
    fn bad_values_name_their_key() {
        assert_eq!(usage_key(cfg(&[])), "experiment");
        assert_eq!(usage_key(cfg(&[("experiment", "nope")])), "experiment");
        assert_eq!(usage_key(cfg(&[("experiment", "intervals"), ("grid", "x")])), "grid");
        assert_eq!(usage_key(cfg(&[("experiment", "intervals"), ("I", "101,abc")])), "I");
        assert_eq!(usage_key(cfg(&[("experiment", "intervals"), ("I", "2")])), "I");
        assert_eq!(
            usage_key(cfg(&[("experiment", "return-map"), ("policy", "quad")])),
            "policy"
        );
        assert_eq!(
            usage_key(cfg(&[("experiment", "return-map"), ("policy", "auto")])),
            "policy"
        );
        assert_eq!(
            usage_key(cfg(&[("experiment", "simulate"), ("decimation", "0")])),
            "decimation"
        );
        assert_eq!(usage_key(cfg(&[("experiment", "simulate"), ("bogus", "1")])), "bogus");
        assert_eq!(usage_key(cfg(&[("experiment", "kesten"), ("phi0", "1.5")])), "phi0");
    }

    #[test]
    fn file_syntax() {
        let m = parse_config_text("# comment\nexperiment = intervals\n\nI = 101, 501 # trailing\n").unwrap();
        assert_eq!(m["I"], "101, 501");
        let c = ExperimentConfig::from_map(&m, None).unwrap();
        assert_eq!(c.i_list, vec![101, 501]);
        assert!(matches!(parse_config_text("grid 10"), Err(ExpError::Usage { .. })));
        assert!(matches!(parse_config_text("colour = red"), Err(ExpError::Usage { key, .. }) if key == "colour"));
    }

    #[test]
    fn simulate_map_kinds() {
        let c = cfg(&[("experiment", "simulate"), ("map", "az"), ("z", "-2"), ("L", "1")]).unwrap();
        let p = c.map_params();
        assert_eq!((p.z, p.circle_len, p.sign_variant), (-2.0, 1.0, SignVariant::AzHalf));
        let c = cfg(&[("experiment", "simulate")]).unwrap();
        assert!(c.map_params().is_pinball());
    }
}
