//! Experiment configuration: an optional TOML file, `--set dotted.key=value`
//! overrides and a few dedicated flags, checked up front. Diagnostics name
//! the key and where its value came from (file line, flag, or default).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use toml_edit::{Document, DocumentMut, Item, Table, Value};

use msalab_core::field::{FieldKind, FieldSpec, LatticeBox, SiteLaw};
use msalab_core::geometry::GridBudget;
use msalab_core::hamiltonian::{InteractionProfile, InteractionSpec};

use crate::Failure;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub field: FieldConfig,
    pub scales: ScalesConfig,
    pub msa: MsaConfig,
    pub mc: McConfig,
    pub output: OutputConfig,
    pub spectrum: SpectrumConfig,
    pub ns_test: NsTestConfig,
    pub combes_thomas: CombesThomasConfig,
    pub mixing: MixingConfig,
    pub ldp: LdpConfig,
    pub decay_fit: DecayFitConfig,
    pub dynamics: DynamicsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Total particle count.
    #[serde(rename = "N")]
    pub big_n: usize,
    /// Particles in the cubes under study.
    pub n: usize,
    pub d: usize,
    pub interaction: InteractionConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            big_n: 2,
            n: 1,
            d: 1,
            interaction: InteractionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InteractionConfig {
    pub r0: f64,
    pub u0: f64,
    pub profile: InteractionProfile,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        InteractionConfig {
            r0: 1.0,
            u0: 0.0,
            profile: InteractionProfile::Step,
        }
    }
}

impl InteractionConfig {
    pub fn spec(&self) -> InteractionSpec {
        InteractionSpec {
            r0: self.r0,
            u0: self.u0,
            profile: self.profile,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKindName {
    IidUniform,
    MovingAverage,
    SquaredGaussianMa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub kind: FieldKindName,
    /// Max-norm radius of the averaging window (ignored for i.i.d. fields).
    pub window: u32,
    pub offset: f64,
    pub amplitude: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            kind: FieldKindName::MovingAverage,
            window: 1,
            offset: 0.0,
            amplitude: 1.0,
        }
    }
}

impl FieldConfig {
    pub fn spec(&self, region: LatticeBox, seed: u64) -> FieldSpec {
        let kind = match self.kind {
            FieldKindName::IidUniform => FieldKind::IidUniform,
            FieldKindName::MovingAverage => FieldKind::MovingAverage { window: self.window },
            FieldKindName::SquaredGaussianMa => FieldKind::SquaredGaussianMa { window: self.window },
        };
        FieldSpec {
            kind,
            law: SiteLaw {
                offset: self.offset,
                amplitude: self.amplitude,
            },
            seed,
            region,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalesConfig {
    #[serde(rename = "L0")]
    pub l0: f64,
    pub alpha: f64,
    pub count: usize,
    /// Grid step.
    pub h: f64,
    /// Cap on grid points per cube.
    pub max_points: usize,
}

impl Default for ScalesConfig {
    fn default() -> Self {
        ScalesConfig {
            l0: 8.0,
            alpha: 1.5,
            count: 3,
            h: 1.0,
            max_points: GridBudget::default().max_points,
        }
    }
}

impl ScalesConfig {
    pub fn budget(&self) -> GridBudget {
        GridBudget {
            max_points: self.max_points,
        }
    }

    /// Largest half-side whose cube stays within `max_points` grid points.
    pub fn max_scale(&self, axes: usize) -> f64 {
        let per_axis = (self.max_points as f64).powf(1.0 / axes as f64).floor();
        0.5 * self.h * (per_axis + 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MsaConfig {
    pub p: f64,
    pub gamma_ct: f64,
    /// Absolute energy grid step; when absent the step is `E*/grid_divisions`.
    pub energy_grid_step: Option<f64>,
    pub grid_divisions: u32,
    /// Constant in the `E0 ≤ b L^-2` event.
    pub b: f64,
}

impl Default for MsaConfig {
    fn default() -> Self {
        MsaConfig {
            p: 0.5,
            gamma_ct: 0.5,
            energy_grid_step: None,
            grid_divisions: 16,
            b: 1.0,
        }
    }
}

impl MsaConfig {
    pub fn grid_step(&self, e_star: f64) -> f64 {
        self.energy_grid_step
            .unwrap_or(e_star / self.grid_divisions as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub trials: usize,
    pub master_seed: u64,
    /// Worker threads. Results do not depend on it, so it is left out of the
    /// configuration echo.
    #[serde(skip_serializing)]
    pub workers: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            trials: 1000,
            master_seed: 1,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Left out of the configuration echo so that artifacts do not depend
    /// on where they are written.
    #[serde(skip_serializing)]
    pub directory: String,
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: "out".into(),
            formats: vec!["csv".into(), "json".into()],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub k: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig { k: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NsTestConfig {
    /// Absolute energies; when empty, `e0 + shift` is used.
    pub energies: Vec<f64>,
    pub shift: f64,
}

impl Default for NsTestConfig {
    fn default() -> Self {
        NsTestConfig {
            energies: Vec::new(),
            shift: -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombesThomasConfig {
    /// Gap below the ground energy, `E = e0 - eta`.
    pub eta: f64,
    /// Number of point pairs; 0 means all pairs.
    pub max_pairs: usize,
}

impl Default for CombesThomasConfig {
    fn default() -> Self {
        CombesThomasConfig { eta: 1.0, max_pairs: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixingConfig {
    pub distances: Vec<u32>,
    /// Sites along the sampled line.
    pub extent: i64,
    pub epsilons: Vec<f64>,
    pub chi_square_bins: usize,
}

impl Default for MixingConfig {
    fn default() -> Self {
        MixingConfig {
            distances: vec![1, 2, 3, 4, 5],
            extent: 12,
            epsilons: vec![0.1, 0.03, 0.01, 0.003],
            chi_square_bins: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdpConfig {
    pub scales: Vec<i64>,
}

impl Default for LdpConfig {
    fn default() -> Self {
        LdpConfig { scales: vec![4, 8, 16] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayFitConfig {
    pub k: usize,
}

impl Default for DecayFitConfig {
    fn default() -> Self {
        DecayFitConfig { k: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialRegion {
    Interior,
    Center,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    pub s: f64,
    /// Energy window `[lo, hi]`; defaults to `[e0, e0 + width]`.
    pub interval: Option<[f64; 2]>,
    pub width: f64,
    pub time_points: usize,
    pub region: InitialRegion,
    /// Also evaluate the moment for the field-free Hamiltonian.
    pub free_control: bool,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            s: 1.0,
            interval: None,
            width: 1.0,
            time_points: 64,
            region: InitialRegion::Interior,
            free_control: true,
        }
    }
}

/// Command-line values that bypass the file.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub workers: Option<usize>,
}

/// A resolved configuration and the provenance of each explicitly set key.
#[derive(Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    file: Option<Document<String>>,
    flags: BTreeMap<String, String>,
}

impl LoadedConfig {
    /// Where the value at `path` came from: a file line, a flag, or the
    /// built-in default.
    pub fn origin(&self, path: &str) -> String {
        if let Some(flag) = self.flags.get(path) {
            return flag.clone();
        }
        if let Some(doc) = &self.file {
            if let Some(line) = line_of(doc, path) {
                return format!("line {line}");
            }
        }
        "default".into()
    }

    fn fail(&self, path: &str, message: impl std::fmt::Display) -> String {
        format!("{path} ({}): {message}", self.origin(path))
    }
}

/// Loads the file (if any), applies overrides and validates the result.
pub fn load(path: Option<&str>, flags: &FlagOverrides) -> Result<LoadedConfig, Failure> {
    let text = match path {
        Some(p) => Some(
            std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("cannot read config file {p}: {e}")))?,
        ),
        None => None,
    };
    let file = match &text {
        Some(t) => {
            let doc: Document<String> = t
                .parse()
                .map_err(|e: toml_edit::TomlError| Failure::Config(format!("config file: {e}")))?;
            // Type errors in the file itself, reported with line and column.
            toml_edit::de::from_document::<ExperimentConfig>(doc.clone())
                .map_err(|e| Failure::Config(format!("config file: {e}")))?;
            Some(doc)
        }
        None => None,
    };

    let mut merged: DocumentMut = match &file {
        Some(doc) => doc.clone().into_mut(),
        None => DocumentMut::new(),
    };
    let mut origins = BTreeMap::new();
    for set in &flags.sets {
        let (key, raw) = set
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("--set {set}: expected dotted.key=value")))?;
        let key = key.trim();
        apply_override(&mut merged, key, raw.trim())
            .map_err(|m| Failure::Config(format!("--set {key}: {m}")))?;
        origins.insert(key.to_string(), format!("--set {key}"));
    }
    let mut config: ExperimentConfig = toml_edit::de::from_document(merged)
        .map_err(|e| Failure::Config(format!("--set override: {}", e.message())))?;

    if let Some(seed) = flags.seed {
        config.mc.master_seed = seed;
        origins.insert("mc.master_seed".into(), "--seed".into());
    }
    if let Some(out) = &flags.out {
        config.output.directory = out.clone();
        origins.insert("output.directory".into(), "--out".into());
    }
    if let Some(w) = flags.workers {
        config.mc.workers = w;
        origins.insert("mc.workers".into(), "--workers".into());
    }
    let loaded = LoadedConfig {
        config,
        file,
        flags: origins,
    };
    validate(&loaded)?;
    Ok(loaded)
}

fn apply_override(doc: &mut DocumentMut, key: &str, raw: &str) -> Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err("empty key segment".into());
    }
    let value: Value = raw.parse().unwrap_or_else(|_| Value::from(raw));
    let mut table: &mut dyn toml_edit::TableLike = doc.as_table_mut();
    for seg in &parts[..parts.len() - 1] {
        let item = table.entry(seg).or_insert(Item::Table(Table::new()));
        table = item
            .as_table_like_mut()
            .ok_or_else(|| format!("`{seg}` is not a table"))?;
    }
    table.insert(parts[parts.len() - 1], Item::Value(value));
    Ok(())
}

/// 1-based line of the key at `path` in the parsed file.
fn line_of(doc: &Document<String>, path: &str) -> Option<usize> {
    let mut item = doc.as_item();
    let mut key_span = None;
    for seg in path.split('.') {
        let (key, next) = item.as_table_like()?.get_key_value(seg)?;
        key_span = key.span().or_else(|| next.span());
        item = next;
    }
    let offset = key_span?.start;
    Some(doc.raw()[..offset].matches('\n').count() + 1)
}

fn validate(loaded: &LoadedConfig) -> Result<(), Failure> {
    let c = &loaded.config;
    let mut errors = Vec::new();
    let mut check = |ok: bool, path: &str, msg: String| {
        if !ok {
            errors.push(loaded.fail(path, msg));
        }
    };
    let m = &c.model;
    check(m.big_n >= 1, "model.N", format!("total particle count must be at least 1, got {}", m.big_n));
    check(
        m.n >= 1 && m.n <= m.big_n,
        "model.n",
        format!("particle count must satisfy 1 <= n <= N = {}, got {}", m.big_n, m.n),
    );
    check(m.d >= 1, "model.d", format!("dimension must be at least 1, got {}", m.d));
    check(
        m.interaction.u0 >= 0.0 && m.interaction.u0.is_finite(),
        "model.interaction.u0",
        format!("interaction amplitude must be finite and >= 0, got {}", m.interaction.u0),
    );
    check(
        m.interaction.r0 >= 0.0 && m.interaction.r0.is_finite(),
        "model.interaction.r0",
        format!("interaction range must be finite and >= 0, got {}", m.interaction.r0),
    );

    let f = &c.field;
    check(
        f.offset >= 0.0 && f.offset.is_finite(),
        "field.offset",
        format!("site law offset must be finite and >= 0, got {}", f.offset),
    );
    check(
        f.amplitude >= 0.0 && f.amplitude.is_finite(),
        "field.amplitude",
        format!("site law amplitude must be finite and >= 0, got {}", f.amplitude),
    );

    let s = &c.scales;
    check(s.h > 0.0 && s.h.is_finite(), "scales.h", format!("grid step must be positive, got {}", s.h));
    check(
        s.l0 >= 8.0 && s.l0.is_finite() && s.l0.fract() == 0.0,
        "scales.L0",
        format!("initial scale must be an integer of at least 8, got {}", s.l0),
    );
    if s.h > 0.0 {
        let ratio = s.l0 / s.h;
        check(
            (ratio - ratio.round()).abs() <= 1e-9 * ratio.abs().max(1.0),
            "scales.L0",
            format!("L0 / h must be an integer, got {} / {}", s.l0, s.h),
        );
    }
    check(s.alpha > 1.0, "scales.alpha", format!("scale-growth exponent must exceed 1, got {}", s.alpha));
    check(s.count >= 1, "scales.count", "at least one scale is required".into());
    check(s.max_points >= 1, "scales.max_points", "grid budget must be positive".into());

    let a = &c.msa;
    check(a.p > 0.0 && a.p.is_finite(), "msa.p", format!("exponent p must be positive, got {}", a.p));
    check(
        a.gamma_ct > 0.0 && a.gamma_ct < 1.0,
        "msa.gamma_ct",
        format!("Combes-Thomas parameter gamma_ct must lie in (0, 1), got {}", a.gamma_ct),
    );
    if let Some(step) = a.energy_grid_step {
        check(
            step > 0.0 && step.is_finite(),
            "msa.energy_grid_step",
            format!("energy grid step must be positive, got {step}"),
        );
    }
    check(a.grid_divisions >= 1, "msa.grid_divisions", "at least one division is required".into());
    check(a.b > 0.0 && a.b.is_finite(), "msa.b", format!("edge constant b must be positive, got {}", a.b));

    check(c.mc.trials >= 100, "mc.trials", format!("Monte Carlo needs at least 100 trials, got {}", c.mc.trials));
    check(c.mc.workers >= 1, "mc.workers", format!("worker count must be at least 1, got {}", c.mc.workers));

    for fmt in &c.output.formats {
        check(
            fmt == "csv" || fmt == "json",
            "output.formats",
            format!("unknown format `{fmt}`; expected csv or json"),
        );
    }
    check(!c.output.directory.is_empty(), "output.directory", "output directory must not be empty".into());

    check(c.spectrum.k >= 1, "spectrum.k", "at least one eigenvalue is required".into());
    check(
        c.combes_thomas.eta > 0.0,
        "combes_thomas.eta",
        format!("gap eta must be positive, got {}", c.combes_thomas.eta),
    );
    check(!c.mixing.distances.is_empty(), "mixing.distances", "at least one distance is required".into());
    check(c.mixing.extent >= 2, "mixing.extent", format!("extent must be at least 2, got {}", c.mixing.extent));
    check(c.mixing.chi_square_bins >= 2, "mixing.chi_square_bins", "at least two bins are required".into());
    check(
        !c.ldp.scales.is_empty() && c.ldp.scales.iter().all(|l| *l >= 1),
        "ldp.scales",
        "scales must be a non-empty list of positive integers".into(),
    );
    check(c.decay_fit.k >= 1, "decay_fit.k", "at least one eigenvector is required".into());
    let dy = &c.dynamics;
    check(dy.s > 0.0 && dy.s.is_finite(), "dynamics.s", format!("moment exponent must be positive, got {}", dy.s));
    check(dy.time_points >= 2, "dynamics.time_points", "at least two time points are required".into());
    check(dy.width > 0.0 && dy.width.is_finite(), "dynamics.width", format!("window width must be positive, got {}", dy.width));
    if let Some([lo, hi]) = dy.interval {
        check(lo <= hi, "dynamics.interval", format!("interval [{lo}, {hi}] is reversed"));
    }

    if errors.is_empty() {
        Ok(())
    } else {
        Err(Failure::Config(errors.join("\n")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_text(text: &str, flags: &FlagOverrides) -> Result<LoadedConfig, Failure> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, text).unwrap();
        load(Some(path.to_str().unwrap()), flags)
    }

    #[test]
    fn defaults_are_valid() {
        let c = load(None, &FlagOverrides::default()).unwrap();
        assert_eq!(c.config, ExperimentConfig::default());
        assert_eq!(c.origin("msa.p"), "default");
    }

    #[test]
    fn bad_value_names_key_and_line() {
        let text = "[model]\nN = 2\n\n[msa]\np = 0.5\ngamma_ct = 1.5\n";
        let err = load_text(text, &FlagOverrides::default()).unwrap_err();
        let Failure::Config(msg) = err else { panic!() };
        assert!(msg.contains("msa.gamma_ct (line 6)"), "{msg}");
    }

    #[test]
    fn override_wins_and_is_attributed() {
        let text = "[msa]\ngamma_ct = 0.4\n";
        let flags = FlagOverrides {
            sets: vec!["msa.gamma_ct=2.0".into()],
            ..Default::default()
        };
        let Failure::Config(msg) = load_text(text, &flags).unwrap_err() else { panic!() };
        assert!(msg.contains("msa.gamma_ct (--set msa.gamma_ct)"), "{msg}");

        let flags = FlagOverrides {
            sets: vec!["msa.gamma_ct=0.25".into(), "model.interaction.profile=hat".into()],
            seed: Some(9),
            ..Default::default()
        };
        let c = load_text(text, &flags).unwrap();
        assert_eq!(c.config.msa.gamma_ct, 0.25);
        assert_eq!(c.config.model.interaction.profile, InteractionProfile::Hat);
        assert_eq!(c.config.mc.master_seed, 9);
        assert_eq!(c.origin("mc.master_seed"), "--seed");
    }

    #[test]
    fn type_and_syntax_errors_carry_positions() {
        let Failure::Config(msg) = load_text("[mc]\ntrials = \"many\"\n", &FlagOverrides::default()).unwrap_err() else {
            panic!()
        };
        assert!(msg.contains("line 2"), "{msg}");
        let Failure::Config(msg) = load_text("[mc]\ntrials = = 3\n", &FlagOverrides::default()).unwrap_err() else {
            panic!()
        };
        assert!(msg.contains("line 2"), "{msg}");
        let Failure::Config(msg) = load_text("[mc]\ntrails = 300\n", &FlagOverrides::default()).unwrap_err() else {
            panic!()
        };
        assert!(msg.contains("trails"), "{msg}");
    }

    #[test]
    fn inconsistent_grid_is_rejected() {
        let flags = FlagOverrides {
            sets: vec!["scales.h=0.3".into()],
            ..Default::default()
        };
        let Failure::Config(msg) = load(None, &flags).unwrap_err() else { panic!() };
        assert!(msg.contains("L0 / h"), "{msg}");
    }

    #[test]
    fn workers_are_not_echoed() {
        let mut c = ExperimentConfig::default();
        c.mc.workers = 7;
        let json = serde_json::to_string(&c).unwrap();
        assert!(!json.contains("workers"));
        assert!(!json.contains("directory"));
    }
}
