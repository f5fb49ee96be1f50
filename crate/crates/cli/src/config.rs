//! Experiment configuration: flat `[section]` blocks of `key = value`
//! lines.
//!
//! ```text
//! # comment
//! [experiment]
//! name = two-ions
//! seed = 7
//!
//! [species]
//! ions = Ca40 * 2
//!
//! [trap]
//! type = linear
//! rf_frequency = 30 MHz
//! radial_frequency = 2 MHz
//! axial_frequency = 500 kHz
//!
//! [protocol]
//! verb = modes
//! ```
//!
//! Every key is checked: unknown keys, duplicates, missing units and
//! values outside their domain are errors with the line number. Parsing
//! also builds the trap, so unstable RF settings fail here.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use icc_core::dynamics::{BeamGeometry, CoolingModel, QuenchControl, RampShape};
use icc_core::equilibrium::{MinimizerOptions, DEFAULT_FORCE_TOLERANCE};
use icc_core::imaging::{Gate, ViewAxis};
use icc_core::{species_from_catalog, IonSpecies, LinearRfTrap, PenningFrame, PenningTrap, RfMode, TrapConfig};

use crate::error::ConfigError;
use crate::units::{quantity, Dimension, Quantity};

const SECTIONS: &[&str] = &["experiment", "species", "trap", "cooling", "relax", "protocol", "output"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Relax,
    Modes,
    Evolve,
    Quench,
    Scan,
    Image,
}

impl Verb {
    pub const ALL: [Verb; 6] = [Verb::Relax, Verb::Modes, Verb::Evolve, Verb::Quench, Verb::Scan, Verb::Image];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Relax => "relax",
            Self::Modes => "modes",
            Self::Evolve => "evolve",
            Self::Quench => "quench",
            Self::Scan => "scan",
            Self::Image => "image",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == text)
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesDef {
    pub name: String,
    /// Mass in u.
    pub mass: Quantity,
    pub charge: u32,
    pub dark: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesSection {
    pub custom: Vec<SpeciesDef>,
    /// (species name, ion count) in table order.
    pub ions: Vec<(String, usize)>,
    /// Catalog species to treat as non-fluorescent and uncooled.
    pub dark: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RfDrive {
    Amplitude(Quantity),
    RadialFrequency(Quantity),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSection {
    pub r0: Quantity,
    pub rf_frequency: Quantity,
    pub drive: RfDrive,
    pub axial_frequency: Quantity,
    pub asymmetry: f64,
    pub full_drive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PenningElectrode {
    Voltage(Quantity),
    AxialFrequency(Quantity),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenningSection {
    pub magnetic_field: Quantity,
    pub z0: Quantity,
    pub r0: Quantity,
    pub electrode: PenningElectrode,
    pub rotation_frequency: Quantity,
    pub wall_strength: Quantity,
    pub lab_frame: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrapSection {
    Linear(LinearSection),
    Penning(PenningSection),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoolingSection {
    /// `None` switches cooling off.
    pub friction_rate: Option<Quantity>,
    pub temperature: Quantity,
    /// `None` for the axial beam, otherwise the radial beam offset.
    pub radial_beam_offset: Option<Quantity>,
    pub extra_heating: Quantity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialShape {
    String,
    Ball,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxSection {
    pub anneal: bool,
    pub restarts: usize,
    pub initial: InitialShape,
    /// String spacing or ball radius; defaults to the two-ion spacing scale.
    pub initial_size: Option<Quantity>,
    pub force_tolerance: Quantity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveParams {
    pub duration: Quantity,
    /// `None` uses the largest admissible step.
    pub dt: Option<Quantity>,
    pub every: usize,
    pub initial_temperature: Quantity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuenchParams {
    pub control: QuenchControl,
    pub start: Quantity,
    pub end: Quantity,
    pub shape: RampShape,
    pub durations: Vec<Quantity>,
    pub seeds: usize,
    pub hold: f64,
    pub averaging_fraction: f64,
    pub dt: Option<Quantity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanParameter {
    /// ω_⊥²/ω_z² of the weaker radial axis (linear trap).
    Anisotropy,
    AxialFrequency,
    /// Weaker radial secular frequency (linear trap).
    RadialFrequency,
    RotationFrequency,
    /// ω_z/√(2 ω_r (ω_c − ω_r)) (Penning trap); 1 is where radial
    /// confinement vanishes.
    NormalizedAxialFrequency,
}

impl ScanParameter {
    const ALL: [ScanParameter; 5] = [
        Self::Anisotropy,
        Self::AxialFrequency,
        Self::RadialFrequency,
        Self::RotationFrequency,
        Self::NormalizedAxialFrequency,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Anisotropy => "anisotropy",
            Self::AxialFrequency => "axial_frequency",
            Self::RadialFrequency => "radial_frequency",
            Self::RotationFrequency => "rotation_frequency",
            Self::NormalizedAxialFrequency => "normalized_axial_frequency",
        }
    }

    pub fn dimension(self) -> Dimension {
        match self {
            Self::Anisotropy | Self::NormalizedAxialFrequency => Dimension::Dimensionless,
            _ => Dimension::Frequency,
        }
    }

    fn linear_only(self) -> bool {
        matches!(self, Self::Anisotropy | Self::RadialFrequency)
    }

    fn penning_only(self) -> bool {
        matches!(self, Self::RotationFrequency | Self::NormalizedAxialFrequency)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Values(Vec<Quantity>),
    Range { from: Quantity, to: Quantity, points: usize, geometric: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanParams {
    pub parameter: ScanParameter,
    pub grid: Grid,
    /// Bisection steps used to locate each label change; 0 disables.
    pub refine_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageParams {
    pub view: ViewAxis,
    pub width: usize,
    pub height: usize,
    pub pixel_pitch: Quantity,
    pub psf_sigma: Quantity,
    /// Gate window in radians of rotation phase; `None` is ungated.
    pub gate_window: Option<f64>,
    pub samples: usize,
    pub spot_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Protocol {
    Relax,
    Modes,
    Evolve(EvolveParams),
    Quench(QuenchParams),
    Scan(ScanParams),
    Image(ImageParams),
}

impl Protocol {
    pub fn verb(&self) -> Verb {
        match self {
            Self::Relax => Verb::Relax,
            Self::Modes => Verb::Modes,
            Self::Evolve(_) => Verb::Evolve,
            Self::Quench(_) => Verb::Quench,
            Self::Scan(_) => Verb::Scan,
            Self::Image(_) => Verb::Image,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub directory: String,
    pub binary_pgm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub species: SpeciesSection,
    pub trap: TrapSection,
    pub cooling: CoolingSection,
    pub relax: RelaxSection,
    pub protocol: Protocol,
    pub output: OutputSection,
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Sections of raw `key = value` strings, before typing.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        let mut current: Option<String> = None;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(lineno, "", "unterminated section header"))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(ConfigError::at(
                        lineno,
                        "",
                        format!("unknown section [{name}]; expected one of {}", SECTIONS.join(", ")),
                    ));
                }
                if raw.sections.contains_key(name) {
                    return Err(ConfigError::at(lineno, "", format!("section [{name}] appears twice")));
                }
                raw.sections.insert(name.to_string(), (lineno, BTreeMap::new()));
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::at(lineno, "", format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let section = current
                .as_ref()
                .ok_or_else(|| ConfigError::at(lineno, key, "key outside any [section]"))?;
            let entries = &mut raw.sections.get_mut(section).expect("inserted").1;
            if entries.contains_key(key) {
                return Err(ConfigError::at(lineno, key, format!("duplicate key in [{section}]")));
            }
            entries.insert(key.to_string(), Entry { value: value.trim().to_string(), line: lineno });
        }
        Ok(raw)
    }

    /// Applies `section.key=value`, replacing any existing value.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (path, value) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::at(0, assignment, "override must look like section.key=value"))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| ConfigError::at(0, path, "override key must look like section.key"))?;
        if !SECTIONS.contains(&section) {
            return Err(ConfigError::at(0, path, format!("unknown section [{section}]")));
        }
        self.sections
            .entry(section.to_string())
            .or_insert_with(|| (0, BTreeMap::new()))
            .1
            .insert(key.trim().to_string(), Entry { value: value.trim().to_string(), line: 0 });
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|(_, e)| e.get(key)).map(|e| e.value.as_str())
    }

    fn section(&self, name: &'static str) -> Section<'_> {
        let (line, entries) = self.sections.get(name).map(|(l, e)| (*l, Some(e))).unwrap_or((0, None));
        Section { name, line, entries, used: Vec::new() }
    }
}

/// Consumes the keys of one section and flags what was never read.
struct Section<'a> {
    name: &'static str,
    line: usize,
    entries: Option<&'a BTreeMap<String, Entry>>,
    used: Vec<&'static str>,
}

impl<'a> Section<'a> {
    fn entry(&mut self, key: &'static str) -> Option<&'a Entry> {
        self.used.push(key);
        self.entries.and_then(|e| e.get(key))
    }

    fn missing(&self, key: &str) -> ConfigError {
        ConfigError::at(self.line, &format!("{}.{key}", self.name), "required key is missing")
    }

    fn text(&mut self, key: &'static str) -> Option<(String, usize)> {
        self.entry(key).map(|e| (e.value.clone(), e.line))
    }

    fn required_text(&mut self, key: &'static str) -> Result<(String, usize), ConfigError> {
        self.text(key).ok_or_else(|| self.missing(key))
    }

    fn quantity(&mut self, key: &'static str, dim: Dimension) -> Result<Option<Quantity>, ConfigError> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => quantity(&e.value, dim, key, e.line).map(Some),
        }
    }

    fn required_quantity(&mut self, key: &'static str, dim: Dimension) -> Result<Quantity, ConfigError> {
        self.quantity(key, dim)?.ok_or_else(|| self.missing(key))
    }

    /// A quantity that must be positive.
    fn positive(&mut self, key: &'static str, dim: Dimension) -> Result<Option<Quantity>, ConfigError> {
        let line = self.entry(key).map_or(0, |e| e.line);
        let q = self.quantity(key, dim)?;
        if let Some(q) = q {
            if !(q.value > 0.0) {
                return Err(ConfigError::at(line, key, format!("must be positive, got {q}")));
            }
        }
        Ok(q)
    }

    fn number(&mut self, key: &'static str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.quantity(key, Dimension::Dimensionless)?.map_or(default, |q| q.value))
    }

    fn count(&mut self, key: &'static str, default: usize, min: usize) -> Result<usize, ConfigError> {
        let Some(e) = self.entry(key) else { return Ok(default) };
        let n: usize = e
            .value
            .parse()
            .map_err(|_| ConfigError::at(e.line, key, format!("expected a non-negative integer, got `{}`", e.value)))?;
        if n < min {
            return Err(ConfigError::at(e.line, key, format!("must be at least {min}, got {n}")));
        }
        Ok(n)
    }

    fn flag(&mut self, key: &'static str, default: bool) -> Result<bool, ConfigError> {
        self.choice(key, &[("true", true), ("false", false)], default)
    }

    fn choice<T: Copy>(&mut self, key: &'static str, options: &[(&str, T)], default: T) -> Result<T, ConfigError> {
        let Some(e) = self.entry(key) else { return Ok(default) };
        options.iter().find(|(name, _)| *name == e.value).map(|(_, v)| *v).ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            ConfigError::at(e.line, key, format!("`{}` is not one of {}", e.value, names.join(", ")))
        })
    }

    /// Errors on any key that was never asked for.
    fn finish(self) -> Result<(), ConfigError> {
        if let Some(entries) = self.entries {
            if let Some((key, e)) = entries.iter().find(|(k, _)| !self.used.contains(&k.as_str())) {
                return Err(ConfigError::at(e.line, key, format!("unknown key in [{}]", self.name)));
            }
        }
        Ok(())
    }
}

fn split_list(text: &str, sep: char) -> Vec<&str> {
    text.split(sep).map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// Parses config text into a validated experiment description.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    ExperimentConfig::from_raw(&RawConfig::parse(text)?)
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let mut s = raw.section("experiment");
        let name = s.text("name").map_or_else(|| "run".to_string(), |(v, _)| v);
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(ConfigError::at(0, "experiment.name", "must be a non-empty name without path separators"));
        }
        let (seed_text, seed_line) = s.text("seed").ok_or_else(|| {
            ConfigError::at(0, "experiment.seed", "a seed is required: every protocol draws random numbers")
        })?;
        let seed: u64 = seed_text
            .parse()
            .map_err(|_| ConfigError::at(seed_line, "seed", format!("expected an unsigned 64-bit integer, got `{seed_text}`")))?;
        s.finish()?;

        let species = parse_species(raw)?;
        let trap = parse_trap(raw)?;
        let cooling = parse_cooling(raw)?;
        let relax = parse_relax(raw)?;
        let protocol = parse_protocol(raw, &trap)?;

        let mut s = raw.section("output");
        let directory = s.text("directory").map_or_else(|| format!("runs/{name}"), |(v, _)| v);
        let binary_pgm = s.choice("pgm", &[("binary", true), ("ascii", false)], true)?;
        s.finish()?;

        let config = Self { name, seed, species, trap, cooling, relax, protocol, output: OutputSection { directory, binary_pgm } };
        config.check_physics(raw)?;
        Ok(config)
    }

    /// Builds every core object once so bad physics fails at parse time.
    fn check_physics(&self, raw: &RawConfig) -> Result<(), ConfigError> {
        let table = self.species_table().map_err(|e| ConfigError::at(0, "species", e.to_string()))?;
        let trap_err = |e: icc_core::Error| {
            let key = match &self.trap {
                TrapSection::Linear(l) => match l.drive {
                    RfDrive::Amplitude(_) => "rf_amplitude",
                    RfDrive::RadialFrequency(_) => "radial_frequency",
                },
                TrapSection::Penning(_) => "trap",
            };
            let line = raw.sections.get("trap").and_then(|(_, e)| e.get(key)).map_or(0, |e| e.line);
            ConfigError::at(line, key, e.to_string())
        };
        let trap = self.trap_config(&table).map_err(trap_err)?;
        for sp in &table {
            trap.stiffness(sp).map_err(trap_err)?;
            if let TrapConfig::LinearRf { trap: t, .. } = &trap {
                t.validate(sp).map_err(trap_err)?;
            }
        }
        self.cooling_model().validate().map_err(|e| ConfigError::at(0, "cooling", e.to_string()))?;
        if let Protocol::Quench(q) = &self.protocol {
            let reference = &table[0];
            if let TrapConfig::LinearRf { trap: base, .. } = &trap {
                let schedule = icc_core::dynamics::QuenchSchedule {
                    control: q.control,
                    start_value: q.start.si(),
                    end_value: q.end.si(),
                    duration: 1.0,
                    shape: q.shape,
                };
                schedule.anisotropy_range(base, reference).map_err(|e| ConfigError::at(0, "protocol.start", e.to_string()))?;
            }
            if self.cooling.friction_rate.is_none() {
                return Err(ConfigError::at(0, "cooling.friction_rate", "a quench needs cooling"));
            }
        }
        Ok(())
    }

    /// Species in table order; ion `i` of the state uses `species_index()[i]`.
    pub fn species_table(&self) -> icc_core::Result<Vec<IonSpecies>> {
        self.species
            .ions
            .iter()
            .map(|(name, _)| {
                let sp = match self.species.custom.iter().find(|d| &d.name == name) {
                    Some(d) => {
                        let sp = IonSpecies::new(d.name.clone(), d.mass.value, d.charge)?;
                        if d.dark {
                            sp.dark()
                        } else {
                            sp
                        }
                    }
                    None => species_from_catalog(name)?,
                };
                Ok(if self.species.dark.contains(name) { sp.dark() } else { sp })
            })
            .collect()
    }

    pub fn species_index(&self) -> Vec<usize> {
        self.species.ions.iter().enumerate().flat_map(|(k, (_, n))| std::iter::repeat_n(k, *n)).collect()
    }

    pub fn ion_count(&self) -> usize {
        self.species.ions.iter().map(|(_, n)| n).sum()
    }

    /// The trap in SI units, with the first species as reference.
    pub fn trap_config(&self, table: &[IonSpecies]) -> icc_core::Result<TrapConfig> {
        let reference = &table[0];
        match &self.trap {
            TrapSection::Linear(l) => {
                let mut trap = match &l.drive {
                    RfDrive::Amplitude(v) => {
                        LinearRfTrap::new(l.r0.si(), v.si(), l.rf_frequency.si(), l.axial_frequency.si(), reference)?
                    }
                    RfDrive::RadialFrequency(w) => LinearRfTrap::from_secular(
                        reference,
                        l.r0.si(),
                        l.rf_frequency.si(),
                        w.si(),
                        l.axial_frequency.si(),
                        l.asymmetry,
                    )?,
                };
                trap = trap.with_asymmetry(l.asymmetry);
                trap.validate(reference)?;
                let mode = if l.full_drive { RfMode::FullDrive } else { RfMode::Pseudopotential };
                Ok(TrapConfig::LinearRf { trap, mode })
            }
            TrapSection::Penning(p) => {
                let mut trap = match &p.electrode {
                    PenningElectrode::AxialFrequency(w) => PenningTrap::from_frequencies(
                        reference,
                        p.z0.si(),
                        p.r0.si(),
                        p.magnetic_field.si(),
                        w.si(),
                        p.rotation_frequency.si(),
                    )?,
                    PenningElectrode::Voltage(u) => PenningTrap {
                        u0: u.si(),
                        z0: p.z0.si(),
                        r0: p.r0.si(),
                        magnetic_field: p.magnetic_field.si(),
                        rotation_angular_frequency: p.rotation_frequency.si(),
                        wall_strength: 0.0,
                    },
                };
                trap.wall_strength = p.wall_strength.si();
                let frame = if p.lab_frame { PenningFrame::Lab } else { PenningFrame::Rotating };
                Ok(TrapConfig::Penning { trap, frame })
            }
        }
    }

    pub fn cooling_model(&self) -> CoolingModel {
        let c = &self.cooling;
        CoolingModel {
            friction_rate: c.friction_rate.map_or(0.0, |q| q.si()),
            target_temperature: c.temperature.si(),
            beam: c
                .radial_beam_offset
                .map_or(BeamGeometry::Axial, |o| BeamGeometry::RadialOffset { offset: o.si() }),
            extra_heating_rate: c.extra_heating.si(),
        }
    }

    pub fn minimizer_options(&self) -> MinimizerOptions {
        let base = if self.relax.anneal {
            MinimizerOptions::annealed(self.seed, self.relax.restarts)
        } else {
            MinimizerOptions { seed: self.seed, restarts: self.relax.restarts, ..MinimizerOptions::default() }
        };
        MinimizerOptions { force_tolerance: self.relax.force_tolerance.si(), ..base }
    }

    /// Canonical text: every section and key in a fixed order, defaults
    /// written out. Parsing it gives back an equal config.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut section = |name: &str, lines: Vec<(&str, String)>| {
            let _ = writeln!(out, "[{name}]");
            for (k, v) in lines {
                let _ = writeln!(out, "{k} = {v}");
            }
            out.push('\n');
        };
        section("experiment", vec![("name", self.name.clone()), ("seed", self.seed.to_string())]);

        let mut sp = vec![(
            "ions",
            self.species.ions.iter().map(|(n, c)| format!("{n} * {c}")).collect::<Vec<_>>().join(", "),
        )];
        if !self.species.custom.is_empty() {
            let defs: Vec<String> = self
                .species
                .custom
                .iter()
                .map(|d| format!("{} {} {}{}", d.name, d.mass, d.charge, if d.dark { " dark" } else { "" }))
                .collect();
            sp.push(("custom", defs.join("; ")));
        }
        if !self.species.dark.is_empty() {
            sp.push(("dark", self.species.dark.join(", ")));
        }
        section("species", sp);

        match &self.trap {
            TrapSection::Linear(l) => {
                let mut t = vec![
                    ("type", "linear".to_string()),
                    ("r0", l.r0.to_string()),
                    ("rf_frequency", l.rf_frequency.to_string()),
                ];
                match &l.drive {
                    RfDrive::Amplitude(v) => t.push(("rf_amplitude", v.to_string())),
                    RfDrive::RadialFrequency(w) => t.push(("radial_frequency", w.to_string())),
                }
                t.push(("axial_frequency", l.axial_frequency.to_string()));
                t.push(("asymmetry", l.asymmetry.to_string()));
                t.push(("mode", if l.full_drive { "full_drive" } else { "pseudopotential" }.to_string()));
                section("trap", t);
            }
            TrapSection::Penning(p) => {
                let mut t = vec![
                    ("type", "penning".to_string()),
                    ("magnetic_field", p.magnetic_field.to_string()),
                    ("z0", p.z0.to_string()),
                    ("r0", p.r0.to_string()),
                ];
                match &p.electrode {
                    PenningElectrode::Voltage(u) => t.push(("u0", u.to_string())),
                    PenningElectrode::AxialFrequency(w) => t.push(("axial_frequency", w.to_string())),
                }
                t.push(("rotation_frequency", p.rotation_frequency.to_string()));
                t.push(("wall_strength", p.wall_strength.to_string()));
                t.push(("frame", if p.lab_frame { "lab" } else { "rotating" }.to_string()));
                section("trap", t);
            }
        }

        let c = &self.cooling;
        let mut cl = Vec::new();
        if let Some(g) = c.friction_rate {
            cl.push(("friction_rate", g.to_string()));
        }
        cl.push(("temperature", c.temperature.to_string()));
        match c.radial_beam_offset {
            None => cl.push(("beam", "axial".to_string())),
            Some(o) => {
                cl.push(("beam", "radial".to_string()));
                cl.push(("beam_offset", o.to_string()));
            }
        }
        cl.push(("extra_heating", c.extra_heating.to_string()));
        section("cooling", cl);

        let r = &self.relax;
        let mut rl = vec![
            ("anneal", r.anneal.to_string()),
            ("restarts", r.restarts.to_string()),
            ("initial", match r.initial {
                InitialShape::String => "string",
                InitialShape::Ball => "ball",
            }
            .to_string()),
        ];
        if let Some(size) = r.initial_size {
            rl.push(("initial_size", size.to_string()));
        }
        rl.push(("force_tolerance", r.force_tolerance.to_string()));
        section("relax", rl);

        let mut pr = vec![("verb", self.protocol.verb().to_string())];
        match &self.protocol {
            Protocol::Relax | Protocol::Modes => {}
            Protocol::Evolve(e) => {
                pr.push(("duration", e.duration.to_string()));
                if let Some(dt) = e.dt {
                    pr.push(("dt", dt.to_string()));
                }
                pr.push(("every", e.every.to_string()));
                pr.push(("initial_temperature", e.initial_temperature.to_string()));
            }
            Protocol::Quench(q) => {
                pr.push(("control", match q.control {
                    QuenchControl::RadialFrequency => "radial_frequency",
                    QuenchControl::AxialFrequency => "axial_frequency",
                }
                .to_string()));
                pr.push(("start", q.start.to_string()));
                pr.push(("end", q.end.to_string()));
                pr.push(("shape", match q.shape {
                    RampShape::Linear => "linear",
                    RampShape::Smoothstep => "smoothstep",
                }
                .to_string()));
                pr.push(("durations", q.durations.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")));
                pr.push(("seeds", q.seeds.to_string()));
                pr.push(("hold", q.hold.to_string()));
                pr.push(("averaging_fraction", q.averaging_fraction.to_string()));
                if let Some(dt) = q.dt {
                    pr.push(("dt", dt.to_string()));
                }
            }
            Protocol::Scan(s) => {
                pr.push(("parameter", s.parameter.as_str().to_string()));
                match &s.grid {
                    Grid::Values(v) => pr.push(("values", v.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(", "))),
                    Grid::Range { from, to, points, geometric } => {
                        pr.push(("from", from.to_string()));
                        pr.push(("to", to.to_string()));
                        pr.push(("points", points.to_string()));
                        pr.push(("spacing", if *geometric { "geometric" } else { "linear" }.to_string()));
                    }
                }
                pr.push(("refine_steps", s.refine_steps.to_string()));
            }
            Protocol::Image(i) => {
                pr.push(("view", match i.view {
                    ViewAxis::X => "x",
                    ViewAxis::Y => "y",
                    ViewAxis::Z => "z",
                }
                .to_string()));
                pr.push(("width", i.width.to_string()));
                pr.push(("height", i.height.to_string()));
                pr.push(("pixel_pitch", i.pixel_pitch.to_string()));
                pr.push(("psf_sigma", i.psf_sigma.to_string()));
                match i.gate_window {
                    None => pr.push(("gate", "none".to_string())),
                    Some(w) => {
                        pr.push(("gate", "phase_locked".to_string()));
                        pr.push(("gate_window", w.to_string()));
                    }
                }
                pr.push(("samples", i.samples.to_string()));
                pr.push(("spot_threshold", i.spot_threshold.to_string()));
            }
        }
        section("protocol", pr);

        section("output", vec![
            ("directory", self.output.directory.clone()),
            ("pgm", if self.output.binary_pgm { "binary" } else { "ascii" }.to_string()),
        ]);
        out.pop();
        out
    }

    /// Camera gate derived from the image parameters and trap.
    pub fn gate(&self, table: &[IonSpecies]) -> icc_core::Result<Gate> {
        let Protocol::Image(p) = &self.protocol else { return Ok(Gate::None) };
        let Some(window) = p.gate_window else { return Ok(Gate::None) };
        let angular_frequency = match self.trap_config(table)? {
            TrapConfig::Penning { trap, .. } => trap.rotation_angular_frequency,
            TrapConfig::LinearRf { trap, .. } => trap.rf_angular_frequency,
        };
        Ok(Gate::PhaseLocked { window, angular_frequency, phase: 0.0 })
    }
}

fn parse_species(raw: &RawConfig) -> Result<SpeciesSection, ConfigError> {
    let mut s = raw.section("species");
    let mut custom = Vec::new();
    if let Some((text, line)) = s.text("custom") {
        for def in split_list(&text, ';') {
            let tokens: Vec<&str> = def.split_whitespace().collect();
            let usage = "expected `NAME MASS u CHARGE [dark]`";
            if !(tokens.len() == 4 || tokens.len() == 5) || (tokens.len() == 5 && tokens[4] != "dark") {
                return Err(ConfigError::at(line, "custom", format!("{usage}, got `{def}`")));
            }
            let mass = quantity(&format!("{} {}", tokens[1], tokens[2]), Dimension::Mass, "custom", line)?;
            let charge: u32 = tokens[3]
                .parse()
                .map_err(|_| ConfigError::at(line, "custom", format!("charge state `{}` is not an integer", tokens[3])))?;
            IonSpecies::new(tokens[0], mass.value, charge).map_err(|e| ConfigError::at(line, "custom", e.to_string()))?;
            if species_from_catalog(tokens[0]).is_ok() || custom.iter().any(|d: &SpeciesDef| d.name == tokens[0]) {
                return Err(ConfigError::at(line, "custom", format!("species `{}` is already defined", tokens[0])));
            }
            custom.push(SpeciesDef { name: tokens[0].to_string(), mass, charge, dark: tokens.len() == 5 });
        }
    }
    let (text, line) = s.required_text("ions")?;
    let mut ions: Vec<(String, usize)> = Vec::new();
    for item in split_list(&text, ',') {
        let (name, count) = match item.split_once('*') {
            Some((n, c)) => {
                let c: usize = c
                    .trim()
                    .parse()
                    .map_err(|_| ConfigError::at(line, "ions", format!("bad ion count in `{item}`")))?;
                (n.trim(), c)
            }
            None => (item, 1),
        };
        if count == 0 {
            return Err(ConfigError::at(line, "ions", format!("`{item}` has no ions")));
        }
        if !custom.iter().any(|d| d.name == name) {
            species_from_catalog(name).map_err(|e| ConfigError::at(line, "ions", e.to_string()))?;
        }
        if ions.iter().any(|(n, _)| n == name) {
            return Err(ConfigError::at(line, "ions", format!("species `{name}` listed twice")));
        }
        ions.push((name.to_string(), count));
    }
    if ions.is_empty() {
        return Err(ConfigError::at(line, "ions", "no ions listed"));
    }
    let mut dark = Vec::new();
    if let Some((text, line)) = s.text("dark") {
        for name in split_list(&text, ',') {
            if !ions.iter().any(|(n, _)| n == name) {
                return Err(ConfigError::at(line, "dark", format!("`{name}` is not listed in ions")));
            }
            dark.push(name.to_string());
        }
    }
    s.finish()?;
    Ok(SpeciesSection { custom, ions, dark })
}

fn parse_trap(raw: &RawConfig) -> Result<TrapSection, ConfigError> {
    let mut s = raw.section("trap");
    let kind = s.choice("type", &[("linear", true), ("penning", false)], true)?;
    if s.entries.is_none() {
        return Err(ConfigError::at(0, "trap", "the [trap] section is required"));
    }
    let out = if kind {
        let r0 = s.positive("r0", Dimension::Length)?.unwrap_or(Quantity::new(1.0, "mm"));
        let rf_frequency = s.positive("rf_frequency", Dimension::Frequency)?.ok_or_else(|| s.missing("rf_frequency"))?;
        let amplitude = s.quantity("rf_amplitude", Dimension::Voltage)?;
        let radial = s.positive("radial_frequency", Dimension::Frequency)?;
        let drive = match (amplitude, radial) {
            (Some(v), None) => RfDrive::Amplitude(v),
            (None, Some(w)) => RfDrive::RadialFrequency(w),
            _ => {
                return Err(ConfigError::at(s.line, "trap", "give exactly one of rf_amplitude and radial_frequency"));
            }
        };
        let axial_frequency =
            s.positive("axial_frequency", Dimension::Frequency)?.ok_or_else(|| s.missing("axial_frequency"))?;
        let asymmetry = s.number("asymmetry", 0.0)?;
        let full_drive = s.choice("mode", &[("pseudopotential", false), ("full_drive", true)], false)?;
        TrapSection::Linear(LinearSection { r0, rf_frequency, drive, axial_frequency, asymmetry, full_drive })
    } else {
        let magnetic_field =
            s.positive("magnetic_field", Dimension::MagneticField)?.ok_or_else(|| s.missing("magnetic_field"))?;
        let z0 = s.positive("z0", Dimension::Length)?.unwrap_or(Quantity::new(1.0, "mm"));
        let r0 = s.positive("r0", Dimension::Length)?.unwrap_or(Quantity::new(1.0, "mm"));
        let u0 = s.quantity("u0", Dimension::Voltage)?;
        let wz = s.positive("axial_frequency", Dimension::Frequency)?;
        let electrode = match (u0, wz) {
            (Some(u), None) => PenningElectrode::Voltage(u),
            (None, Some(w)) => PenningElectrode::AxialFrequency(w),
            _ => return Err(ConfigError::at(s.line, "trap", "give exactly one of u0 and axial_frequency")),
        };
        let rotation_frequency = s.required_quantity("rotation_frequency", Dimension::Frequency)?;
        let wall_strength = s.quantity("wall_strength", Dimension::Curvature)?.unwrap_or(Quantity::new(0.0, "V/m^2"));
        let lab_frame = s.choice("frame", &[("rotating", false), ("lab", true)], false)?;
        TrapSection::Penning(PenningSection { magnetic_field, z0, r0, electrode, rotation_frequency, wall_strength, lab_frame })
    };
    s.finish()?;
    Ok(out)
}

fn parse_cooling(raw: &RawConfig) -> Result<CoolingSection, ConfigError> {
    let mut s = raw.section("cooling");
    let friction_rate = s.positive("friction_rate", Dimension::Rate)?;
    let temperature = s.positive("temperature", Dimension::Temperature)?.unwrap_or(Quantity::new(1.0, "mK"));
    let radial = s.choice("beam", &[("axial", false), ("radial", true)], false)?;
    let offset = s.quantity("beam_offset", Dimension::Length)?;
    let radial_beam_offset = match (radial, offset) {
        (true, o) => Some(o.unwrap_or(Quantity::new(0.0, "um"))),
        (false, None) => None,
        (false, Some(_)) => return Err(ConfigError::at(0, "cooling.beam_offset", "only meaningful with beam = radial")),
    };
    let extra_heating = s.quantity("extra_heating", Dimension::HeatingRate)?.unwrap_or(Quantity::new(0.0, "K/s"));
    s.finish()?;
    Ok(CoolingSection { friction_rate, temperature, radial_beam_offset, extra_heating })
}

fn parse_relax(raw: &RawConfig) -> Result<RelaxSection, ConfigError> {
    let mut s = raw.section("relax");
    let anneal = s.flag("anneal", false)?;
    let restarts = s.count("restarts", 1, 1)?;
    let initial = s.choice("initial", &[("string", InitialShape::String), ("ball", InitialShape::Ball)], InitialShape::String)?;
    let initial_size = s.positive("initial_size", Dimension::Length)?;
    let force_tolerance = s
        .positive("force_tolerance", Dimension::Force)?
        .unwrap_or(Quantity::new(DEFAULT_FORCE_TOLERANCE, "N"));
    s.finish()?;
    Ok(RelaxSection { anneal, restarts, initial, initial_size, force_tolerance })
}

fn parse_protocol(raw: &RawConfig, trap: &TrapSection) -> Result<Protocol, ConfigError> {
    let mut s = raw.section("protocol");
    let (verb_text, line) = s.required_text("verb")?;
    let verb = Verb::parse(&verb_text).ok_or_else(|| {
        let names: Vec<&str> = Verb::ALL.iter().map(|v| v.as_str()).collect();
        ConfigError::at(line, "verb", format!("`{verb_text}` is not one of {}", names.join(", ")))
    })?;
    let protocol = match verb {
        Verb::Relax => Protocol::Relax,
        Verb::Modes => Protocol::Modes,
        Verb::Evolve => Protocol::Evolve(EvolveParams {
            duration: s.positive("duration", Dimension::Time)?.ok_or_else(|| s.missing("duration"))?,
            dt: s.positive("dt", Dimension::Time)?,
            every: s.count("every", 100, 1)?,
            initial_temperature: s.quantity("initial_temperature", Dimension::Temperature)?.unwrap_or(Quantity::new(0.0, "K")),
        }),
        Verb::Quench => {
            if !matches!(trap, TrapSection::Linear(_)) {
                return Err(ConfigError::at(line, "verb", "quench needs a linear trap"));
            }
            let control = s.choice(
                "control",
                &[("radial_frequency", QuenchControl::RadialFrequency), ("axial_frequency", QuenchControl::AxialFrequency)],
                QuenchControl::RadialFrequency,
            )?;
            let start = s.positive("start", Dimension::Frequency)?.ok_or_else(|| s.missing("start"))?;
            let end = s.positive("end", Dimension::Frequency)?.ok_or_else(|| s.missing("end"))?;
            let shape = s.choice("shape", &[("linear", RampShape::Linear), ("smoothstep", RampShape::Smoothstep)], RampShape::Linear)?;
            let (text, dline) = s.required_text("durations")?;
            let durations = split_list(&text, ',')
                .into_iter()
                .map(|d| quantity(d, Dimension::Time, "durations", dline))
                .collect::<Result<Vec<_>, _>>()?;
            if durations.is_empty() || durations.iter().any(|d| !(d.value > 0.0)) {
                return Err(ConfigError::at(dline, "durations", "need at least one positive quench time"));
            }
            let seeds = s.count("seeds", 1, 1)?;
            let hold = s.number("hold", 100.0)?;
            let averaging_fraction = s.number("averaging_fraction", 0.1)?;
            if !(hold > 0.0) || !(averaging_fraction > 0.0 && averaging_fraction <= 1.0) {
                return Err(ConfigError::at(line, "protocol", "hold must be positive and averaging_fraction in (0, 1]"));
            }
            let dt = s.positive("dt", Dimension::Time)?;
            Protocol::Quench(QuenchParams { control, start, end, shape, durations, seeds, hold, averaging_fraction, dt })
        }
        Verb::Scan => {
            let options: Vec<(&str, ScanParameter)> = ScanParameter::ALL.iter().map(|p| (p.as_str(), *p)).collect();
            if s.entries.and_then(|e| e.get("parameter")).is_none() {
                return Err(s.missing("parameter"));
            }
            let parameter = s.choice("parameter", &options, ScanParameter::Anisotropy)?;
            let linear = matches!(trap, TrapSection::Linear(_));
            if (linear && parameter.penning_only()) || (!linear && parameter.linear_only()) {
                return Err(ConfigError::at(0, "protocol.parameter", format!("`{}` does not apply to this trap", parameter.as_str())));
            }
            let dim = parameter.dimension();
            let grid = match s.text("values") {
                Some((text, vline)) => {
                    let values = split_list(&text, ',')
                        .into_iter()
                        .map(|v| quantity(v, dim, "values", vline))
                        .collect::<Result<Vec<_>, _>>()?;
                    Grid::Values(values)
                }
                None => {
                    let from = s.quantity("from", dim)?.ok_or_else(|| ConfigError::at(0, "protocol.values", "give values or from/to/points"))?;
                    let to = s.required_quantity("to", dim)?;
                    let points = s.count("points", 0, 0)?;
                    let geometric = s.choice("spacing", &[("linear", false), ("geometric", true)], false)?;
                    Grid::Range { from, to, points, geometric }
                }
            };
            let refine_steps = s.count("refine_steps", 20, 0)?;
            let params = ScanParams { parameter, grid, refine_steps };
            params.values().map_err(|reason| ConfigError::at(0, "protocol", reason))?;
            Protocol::Scan(params)
        }
        Verb::Image => {
            let gated = s.choice("gate", &[("none", false), ("phase_locked", true)], false)?;
            let window = s.number("gate_window", 0.01)?;
            let view = s.choice("view", &[("x", ViewAxis::X), ("y", ViewAxis::Y), ("z", ViewAxis::Z)], ViewAxis::Z)?;
            let p = ImageParams {
                view,
                width: s.count("width", 128, 1)?,
                height: s.count("height", 128, 1)?,
                pixel_pitch: s.positive("pixel_pitch", Dimension::Length)?.unwrap_or(Quantity::new(2.65, "um")),
                psf_sigma: s.positive("psf_sigma", Dimension::Length)?.unwrap_or(Quantity::new(2.0, "um")),
                gate_window: gated.then_some(window),
                samples: s.count("samples", 4000, 1)?,
                spot_threshold: s.number("spot_threshold", 0.3)?,
            };
            if gated && !(window > 0.0 && window <= 2.0 * std::f64::consts::PI) {
                return Err(ConfigError::at(0, "protocol.gate_window", "must lie in (0, 2π] radians"));
            }
            Protocol::Image(p)
        }
    };
    s.finish()?;
    Ok(protocol)
}

impl ScanParams {
    /// Grid values in SI units, checked to be non-empty and strictly
    /// monotone.
    pub fn values(&self) -> Result<Vec<f64>, String> {
        let values: Vec<f64> = match &self.grid {
            Grid::Values(v) => v.iter().map(Quantity::si).collect(),
            Grid::Range { from, to, points, geometric } => {
                let (a, b, n) = (from.si(), to.si(), *points);
                if *geometric && !(a > 0.0 && b > 0.0) {
                    return Err("a geometric grid needs positive end points".into());
                }
                (0..n)
                    .map(|k| {
                        let t = if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
                        if *geometric {
                            a * (b / a).powf(t)
                        } else {
                            a + (b - a) * t
                        }
                    })
                    .collect()
            }
        };
        if values.is_empty() {
            return Err("scan grid is empty".into());
        }
        let up = values.windows(2).all(|w| w[1] > w[0]);
        let down = values.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err("scan grid must be strictly monotone".into());
        }
        Ok(values)
    }
}
