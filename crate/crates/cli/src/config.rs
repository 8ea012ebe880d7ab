//! Flat `key = value` experiment files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    Ruin,
    Diffusion,
    Grw,
    Csl,
    Stuff,
    Flow,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Ruin,
        Experiment::Diffusion,
        Experiment::Grw,
        Experiment::Csl,
        Experiment::Stuff,
        Experiment::Flow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Ruin => "ruin",
            Experiment::Diffusion => "diffusion",
            Experiment::Grw => "grw",
            Experiment::Csl => "csl",
            Experiment::Stuff => "stuff",
            Experiment::Flow => "flow",
        }
    }

    /// Modes in order; the first is the default.
    pub fn modes(self) -> &'static [&'static str] {
        match self {
            Experiment::Ruin => &["games", "solve"],
            Experiment::Diffusion => &["solve"],
            Experiment::Grw => &["pointer", "rate"],
            Experiment::Csl => &["cooked", "importance", "correspondence", "field"],
            Experiment::Stuff => &["state"],
            Experiment::Flow => &["balance"],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Number,
    /// Integer ≥ 1.
    Positive,
    Flag,
    /// Comma-separated numbers.
    List,
}

#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub name: &'static str,
    pub kind: Kind,
    pub required: bool,
}

const fn req(name: &'static str, kind: Kind) -> KeySpec {
    KeySpec {
        name,
        kind,
        required: true,
    }
}

const fn opt(name: &'static str, kind: Kind) -> KeySpec {
    KeySpec {
        name,
        kind,
        required: false,
    }
}

use Kind::*;

const COMMON: &[&str] = &["experiment", "mode", "seed", "out_dir", "format"];

const CSL_TWO_STATE: [KeySpec; 4] = [
    req("lambda", Number),
    req("a_L", Number),
    req("a_R", Number),
    req("x0", Number),
];

/// Keys accepted by an experiment in a given mode.
pub fn schema(experiment: Experiment, mode: &str) -> Vec<KeySpec> {
    let mut keys = match (experiment, mode) {
        (Experiment::Ruin, "games") => vec![
            req("x0", Number),
            req("stake", Number),
            req("trajectories", Positive),
            opt("halving", Flag),
            opt("max_steps", Positive),
            opt("bins", Positive),
        ],
        (Experiment::Ruin, "solve") => vec![req("stake", Number), opt("points", Positive)],
        (Experiment::Diffusion, _) => vec![
            req("n_cells", Positive),
            req("lambda", Number),
            req("r", Positive),
            req("x0", Number),
            req("t_end", Number),
            opt("dt", Number),
            opt("checkpoints", List),
            opt("refine", Positive),
        ],
        (Experiment::Grw, "pointer") => vec![
            req("lambda", Number),
            req("a", Number),
            req("n", Number),
            req("separation", Number),
            req("weight_left", Number),
            req("trajectories", Positive),
            opt("bins", Positive),
        ],
        (Experiment::Grw, "rate") => vec![
            req("lambda", Number),
            req("a", Number),
            req("n_cells", Positive),
            req("x_min", Number),
            req("x_max", Number),
            req("states", Positive),
        ],
        (Experiment::Csl, "cooked") => {
            let mut k = CSL_TWO_STATE.to_vec();
            k.extend([
                req("dt", Number),
                req("t_end", Number),
                req("trajectories", Positive),
                opt("record_every", Positive),
                opt("bins", Positive),
            ]);
            k
        }
        (Experiment::Csl, "importance") => {
            let mut k = CSL_TWO_STATE.to_vec();
            k.extend([
                req("dt", Number),
                req("t_end", Number),
                req("trajectories", Positive),
                opt("batches", Positive),
                opt("resample_below", Number),
            ]);
            k
        }
        (Experiment::Csl, "correspondence") => {
            let mut k = CSL_TWO_STATE.to_vec();
            k.extend([req("trajectories", Positive), req("checkpoints", List), opt("lambda_diff", Number)]);
            k
        }
        (Experiment::Csl, "field") => vec![
            req("lambda", Number),
            req("a", Number),
            req("n_cells", Positive),
            req("x_min", Number),
            req("x_max", Number),
            req("centers", List),
            req("widths", List),
            req("weights", List),
            req("dt", Number),
            req("t_end", Number),
            req("trajectories", Positive),
            opt("split", Number),
        ],
        (Experiment::Stuff, _) => vec![
            req("n_cells", Positive),
            req("x_min", Number),
            req("x_max", Number),
            req("particles", Positive),
            req("centers", List),
            req("widths", List),
            req("region_lo", Number),
            req("region_hi", Number),
            opt("weights", List),
            opt("epsilon", Number),
            opt("r_v", Number),
        ],
        (Experiment::Flow, _) => vec![
            req("n_cells", Positive),
            req("x_min", Number),
            req("x_max", Number),
            req("lambda", Number),
            req("a", Number),
            req("centers", List),
            req("widths", List),
            req("region_lo", Number),
            req("region_hi", Number),
            req("dt", Number),
            req("t_end", Number),
            req("noise_dt", Number),
            opt("convergence", Flag),
        ],
        _ => Vec::new(),
    };
    keys.sort_by_key(|k| k.name);
    keys
}

/// One parsed file: the experiment, its mode and the typed parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub mode: String,
    pub params: BTreeMap<String, String>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub format: Format,
}

impl ExperimentConfig {
    /// Parses and schema-checks a file, collecting every violation.
    pub fn parse(text: &str) -> Result<Self, Vec<String>> {
        let mut diags = Vec::new();
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                diags.push(format!("line {}: expected `key = value`", no + 1));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                diags.push(format!("line {}: empty key or value", no + 1));
                continue;
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                diags.push(format!("line {}: duplicate key `{key}`", no + 1));
            }
        }

        let experiment = match entries.get("experiment") {
            None => {
                diags.push("missing required key `experiment`".to_string());
                None
            }
            Some(v) => match v.parse::<Experiment>() {
                Ok(e) => Some(e),
                Err(e) => {
                    diags.push(e);
                    None
                }
            },
        };
        let seed = match entries.get("seed").map(|s| s.parse::<u64>()) {
            None => 0,
            Some(Ok(s)) => s,
            Some(Err(_)) => {
                diags.push("`seed` must be a non-negative integer".to_string());
                0
            }
        };
        let format = match entries.get("format").map(|s| s.parse::<Format>()) {
            None => Format::Csv,
            Some(Ok(f)) => f,
            Some(Err(e)) => {
                diags.push(e);
                Format::Csv
            }
        };
        let out_dir = entries.get("out_dir").map(PathBuf::from);

        let Some(experiment) = experiment else {
            return Err(diags);
        };
        let modes = experiment.modes();
        let mode = entries.get("mode").cloned().unwrap_or_else(|| modes[0].to_string());
        if !modes.contains(&mode.as_str()) {
            diags.push(format!("unknown mode `{mode}` for {experiment} (expected one of {})", modes.join(", ")));
            return Err(diags);
        }

        let keys = schema(experiment, &mode);
        for spec in &keys {
            match entries.get(spec.name) {
                None if spec.required => diags.push(format!("missing required key `{}`", spec.name)),
                None => {}
                Some(v) => {
                    if let Err(e) = check_kind(spec, v) {
                        diags.push(e);
                    }
                }
            }
        }
        for key in entries.keys() {
            if !COMMON.contains(&key.as_str()) && !keys.iter().any(|k| k.name == key) {
                diags.push(format!("unknown key `{key}` for {experiment} mode {mode}"));
            }
        }
        if !diags.is_empty() {
            return Err(diags);
        }
        let params = entries.into_iter().filter(|(k, _)| !COMMON.contains(&k.as_str())).collect();
        Ok(Self {
            experiment,
            mode,
            params,
            seed,
            out_dir,
            format,
        })
    }

    pub fn has(&self, key: &str) -> bool {
        self.params.contains_key(key)
    }

    /// Value of a schema-checked number key. Panics on keys outside the schema.
    pub fn num(&self, key: &str) -> f64 {
        parse_number(&self.params[key]).expect("checked by the schema")
    }

    pub fn num_or(&self, key: &str, default: f64) -> f64 {
        if self.has(key) {
            self.num(key)
        } else {
            default
        }
    }

    pub fn count(&self, key: &str) -> usize {
        self.params[key].parse().expect("checked by the schema")
    }

    pub fn count_or(&self, key: &str, default: usize) -> usize {
        if self.has(key) {
            self.count(key)
        } else {
            default
        }
    }

    pub fn flag(&self, key: &str) -> bool {
        self.params.get(key).is_some_and(|v| v == "true")
    }

    pub fn list(&self, key: &str) -> Vec<f64> {
        parse_list(&self.params[key]).expect("checked by the schema")
    }
}

fn parse_number(s: &str) -> Result<f64, ()> {
    s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or(())
}

fn parse_list(s: &str) -> Result<Vec<f64>, ()> {
    s.split(',').map(|p| parse_number(p.trim())).collect()
}

fn check_kind(spec: &KeySpec, v: &str) -> Result<(), String> {
    let name = spec.name;
    match spec.kind {
        Number => parse_number(v).map(|_| ()).map_err(|_| format!("`{name}` must be a finite number, got `{v}`")),
        Positive => match v.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(()),
            _ => Err(format!("`{name}` must be an integer >= 1, got `{v}`")),
        },
        Flag => match v {
            "true" | "false" => Ok(()),
            _ => Err(format!("`{name}` must be true or false, got `{v}`")),
        },
        List => parse_list(v)
            .map(|_| ())
            .map_err(|_| format!("`{name}` must be a comma-separated list of numbers, got `{v}`")),
    }
}
