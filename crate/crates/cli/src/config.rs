//! Flat `key = value` configuration with per-command key tables.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use wetting_core::io::sha256_hex;

/// `ln 5`, the default strip height.
pub const LN5: &str = "1.6094379124341003";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SampleStatic,
    SimulateLattice,
    SimulateContinuum,
    SimulateSpde,
    Verify,
    Report,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::SampleStatic,
        Command::SimulateLattice,
        Command::SimulateContinuum,
        Command::SimulateSpde,
        Command::Verify,
        Command::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::SampleStatic => "sample-static",
            Command::SimulateLattice => "simulate-lattice",
            Command::SimulateContinuum => "simulate-continuum",
            Command::SimulateSpde => "simulate-spde",
            Command::Verify => "verify",
            Command::Report => "report",
        }
    }

    /// Documented keys with their defaults; `auto` means derived from other
    /// keys at run time.
    pub fn keys(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Command::SampleStatic => &[
                ("model", "strip"),
                ("n", "8"),
                ("a", "0.2"),
                ("beta", LN5),
                ("shape", "smooth-bump"),
                ("samples", "10000"),
                ("chains", "16"),
                ("burn_in", "auto"),
                ("thin", "auto"),
            ],
            Command::SimulateLattice => &[
                ("n", "16"),
                ("a", "0.2"),
                ("beta", LN5),
                ("T", "0.08"),
                ("obs_times", "0,0.02,0.04,0.08"),
                ("dt_micro", "0.001"),
                ("replicas", "8"),
            ],
            Command::SimulateContinuum => &[
                ("mode", "truncated"),
                ("a", "0"),
                ("eta", "0.1"),
                ("dt", "0.0001"),
                ("paths", "1000"),
                ("dump_paths", "1"),
                ("kernel", "0.01"),
            ],
            Command::SimulateSpde => &[
                ("n_space", "64"),
                ("dt", "auto"),
                ("eta", "0.5"),
                ("eps", "0.1"),
                ("a", "0"),
                ("attraction", "true"),
                ("endpoint_tilt", "true"),
                ("bridge_correction", "true"),
                ("init", "oracle"),
                ("replicas", "4"),
                ("burn_in", "1"),
                ("record_every", "0.5"),
                ("records", "4"),
            ],
            Command::Verify => &[("profile", "full"), ("criteria", "1,2,3,4,5,6,7,8,9")],
            Command::Report => &[
                ("pipeline", "convergence"),
                ("etas", "0.4,0.2,0.1,0.05"),
                ("dt", "0.0001"),
                ("paths", "10000"),
                ("sizes", "8,16,32"),
                ("replicas", "200"),
                ("n_space", "32"),
                ("eps_ratio", "0.2"),
            ],
        }
    }
}

impl FromStr for Command {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| ConfigError::BadValue {
                key: "command".into(),
                value: s.into(),
                reason: format!(
                    "expected one of {}",
                    Command::ALL.map(|c| c.name()).join(", ")
                ),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigError {
    Malformed { line: usize, text: String },
    UnknownKey { key: String, command: String },
    BadValue { key: String, value: String, reason: String },
    Missing(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Malformed { line, text } => write!(f, "line {line}: expected `key = value`, got `{text}`"),
            ConfigError::UnknownKey { key, command } => write!(f, "unknown key `{key}` for command `{command}`"),
            ConfigError::BadValue { key, value, reason } => write!(f, "invalid value `{value}` for key `{key}`: {reason}"),
            ConfigError::Missing(what) => write!(f, "missing {what}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_flat(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(parse_pair(line).ok_or_else(|| ConfigError::Malformed {
            line: i + 1,
            text: raw.to_string(),
        })?);
    }
    Ok(out)
}

/// `key=value` with a nonempty key.
pub fn parse_pair(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    if k.is_empty() || k.contains(char::is_whitespace) {
        return None;
    }
    Some((k.to_string(), v.trim().to_string()))
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    /// Every documented key of `command`, defaults filled in.
    pub params: BTreeMap<String, String>,
}

impl RunConfig {
    /// Later pairs override earlier ones. `command` and `seed` may appear as
    /// keys; the explicit arguments win over them.
    pub fn resolve(pairs: &[(String, String)], command: Option<&str>, seed: Option<u64>) -> Result<Self, ConfigError> {
        let mut given: BTreeMap<String, String> = BTreeMap::new();
        for (k, v) in pairs {
            given.insert(k.clone(), v.clone());
        }
        let command: Command = match command.map(str::to_string).or_else(|| given.get("command").cloned()) {
            Some(c) => c.parse()?,
            None => return Err(ConfigError::Missing("command (use --command or a `command` key)".into())),
        };
        let seed = match seed {
            Some(s) => s,
            None => match given.get("seed") {
                Some(v) => parse_value::<u64>("seed", v)?,
                None => 0,
            },
        };
        given.remove("command");
        given.remove("seed");
        let keys = command.keys();
        if let Some(k) = given.keys().find(|k| !keys.iter().any(|(name, _)| name == k)) {
            return Err(ConfigError::UnknownKey {
                key: k.clone(),
                command: command.name().into(),
            });
        }
        let params = keys
            .iter()
            .map(|&(k, d)| (k.to_string(), given.get(k).cloned().unwrap_or_else(|| d.to_string())))
            .collect();
        Ok(Self { command, seed, params })
    }

    /// Canonical text: `command`, `seed`, then sorted keys.
    pub fn canonical(&self) -> String {
        let mut s = format!("command={}\nseed={}\n", self.command.name(), self.seed);
        for (k, v) in &self.params {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }

    fn raw(&self, key: &str) -> &str {
        self.params
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("key `{key}` is not documented for {}", self.command.name()))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        parse_value(key, self.raw(key))
    }

    /// `None` for `auto`.
    pub fn get_auto<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            "auto" => Ok(None),
            v => parse_value(key, v).map(Some),
        }
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| parse_value(key, t))
            .collect()
    }

    pub fn get_str(&self, key: &str) -> &str {
        self.raw(key)
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: v.into(),
        reason: e.to_string(),
    })
}
