//! Declarative experiment description built from flat `key=value` pairs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lattice::{trust_limit, truncation_radius, Potential};
use crate::symbols::{default_grid_points, parse_list, NamedSymbol, TorusGrid};
use crate::szego::{default_kappa, TestFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Weyl,
    Szego,
    Szego2,
    LsBound,
    Tauberian,
    Symbol,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Weyl,
        Family::Szego,
        Family::Szego2,
        Family::LsBound,
        Family::Tauberian,
        Family::Symbol,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Weyl => "weyl",
            Family::Szego => "szego",
            Family::Szego2 => "szego2",
            Family::LsBound => "ls-bound",
            Family::Tauberian => "tauberian",
            Family::Symbol => "symbol",
        }
    }

    fn default_symbol(self) -> &'static str {
        match self {
            Family::Szego2 => "shifted-cosine",
            _ => "trig-poly",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::config("family", format!("unknown family '{s}'")))
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::config("format", format!("'{s}' is neither csv nor json"))),
        }
    }
}

/// Utility run by the `symbol` family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolOp {
    Compose,
    Power,
    ClassProbe,
}

impl FromStr for SymbolOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compose" => Ok(SymbolOp::Compose),
            "power" => Ok(SymbolOp::Power),
            "class-probe" => Ok(SymbolOp::ClassProbe),
            _ => Err(Error::config("op", format!("'{s}' is not compose, power or class-probe"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoxRadius {
    Auto,
    Fixed(u64),
}

/// `start · factor^j` for `j = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaGrid {
    pub start: f64,
    pub factor: f64,
    pub count: usize,
}

impl LambdaGrid {
    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|j| self.start * self.factor.powi(j as i32)).collect()
    }

    pub fn max(&self) -> f64 {
        self.points().last().copied().unwrap_or(self.start)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub family: Family,
    pub d: usize,
    pub k: f64,
    pub theta: f64,
    pub radius: BoxRadius,
    pub lambda: LambdaGrid,
    pub symbol: NamedSymbol,
    pub f: TestFunction,
    pub kappa: f64,
    pub m: u32,
    pub x_grid: usize,
    /// Window exponents `e` with `r = λ^e` (ls-bound only).
    pub r_exponents: Vec<f64>,
    pub op: SymbolOp,
    /// Truncation order (compose), power (power) or derivative cap (class-probe).
    pub order: u32,
    /// Symbol order `m` tested by class-probe.
    pub class_order: f64,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    /// Normalized `key=value` echo of the inputs, for report metadata.
    pub echo: BTreeMap<String, String>,
}

/// Box used by the `symbol` family when `L` is not given.
pub const DEFAULT_SYMBOL_RADIUS: u64 = 32;

const KEYS: &[&str] = &[
    "family",
    "d",
    "k",
    "theta",
    "L",
    "lambda_start",
    "lambda_factor",
    "lambda_count",
    "symbol",
    "symbol_param",
    "f",
    "kappa",
    "m",
    "x_grid",
    "r_exponents",
    "op",
    "order",
    "class_order",
    "out",
    "format",
];

fn normalize_key(key: &str) -> String {
    let k = key.trim().trim_start_matches("--").replace('-', "_");
    if k.eq_ignore_ascii_case("l") {
        "L".to_string()
    } else {
        k
    }
}

/// Parses a flat `key=value` text; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::config("config", format!("line {}: expected key=value, got '{line}'", lineno + 1))
        })?;
        out.push((normalize_key(k), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_pairs(&text)
}

fn parse_num<T: FromStr>(field: &str, v: &str) -> Result<T> {
    v.trim()
        .parse::<T>()
        .map_err(|_| Error::config(field, format!("cannot parse '{v}'")))
}

impl ExperimentConfig {
    /// Builds a config for `family` from pairs; later pairs override earlier
    /// ones, except `symbol_param`, which accumulates (`key=value` each).
    pub fn from_pairs(family: Family, pairs: &[(String, String)]) -> Result<Self> {
        let mut values: BTreeMap<String, String> = BTreeMap::new();
        let mut symbol_params: Vec<(String, String)> = Vec::new();
        let mut family = family;
        for (raw_key, v) in pairs {
            let key = normalize_key(raw_key);
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::config(&key, "unknown configuration key"));
            }
            match key.as_str() {
                "symbol_param" => {
                    let (pk, pv) = v.split_once('=').ok_or_else(|| {
                        Error::config("symbol_param", format!("expected key=val, got '{v}'"))
                    })?;
                    symbol_params.push((pk.trim().to_string(), pv.trim().to_string()));
                }
                "family" => family = v.parse()?,
                _ => {
                    values.insert(key, v.clone());
                }
            }
        }
        let get = |k: &str| values.get(k).map(String::as_str);

        let d: usize = get("d").map_or(Ok(1), |v| parse_num("d", v))?;
        if d == 0 {
            return Err(Error::config("d", "dimension must be positive"));
        }
        let k: f64 = get("k").map_or(Ok(2.0), |v| parse_num("k", v))?;
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::config("k", "growth exponent must be positive"));
        }
        let theta: f64 = get("theta").map_or(Ok(0.5), |v| parse_num("theta", v))?;
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::config("theta", "safety fraction must lie in (0, 1)"));
        }
        let radius = match get("L") {
            None | Some("auto") => BoxRadius::Auto,
            Some(v) => {
                let l: u64 = parse_num("L", v)?;
                if l == 0 {
                    return Err(Error::config("L", "box radius must be positive"));
                }
                BoxRadius::Fixed(l)
            }
        };
        let start: f64 = get("lambda_start").map_or(Ok(100.0), |v| parse_num("lambda_start", v))?;
        if !(start > 0.0 && start.is_finite()) {
            return Err(Error::config("lambda_start", "must be positive"));
        }
        let factor: f64 = get("lambda_factor").map_or(Ok(2.0), |v| parse_num("lambda_factor", v))?;
        let count: usize = get("lambda_count").map_or(Ok(5), |v| parse_num("lambda_count", v))?;
        if count == 0 {
            return Err(Error::config("lambda_count", "grid needs at least one point"));
        }
        if !(factor > 1.0 && factor.is_finite()) && count > 1 {
            return Err(Error::config("lambda_factor", "geometric factor must exceed 1"));
        }
        let symbol_name = get("symbol").unwrap_or(family.default_symbol());
        let symbol = NamedSymbol::parse(symbol_name, &symbol_params)?;
        let f = TestFunction::parse(get("f").unwrap_or("poly:0,0,1"))?;
        let kappa: f64 = get("kappa").map_or(Ok(default_kappa(k)), |v| parse_num("kappa", v))?;
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::config("kappa", format!("{kappa} is outside (0, 1)")));
        }
        let m: u32 = get("m").map_or(Ok(1), |v| parse_num("m", v))?;
        if m == 0 {
            return Err(Error::config("m", "resolvent power must be positive"));
        }
        if family == Family::Tauberian && m as f64 * k <= d as f64 {
            return Err(Error::config("m", format!("m*k = {} must exceed d = {d}", m as f64 * k)));
        }
        let x_grid: usize = get("x_grid").map_or(Ok(default_grid_points(d)), |v| parse_num("x_grid", v))?;
        TorusGrid::new(d, x_grid)?;
        let r_exponents = match get("r_exponents") {
            None => vec![0.5, 0.7],
            Some(v) => parse_list(v).ok_or_else(|| Error::config("r_exponents", format!("'{v}' is not a list")))?,
        };
        if r_exponents.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(Error::config("r_exponents", "exponents must lie in (0, 1)"));
        }
        let op: SymbolOp = get("op").map_or(Ok(SymbolOp::Power), str::parse)?;
        let order: u32 = get("order").map_or(Ok(2), |v| parse_num("order", v))?;
        if op == SymbolOp::Power && order == 0 {
            return Err(Error::config("order", "power must be positive"));
        }
        let class_order: f64 = get("class_order").map_or(Ok(0.0), |v| parse_num("class_order", v))?;
        let format: OutputFormat = get("format").map_or(Ok(OutputFormat::Csv), str::parse)?;
        let out = get("out").map(PathBuf::from);

        let mut echo = values.clone();
        echo.insert("family".into(), family.name().into());
        echo.insert("symbol".into(), symbol_name.into());
        if !symbol_params.is_empty() {
            let joined: Vec<String> = symbol_params.iter().map(|(a, b)| format!("{a}={b}")).collect();
            echo.insert("symbol_param".into(), joined.join(";"));
        }

        let config = ExperimentConfig {
            family,
            d,
            k,
            theta,
            radius,
            lambda: LambdaGrid { start, factor, count },
            symbol,
            f,
            kappa,
            m,
            x_grid,
            r_exponents,
            op,
            order,
            class_order,
            out,
            format,
            echo,
        };
        config.box_radius()?;
        Ok(config)
    }

    /// Largest spectral threshold the family will query.
    pub fn max_query(&self) -> f64 {
        let lam = self.lambda.max();
        match self.family {
            Family::LsBound => {
                let e = self.r_exponents.iter().copied().fold(0.0, f64::max);
                lam + lam.powf(e)
            }
            _ => lam,
        }
    }

    /// Box radius: the fixed `L` after a trust-window check, or the smallest
    /// radius whose window `θ L^k` covers every query.
    pub fn box_radius(&self) -> Result<u64> {
        let need = self.max_query();
        match self.radius {
            BoxRadius::Auto if self.family == Family::Symbol => Ok(DEFAULT_SYMBOL_RADIUS),
            BoxRadius::Auto => truncation_radius(need, self.k, self.theta),
            BoxRadius::Fixed(l) => {
                if self.family == Family::Symbol {
                    return Ok(l);
                }
                let limit = trust_limit(l, self.k, self.theta);
                if need > limit {
                    return Err(Error::UntrustedWindow { lambda: need, limit });
                }
                Ok(l)
            }
        }
    }

    pub fn potential(&self) -> Result<Potential> {
        Potential::new(self.k)
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.d, self.x_grid)
    }
}
