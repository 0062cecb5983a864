//! Plain-text key=value configuration with fail-closed parsing: unknown
//! sections or keys are errors.

use crate::burgers::Parameters;
use crate::error::{Error, Result};
use crate::solver::{GaussNewtonConfig, LineSearch};
use crate::windows::LmmScheme;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Clone, Debug)]
pub struct GridConfig {
    pub n_cells: usize,
    pub x_min: f64,
    pub x_max: f64,
}

#[derive(Clone, Debug)]
pub struct TimeConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub scheme: LmmScheme,
}

#[derive(Clone, Debug)]
pub struct ParamsConfig {
    pub mu1_range: (f64, f64),
    pub n_mu1: usize,
    pub mu2_range: (f64, f64),
    pub n_mu2: usize,
    pub test: Parameters,
    /// Residual-training grid resolution; defaults to the state grid.
    pub residual_n_mu1: usize,
    pub residual_n_mu2: usize,
}

#[derive(Clone, Debug)]
pub struct WindowsConfig {
    pub l_w: f64,
    pub l_s: f64,
}

#[derive(Clone, Debug)]
pub struct EnergiesConfig {
    pub e_s: f64,
    pub e_t: f64,
    pub e_rs: f64,
    pub e_rt: f64,
}

#[derive(Clone, Debug)]
pub struct GnatConfig {
    pub z_t: usize,
    pub z_s: usize,
}

#[derive(Clone, Debug)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iters: usize,
    pub line_search: LineSearch,
}

impl SolverSection {
    pub fn to_gauss_newton(&self) -> GaussNewtonConfig {
        GaussNewtonConfig {
            tol: self.tol,
            max_iters: self.max_iters,
            line_search: self.line_search,
            ..GaussNewtonConfig::default()
        }
    }
}

/// Sweep-driver ranges (all optional; defaults mirror the benchmark).
#[derive(Clone, Debug)]
pub struct SweepSection {
    pub l_w: Vec<f64>,
    pub l_s: Vec<f64>,
    /// (e_s, e_t) pairs.
    pub e_pairs: Vec<(f64, f64)>,
    pub gnat: bool,
    /// (e_rs, e_rt) pairs.
    pub e_r_pairs: Vec<(f64, f64)>,
    pub z_t: Vec<usize>,
    pub z_s: Vec<usize>,
    pub repetitions: usize,
}

#[derive(Clone, Debug)]
pub struct Config {
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub params: ParamsConfig,
    pub windows: WindowsConfig,
    pub energies: EnergiesConfig,
    pub gnat: GnatConfig,
    pub solver: SolverSection,
    pub sweep: SweepSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            grid: GridConfig {
                n_cells: 200,
                x_min: 0.0,
                x_max: 100.0,
            },
            time: TimeConfig {
                dt: 0.1,
                n_steps: 256,
                scheme: LmmScheme::Bdf1,
            },
            params: ParamsConfig {
                mu1_range: (2.0, 4.1),
                n_mu1: 20,
                mu2_range: (0.013, 0.02),
                n_mu2: 5,
                test: Parameters::new(4.0714, 0.0185),
                residual_n_mu1: 10,
                residual_n_mu2: 5,
            },
            windows: WindowsConfig { l_w: 1.6, l_s: 0.2 },
            energies: EnergiesConfig {
                e_s: 0.999,
                e_t: 0.999,
                e_rs: 0.999,
                e_rt: 0.999,
            },
            gnat: GnatConfig { z_t: 3, z_s: 50 },
            solver: SolverSection {
                tol: 1e-6,
                max_iters: 50,
                line_search: LineSearch::UnitStep,
            },
            sweep: SweepSection {
                l_w: vec![0.8, 1.6, 3.2],
                l_s: vec![0.2, 0.8],
                e_pairs: vec![(0.99, 0.99), (0.999, 0.999)],
                gnat: false,
                e_r_pairs: vec![(0.999, 0.999)],
                z_t: vec![3],
                z_s: vec![50],
                repetitions: 5,
            },
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse::<T>()
        .map_err(|_| Error::InvalidConfig(format!("cannot parse '{v}' for key '{key}'")))
}

fn parse_list_f64(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_num(key, s)).collect()
}

fn parse_list_usize(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|s| parse_num(key, s)).collect()
}

fn parse_pairs(key: &str, v: &str) -> Result<Vec<(f64, f64)>> {
    v.split(',')
        .map(|pair| {
            let parts: Vec<&str> = pair.split(':').collect();
            if parts.len() != 2 {
                return Err(Error::InvalidConfig(format!(
                    "key '{key}': expected a:b pairs, got '{pair}'"
                )));
            }
            Ok((parse_num(key, parts[0])?, parse_num(key, parts[1])?))
        })
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        other => Err(Error::InvalidConfig(format!(
            "key '{key}': expected a boolean, got '{other}'"
        ))),
    }
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_content(&text)
    }

    pub fn from_str_content(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        let mut current = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                current = line[1..line.len() - 1].trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::InvalidConfig(format!(
                    "line {}: expected key = value, got '{line}'",
                    lineno + 1
                )));
            };
            if current.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "line {}: key '{}' outside any [section]",
                    lineno + 1,
                    key.trim()
                )));
            }
            sections
                .entry(current.clone())
                .or_default()
                .push((key.trim().to_string(), value.trim().to_string()));
        }

        let mut cfg = Config::default();
        for (section, entries) in &sections {
            match section.as_str() {
                "grid" => {
                    for (k, v) in entries {
                        match k.as_str() {
                            "n_cells" => cfg.grid.n_cells = parse_num(k, v)?,
                            "x_min" => cfg.grid.x_min = parse_num(k, v)?,
                            "x_max" => cfg.grid.x_max = parse_num(k, v)?,
                            _ => return unknown(section, k),
                        }
                    }
                }
                "time" => {
                    for (k, v) in entries {
                        match k.as_str() {
                            "dt" => cfg.time.dt = parse_num(k, v)?,
                            "n_steps" => cfg.time.n_steps = parse_num(k, v)?,
                            "scheme" => cfg.time.scheme = LmmScheme::parse(v)?,
                            _ => return unknown(section, k),
                        }
                    }
                }
                "params" => {
                    for (k, v) in entries {
                        match k.as_str() {
                            "mu1_min" => cfg.params.mu1_range.0 = parse_num(k, v)?,
                            "mu1_max" => cfg.params.mu1_range.1 = parse_num(k, v)?,
                            "n_mu1" => cfg.params.n_mu1 = parse_num(k, v)?,
                            "mu2_min" => cfg.params.mu2_range.0 = parse_num(k, v)?,
                            "mu2_max" => cfg.params.mu2_range.1 = parse_num(k, v)?,
                            "n_mu2" => cfg.params.n_mu2 = parse_num(k, v)?,
                            "test_mu1" => cfg.params.test.mu1 = parse_num(k, v)?,
                            "test_mu2" => cfg.params.test.mu2 = parse_num(k, v)?,
                            "residual_n_mu1" => cfg.params.residual_n_mu1 = parse_num(k, v)?,
                            "residual_n_mu2" => cfg.params.residual_n_mu2 = parse_num(k, v)?,
                            _ => return unknown(section, k),
                        }
                    }
                }
                "windows" => {
                    for (k, v) in entries {
                        match k.as_str() {
                            "l_w" => cfg.windows.l_w = parse_num(k, v)?,
                            "l_s" => cfg.windows.l_s = parse_num(k, v)?,
                            _ => return unknown(section, k),
                        }
                    }
                }
                "energies" => {
                    for (k, v) in entries {
                        match k.as_str() {
                            "e_s" => cfg.energies.e_s = parse_num(k, v)?,
                            "e_t" => cfg.energies.e_t = parse_num(k, v)?,
                            "e_rs" => cfg.energies.e_rs = parse_num(k, v)?,
                            "e_rt" => cfg.energies.e_rt = parse_num(k, v)?,
                            _ => return unknown(section, k),
                        }
                    }
                }
                "gnat" => {
                    for (k, v) in entries {
                        match k.as_str() {
                            "z_t" => cfg.gnat.z_t = parse_num(k, v)?,
                            "z_s" => cfg.gnat.z_s = parse_num(k, v)?,
                            _ => return unknown(section, k),
                        }
                    }
                }
                "solver" => {
                    for (k, v) in entries {
                        match k.as_str() {
                            "tol" => cfg.solver.tol = parse_num(k, v)?,
                            "max_iters" => cfg.solver.max_iters = parse_num(k, v)?,
                            "line_search" => {
                                cfg.solver.line_search = match v.trim() {
                                    "unit_step" => LineSearch::UnitStep,
                                    "backtracking" => LineSearch::Backtracking,
                                    other => {
                                        return Err(Error::InvalidConfig(format!(
                                            "unknown line_search '{other}'"
                                        )))
                                    }
                                }
                            }
                            _ => return unknown(section, k),
                        }
                    }
                }
                "sweep" => {
                    for (k, v) in entries {
                        match k.as_str() {
                            "l_w" => cfg.sweep.l_w = parse_list_f64(k, v)?,
                            "l_s" => cfg.sweep.l_s = parse_list_f64(k, v)?,
                            "e_pairs" => cfg.sweep.e_pairs = parse_pairs(k, v)?,
                            "gnat" => cfg.sweep.gnat = parse_bool(k, v)?,
                            "e_r_pairs" => cfg.sweep.e_r_pairs = parse_pairs(k, v)?,
                            "z_t" => cfg.sweep.z_t = parse_list_usize(k, v)?,
                            "z_s" => cfg.sweep.z_s = parse_list_usize(k, v)?,
                            "repetitions" => cfg.sweep.repetitions = parse_num(k, v)?,
                            _ => return unknown(section, k),
                        }
                    }
                }
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown section '[{section}]'"
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.windows.l_s > self.windows.l_w {
            return Err(Error::InvalidConfig(format!(
                "l_s = {} exceeds l_w = {}",
                self.windows.l_s, self.windows.l_w
            )));
        }
        for e in [
            self.energies.e_s,
            self.energies.e_t,
            self.energies.e_rs,
            self.energies.e_rt,
        ] {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "energy fraction {e} outside (0, 1]"
                )));
            }
        }
        if self.sweep.l_w.is_empty() || self.sweep.l_s.is_empty() {
            return Err(Error::InvalidConfig(
                "sweep window-length lists must be nonempty".into(),
            ));
        }
        Ok(())
    }
}

fn unknown(section: &str, key: &str) -> Result<Config> {
    Err(Error::InvalidConfig(format!(
        "unknown key '{key}' in section '[{section}]'"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_benchmark_config() {
        let text = "\
[grid]
n_cells = 200
x_min = 0
x_max = 100

[time]
dt = 0.1
n_steps = 256
scheme = BDF1

[windows]
l_w = 25.6
l_s = 0.1

[energies]
e_s = 0.999
e_t = 0.99
";
        let cfg = Config::from_str_content(text).unwrap();
        assert_eq!(cfg.grid.n_cells, 200);
        assert_eq!(cfg.time.n_steps, 256);
        assert!((cfg.windows.l_w - 25.6).abs() < 1e-15);
        assert!((cfg.energies.e_t - 0.99).abs() < 1e-15);
        // Untouched sections keep defaults.
        assert_eq!(cfg.params.n_mu1, 20);
    }

    #[test]
    fn unknown_key_fails_closed() {
        let text = "[grid]\nn_cells = 100\nn_ghost = 2\n";
        assert!(Config::from_str_content(text).is_err());
        let text2 = "[grd]\nn_cells = 100\n";
        assert!(Config::from_str_content(text2).is_err());
    }

    #[test]
    fn sub_window_longer_than_window_rejected() {
        let text = "[windows]\nl_w = 0.1\nl_s = 0.2\n";
        assert!(Config::from_str_content(text).is_err());
    }

    #[test]
    fn sweep_lists_parse() {
        let text = "[sweep]\nl_w = 0.1, 0.8, 6.4\nl_s = 0.1\ne_pairs = 0.99:0.99, 0.999:0.999\ngnat = true\nz_t = 2, 4\nz_s = 20\nrepetitions = 3\n";
        let cfg = Config::from_str_content(text).unwrap();
        assert_eq!(cfg.sweep.l_w.len(), 3);
        assert_eq!(cfg.sweep.e_pairs[1], (0.999, 0.999));
        assert!(cfg.sweep.gnat);
        assert_eq!(cfg.sweep.repetitions, 3);
    }
}
