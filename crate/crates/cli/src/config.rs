//! Run configuration: a TOML file with defaults for every field, overridden
//! by command-line flags, validated before any solve starts.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serrin_core::serrin::GridSpec;

use crate::error::CliError;

/// `NRHOxNT`, both powers of two in `16..=1024`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Grid {
    pub n_rho: usize,
    pub n_t: usize,
}

impl Grid {
    pub const fn new(n_rho: usize, n_t: usize) -> Self {
        Self { n_rho, n_t }
    }

    pub fn spec(self) -> GridSpec {
        GridSpec::new(self.n_rho, self.n_t)
    }
}

fn valid_size(v: usize) -> bool {
    v.is_power_of_two() && (16..=1024).contains(&v)
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("grid '{s}' is not of the form NRHOxNT"))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| format!("grid '{s}': '{v}' is not a positive integer"))
        };
        let grid = Grid::new(parse(a)?, parse(b)?);
        for v in [grid.n_rho, grid.n_t] {
            if !valid_size(v) {
                return Err(format!("grid size {v} must be a power of two between 16 and 1024"));
            }
        }
        Ok(grid)
    }
}

impl TryFrom<String> for Grid {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Grid> for String {
    fn from(g: Grid) -> String {
        g.to_string()
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.n_rho, self.n_t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SerrinSection {
    /// Radial dimension of the cross-section.
    pub n: usize,
    pub radius: f64,
    pub s_max: f64,
    pub ds: f64,
    /// Highest cosine mode of the profile.
    pub modes: usize,
    pub grid: Grid,
    /// Newton threshold on the Serrin defect.
    pub tolerance: f64,
}

impl Default for SerrinSection {
    fn default() -> Self {
        Self {
            n: 1,
            radius: 1.0,
            s_max: 0.1,
            ds: 0.02,
            modes: 8,
            grid: Grid::new(64, 64),
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySection {
    /// Torsion grid of the certificate; branch points found on another
    /// grid are re-solved on this one first.
    pub grid: Grid,
    /// Slab width in half periods.
    pub slab_half_periods: usize,
    pub tol_identity: f64,
    /// Calibration residual thresholds; `sup` is compared with `1 + tol`.
    pub tol_sup: f64,
    pub tol_calib: f64,
    /// Also run the relaxed total-variation minimization.
    pub tv: bool,
    pub tv_grid: Grid,
    /// Cell budget of the enumerated subset family; 0 disables it.
    pub oracle_cells: usize,
}

impl Default for CertifySection {
    fn default() -> Self {
        Self {
            grid: Grid::new(256, 256),
            slab_half_periods: 2,
            tol_identity: 1e-6,
            tol_sup: 1e-3,
            tol_calib: 5e-4,
            tv: false,
            tv_grid: Grid::new(128, 128),
            oracle_cells: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmcSection {
    pub eps_list: Vec<f64>,
    /// Grid of every shrunk problem.
    pub grid: Grid,
    pub tolerance: f64,
    /// Torsion grid used for `β` and the margins `c_ε`.
    pub torsion_grid: Grid,
}

impl Default for CmcSection {
    fn default() -> Self {
        Self {
            eps_list: vec![0.025, 0.0125, 0.00625, 0.003125],
            grid: Grid::new(256, 32),
            tolerance: 1e-10,
            torsion_grid: Grid::new(256, 256),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    pub workers: usize,
    pub serrin: SerrinSection,
    pub certify: CertifySection,
    pub cmc: CmcSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            workers: 1,
            serrin: SerrinSection::default(),
            certify: CertifySection::default(),
            cmc: CmcSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        let s = &self.serrin;
        if !(1..=3).contains(&s.n) {
            return fail(format!("serrin.n = {} must be 1, 2 or 3", s.n));
        }
        if !(s.radius > 0.0) {
            return fail(format!("serrin.radius = {} must be positive", s.radius));
        }
        if !(s.ds > 0.0) || !(s.s_max >= 0.0) {
            return fail(format!("serrin.ds = {} and serrin.s_max = {} must be positive", s.ds, s.s_max));
        }
        if s.modes < 2 {
            return fail(format!("serrin.modes = {} must be at least 2", s.modes));
        }
        let c = &self.certify;
        if c.slab_half_periods == 0 {
            return fail("certify.slab_half_periods must be positive".into());
        }
        let tolerances = [
            ("serrin.tolerance", s.tolerance),
            ("certify.tol_identity", c.tol_identity),
            ("certify.tol_sup", c.tol_sup),
            ("certify.tol_calib", c.tol_calib),
            ("cmc.tolerance", self.cmc.tolerance),
        ];
        for (name, v) in tolerances {
            if !(v > 0.0) || !v.is_finite() {
                return fail(format!("{name} = {v} must be positive"));
            }
        }
        let eps = &self.cmc.eps_list;
        if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
            return fail(format!("cmc.eps_list {eps:?} must be non-empty and positive"));
        }
        if eps.windows(2).any(|w| !(w[1] < w[0])) {
            return fail(format!("cmc.eps_list {eps:?} must be strictly decreasing"));
        }
        if self.workers == 0 {
            return fail("workers must be at least 1".into());
        }
        Ok(())
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_strings() {
        assert_eq!("64x128".parse::<Grid>().unwrap(), Grid::new(64, 128));
        assert!("100x64".parse::<Grid>().is_err());
        assert!("8x8".parse::<Grid>().is_err());
        assert!("2048x64".parse::<Grid>().is_err());
        assert!("64".parse::<Grid>().is_err());
        assert_eq!(Grid::new(16, 1024).to_string(), "16x1024");
    }

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), c);
    }

    #[test]
    fn partial_files_keep_defaults() {
        let c: RunConfig = toml::from_str("[serrin]\nn = 2\n[cmc]\neps_list = [0.1, 0.05]\n").unwrap();
        assert_eq!(c.serrin.n, 2);
        assert_eq!(c.serrin.modes, 8);
        assert_eq!(c.cmc.eps_list, vec![0.1, 0.05]);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        assert!(toml::from_str::<RunConfig>("[serrin]\ngrid = \"100x64\"\n").is_err());
        assert!(toml::from_str::<RunConfig>("[serrin]\nmodez = 3\n").is_err());
        let mut c = RunConfig::default();
        c.cmc.eps_list = vec![0.05, 0.1];
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let mut c = RunConfig::default();
        c.certify.tol_calib = 0.0;
        assert!(c.validate().is_err());
    }
}
