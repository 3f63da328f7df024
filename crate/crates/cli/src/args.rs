use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use ruq_core::{CalibrationResult, Dataset64, Rollout64, ScoreParams64, Split, Variant, DOF};

/// A problem with the invocation itself; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: ruq_core::Error| e.to_string())
}

/// Scoring hyperparameters given on the command line.
#[derive(Args, Debug, Clone, Default)]
pub struct ParamArgs {
    /// Score variant: mean, sw, atr, sw-atr or weighted
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Window length in steps
    #[arg(long)]
    pub w: Option<usize>,
    /// Weight of steps whose action sign flipped
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Seven comma-separated DoF weights
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub beta: Option<Vec<f64>>,
}

impl ParamArgs {
    pub fn is_empty(&self) -> bool {
        self.variant.is_none() && self.w.is_none() && self.alpha.is_none() && self.beta.is_none()
    }

    pub fn beta_row(&self) -> anyhow::Result<Option<[f64; DOF]>> {
        match &self.beta {
            None => Ok(None),
            Some(v) => <[f64; DOF]>::try_from(v.as_slice())
                .map(Some)
                .map_err(|_| usage(format!("--beta needs {DOF} values, got {}", v.len()))),
        }
    }

    /// Builds parameters for `variant`, naming the first missing flag.
    pub fn for_variant(&self, variant: Variant) -> anyhow::Result<ScoreParams64> {
        let params = ScoreParams64 {
            variant,
            w: variant.needs_window().then_some(self.w).flatten(),
            alpha: variant.needs_alpha().then_some(self.alpha).flatten(),
            beta: if variant.needs_beta() { self.beta_row()? } else { None },
        };
        for (needed, present, flag) in [
            (variant.needs_window(), params.w.is_some(), "--w"),
            (variant.needs_alpha(), params.alpha.is_some(), "--alpha"),
            (variant.needs_beta(), params.beta.is_some(), "--beta"),
        ] {
            if needed && !present {
                return Err(usage(format!("{flag} is required for variant `{variant}`")));
            }
        }
        params.validate()?;
        Ok(params)
    }

    pub fn params(&self) -> anyhow::Result<ScoreParams64> {
        let variant = self.variant.ok_or_else(|| usage("--variant is required"))?;
        self.for_variant(variant)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    pub fn name(self) -> &'static str {
        match self {
            SplitArg::Train => "train",
            SplitArg::Test => "test",
            SplitArg::All => "all",
        }
    }

    pub fn select(self, ds: &Dataset64) -> Vec<Rollout64> {
        match self {
            SplitArg::Train => ds.part(Split::Train),
            SplitArg::Test => ds.part(Split::Test),
            SplitArg::All => ds.rollouts().to_vec(),
        }
    }
}

pub fn load_dataset(path: &Path, seed: u64) -> anyhow::Result<Dataset64> {
    if !path.is_file() {
        return Err(usage(format!("--data: no such file `{}`", path.display())));
    }
    Ok(ruq_core::data::load(path)?.ensure_split(seed)?)
}

pub fn load_calibration(path: &PathBuf) -> anyhow::Result<CalibrationResult> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("--calibration: cannot read `{}`: {e}", path.display())))?;
    Ok(CalibrationResult::from_json(&text)?)
}

/// Parameters and threshold from a calibration file, from explicit flags, or
/// from the file with `--gamma` overriding its threshold. The threshold is
/// never fitted here.
pub fn deployed(
    calibration: Option<&PathBuf>,
    params: &ParamArgs,
    gamma: Option<f64>,
) -> anyhow::Result<(ScoreParams64, f64)> {
    match calibration {
        Some(path) => {
            if !params.is_empty() {
                return Err(usage("--calibration cannot be combined with --variant/--w/--alpha/--beta"));
            }
            let cal = load_calibration(path)?;
            Ok((cal.params(), gamma.unwrap_or(cal.gamma_star)))
        }
        None => {
            let p = params.params()?;
            let g = gamma.ok_or_else(|| usage("--gamma is required when parameters are given explicitly"))?;
            if !g.is_finite() {
                return Err(usage("--gamma must be finite"));
            }
            Ok((p, g))
        }
    }
}

/// One sweep axis: `name=lo..hi:step`, `name=lo..hi` (step 1) or
/// `name=v1,v2,...`.
pub fn parse_axis(spec: &str) -> anyhow::Result<(String, Vec<f64>)> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| usage(format!("--grid `{spec}`: expected name=values")))?;
    let name = name.trim().to_ascii_lowercase();
    let bad = |what: &str| usage(format!("--grid `{spec}`: {what}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("`{}` is not a number", s.trim())));
    let values = if let Some((lo, rest)) = values.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (num(hi)?, num(step)?),
            None => (num(rest)?, 1.0),
        };
        let lo = num(lo)?;
        if !(step > 0.0 && step.is_finite()) {
            return Err(bad("step must be positive"));
        }
        let n = ((hi - lo) / step + 1e-9).floor();
        if n.is_nan() || n < 0.0 {
            return Err(bad("empty range"));
        }
        (0..=n as usize)
            .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
            .collect()
    } else {
        values.split(',').map(num).collect::<anyhow::Result<Vec<_>>>()?
    };
    if values.is_empty() {
        return Err(bad("no values"));
    }
    Ok((name, values))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub w: Vec<usize>,
    pub alpha: Vec<f64>,
}

impl Grid {
    pub fn parse(specs: &[String]) -> anyhow::Result<Self> {
        let (mut w, mut alpha) = (None, None);
        for spec in specs {
            let (name, values) = parse_axis(spec)?;
            let slot = match name.as_str() {
                "w" => &mut w,
                "alpha" => &mut alpha,
                other => return Err(usage(format!("--grid: unknown axis `{other}` (expected w or alpha)"))),
            };
            if slot.replace(values).is_some() {
                return Err(usage(format!("--grid: axis `{name}` given twice")));
            }
        }
        let w = match w {
            Some(v) => v
                .into_iter()
                .map(|x| {
                    if x >= 1.0 && x.fract() == 0.0 {
                        Ok(x as usize)
                    } else {
                        Err(usage(format!("--grid: w = {x} is not a positive integer")))
                    }
                })
                .collect::<anyhow::Result<Vec<_>>>()?,
            None => (1..=10).map(|i| 10 * i).collect(),
        };
        let alpha = alpha.unwrap_or_else(|| (1..=9).map(|i| i as f64 / 10.0).collect());
        if let Some(a) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(usage(format!("--grid: alpha = {a} outside [0, 1]")));
        }
        Ok(Self { w, alpha })
    }
}
