use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Cutoff, ReturnConvention, DEFAULT_TAIL_TOLERANCE};

/// Daily realized measures a model can draw on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Rv,
    Cj,
    Cv,
    RsPos,
    RsNeg,
    RexPos,
    RexNeg,
    RexMod,
    ReqPos,
    ReqNeg,
    ReqMod,
}

impl Component {
    pub const ALL: [Component; 11] = [
        Component::Rv,
        Component::Cj,
        Component::Cv,
        Component::RsPos,
        Component::RsNeg,
        Component::RexPos,
        Component::RexNeg,
        Component::RexMod,
        Component::ReqPos,
        Component::ReqNeg,
        Component::ReqMod,
    ];

    /// Short label used in column names.
    pub fn label(self) -> &'static str {
        match self {
            Component::Rv => "RV",
            Component::Cj => "CJ",
            Component::Cv => "CV",
            Component::RsPos => "RSpos",
            Component::RsNeg => "RSneg",
            Component::RexPos => "REXpos",
            Component::RexNeg => "REXneg",
            Component::RexMod => "REXmod",
            Component::ReqPos => "REQpos",
            Component::ReqNeg => "REQneg",
            Component::ReqMod => "REQmod",
        }
    }
}

/// Kernel-based price feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriceFeature {
    R1,
    R2,
}

/// Same-day regressors of the non-HAR regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SameDay {
    R1,
    R2,
    SqrtR2,
    /// |R1 − mean of R1 up to and including the day|.
    AbsDevR1,
    R1Squared,
    /// One-day simple return.
    Return,
    ReturnSquared,
}

impl SameDay {
    pub fn name(self) -> &'static str {
        match self {
            SameDay::R1 => "R1",
            SameDay::R2 => "R2",
            SameDay::SqrtR2 => "sqrt_R2",
            SameDay::AbsDevR1 => "absdev_R1",
            SameDay::R1Squared => "R1_sq",
            SameDay::Return => "r",
            SameDay::ReturnSquared => "r_sq",
        }
    }
}

/// One regressor block. Blocks carrying a kernel reference the model spec's
/// lambda vector by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    /// Lag and lag-means of a daily component.
    Har(Component),
    /// Lag and lag-means of R1 or R2.
    HarFeature(PriceFeature, usize),
    /// Lag and lag-means of the kernel transform of a component.
    HarPd(Component, usize),
    /// A single same-day regressor.
    SameDay(SameDay, Option<usize>),
}

/// Every regression in the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelFamily {
    PdvBase,
    PdvNull,
    HarRv,
    HarCj,
    HarRs,
    HarRex,
    HarReq,
    HarPdRv,
    HarPdCj,
    HarPdRs,
    HarPdRex,
    HarPdReq,
    M1,
    M2,
    M3,
    M4,
    M5,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 17] = [
        ModelFamily::PdvBase,
        ModelFamily::PdvNull,
        ModelFamily::HarRv,
        ModelFamily::HarCj,
        ModelFamily::HarRs,
        ModelFamily::HarRex,
        ModelFamily::HarReq,
        ModelFamily::HarPdRv,
        ModelFamily::HarPdCj,
        ModelFamily::HarPdRs,
        ModelFamily::HarPdRex,
        ModelFamily::HarPdReq,
        ModelFamily::M1,
        ModelFamily::M2,
        ModelFamily::M3,
        ModelFamily::M4,
        ModelFamily::M5,
    ];

    /// Regressor blocks in equation order.
    pub fn blocks(self) -> Vec<Block> {
        use Block::*;
        use Component::*;
        use PriceFeature::{R1 as F1, R2 as F2};
        match self {
            ModelFamily::PdvBase | ModelFamily::M2 => {
                vec![
                    SameDay(self::SameDay::R1, Some(0)),
                    SameDay(self::SameDay::R2, Some(1)),
                ]
            }
            ModelFamily::PdvNull => vec![
                SameDay(self::SameDay::Return, None),
                SameDay(self::SameDay::ReturnSquared, None),
            ],
            ModelFamily::HarRv => vec![Har(Rv)],
            ModelFamily::HarCj => vec![Har(Cv), Har(Cj)],
            ModelFamily::HarRs => vec![Har(RsPos), Har(RsNeg)],
            ModelFamily::HarRex => vec![Har(RexPos), Har(RexNeg), Har(RexMod)],
            ModelFamily::HarReq => vec![Har(ReqPos), Har(ReqNeg), Har(ReqMod)],
            ModelFamily::HarPdRv => vec![HarFeature(F2, 0)],
            ModelFamily::HarPdCj => vec![HarFeature(F2, 0), HarPd(Cj, 1), HarPd(Cv, 2)],
            ModelFamily::HarPdRs => vec![HarFeature(F1, 0), HarPd(RsPos, 1), HarPd(RsNeg, 2)],
            ModelFamily::HarPdRex => {
                vec![
                    HarFeature(F1, 0),
                    HarPd(RexPos, 1),
                    HarPd(RexNeg, 2),
                    HarPd(RexMod, 3),
                ]
            }
            ModelFamily::HarPdReq => {
                vec![
                    HarFeature(F1, 0),
                    HarPd(ReqPos, 1),
                    HarPd(ReqNeg, 2),
                    HarPd(ReqMod, 3),
                ]
            }
            ModelFamily::M1 => vec![
                SameDay(self::SameDay::R1, Some(0)),
                SameDay(self::SameDay::SqrtR2, Some(1)),
            ],
            ModelFamily::M3 => vec![SameDay(self::SameDay::R1, Some(0))],
            ModelFamily::M4 => vec![SameDay(self::SameDay::AbsDevR1, Some(0))],
            ModelFamily::M5 => vec![SameDay(self::SameDay::R1Squared, Some(0))],
        }
    }

    /// Number of kernel decays the family needs.
    pub fn lambda_count(self) -> usize {
        self.blocks()
            .iter()
            .filter_map(|b| match b {
                Block::HarFeature(_, i) | Block::HarPd(_, i) => Some(*i + 1),
                Block::SameDay(_, Some(i)) => Some(*i + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Which regressor block each lambda governs, for metadata.
    pub fn lambda_blocks(self) -> Vec<String> {
        let mut out = vec![String::new(); self.lambda_count()];
        for b in self.blocks() {
            match b {
                Block::HarFeature(f, i) => out[i] = format!("{f:?}"),
                Block::HarPd(c, i) => out[i] = format!("PD{}", c.label()),
                Block::SameDay(s, Some(i)) => {
                    let base = match s {
                        SameDay::R2 | SameDay::SqrtR2 => "R2",
                        _ => "R1",
                    };
                    out[i] = base.to_string();
                }
                _ => {}
            }
        }
        out
    }

    /// Regressions on same-day features (no lag structure).
    pub fn is_same_day(self) -> bool {
        self.blocks()
            .iter()
            .all(|b| matches!(b, Block::SameDay(..)))
    }

    /// Offset between a row's information date and its target date in an
    /// in-sample fit: 0 for same-day regressions, 1 for HAR families.
    pub fn default_shift(self) -> usize {
        if self.is_same_day() {
            0
        } else {
            1
        }
    }

    /// Components the family's regressors or target depend on.
    pub fn components(self) -> Vec<Component> {
        let mut out = vec![Component::Rv];
        for b in self.blocks() {
            if let Block::Har(c) | Block::HarPd(c, _) = b {
                out.push(c);
            }
        }
        out
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::PdvBase => "PDV",
            ModelFamily::PdvNull => "PDV-NULL",
            ModelFamily::HarRv => "HAR-RV",
            ModelFamily::HarCj => "HAR-CJ",
            ModelFamily::HarRs => "HAR-RS",
            ModelFamily::HarRex => "HAR-REX",
            ModelFamily::HarReq => "HAR-REQ",
            ModelFamily::HarPdRv => "HAR-PD-RV",
            ModelFamily::HarPdCj => "HAR-PD-CJ",
            ModelFamily::HarPdRs => "HAR-PD-RS",
            ModelFamily::HarPdRex => "HAR-PD-REX",
            ModelFamily::HarPdReq => "HAR-PD-REQ",
            ModelFamily::M1 => "M1",
            ModelFamily::M2 => "M2",
            ModelFamily::M3 => "M3",
            ModelFamily::M4 => "M4",
            ModelFamily::M5 => "M5",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        let fam = match norm.as_str() {
            "PDV" | "PDV_BASE" => ModelFamily::PdvBase,
            "PDV_NULL" => ModelFamily::PdvNull,
            "HAR_RV" => ModelFamily::HarRv,
            "HAR_CJ" => ModelFamily::HarCj,
            "HAR_RS" => ModelFamily::HarRs,
            "HAR_REX" => ModelFamily::HarRex,
            "HAR_REQ" => ModelFamily::HarReq,
            "HAR_PD_RV" => ModelFamily::HarPdRv,
            "HAR_PD_CJ" => ModelFamily::HarPdCj,
            "HAR_PD_RS" => ModelFamily::HarPdRs,
            "HAR_PD_REX" => ModelFamily::HarPdRex,
            "HAR_PD_REQ" => ModelFamily::HarPdReq,
            "M1" => ModelFamily::M1,
            "M2" => ModelFamily::M2,
            "M3" => ModelFamily::M3,
            "M4" => ModelFamily::M4,
            "M5" => ModelFamily::M5,
            _ => return Err(Error::InvalidParameter(format!("unknown model `{s}`"))),
        };
        Ok(fam)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shrinkage {
    #[default]
    None,
    Lasso,
}

/// Default lag set: daily, weekly and monthly.
pub const DEFAULT_HORIZONS: [usize; 3] = [1, 5, 22];

/// Declarative description of one regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    /// Kernel decays, one per kernel block in equation order.
    pub lambdas: Vec<f64>,
    /// Lag-mean lengths of every HAR-style block.
    pub horizons: Vec<usize>,
    pub shrinkage: Shrinkage,
    pub convention: ReturnConvention,
    pub cutoff: Cutoff,
}

impl ModelSpec {
    /// Model spec with unit decays, default horizons and no shrinkage.
    pub fn new(family: ModelFamily) -> Self {
        Self {
            family,
            lambdas: vec![1.0; family.lambda_count()],
            horizons: DEFAULT_HORIZONS.to_vec(),
            shrinkage: Shrinkage::None,
            convention: ReturnConvention::default(),
            cutoff: Cutoff::Tolerance(DEFAULT_TAIL_TOLERANCE),
        }
    }

    pub fn lasso(family: ModelFamily) -> Self {
        Self {
            shrinkage: Shrinkage::Lasso,
            ..Self::new(family)
        }
    }

    pub fn with_lambdas(mut self, lambdas: Vec<f64>) -> Self {
        self.lambdas = lambdas;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let need = self.family.lambda_count();
        if self.lambdas.len() != need {
            return Err(Error::InvalidParameter(format!(
                "{} needs {need} kernel decays, got {}",
                self.family,
                self.lambdas.len()
            )));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "kernel decay {l} must be > 0"
            )));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "invalid lag set {:?}",
                self.horizons
            )));
        }
        Ok(())
    }

    /// Display name, e.g. `HAR-PD-CJ` or `LASSO-HAR-PD-CJ`.
    pub fn name(&self) -> String {
        match self.shrinkage {
            Shrinkage::None => self.family.name().to_string(),
            Shrinkage::Lasso => format!("LASSO-{}", self.family.name()),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    /// Accepts a family name, optionally prefixed with `LASSO-`/`LASSO_`.
    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        match upper
            .strip_prefix("LASSO-")
            .or_else(|| upper.strip_prefix("LASSO_"))
        {
            Some(rest) => Ok(ModelSpec::lasso(rest.parse()?)),
            None => Ok(ModelSpec::new(upper.parse()?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_counts_follow_block_structure() {
        let expect = [
            (ModelFamily::HarRv, 0),
            (ModelFamily::HarPdRv, 1),
            (ModelFamily::HarPdCj, 3),
            (ModelFamily::HarPdRs, 3),
            (ModelFamily::HarPdRex, 4),
            (ModelFamily::HarPdReq, 4),
            (ModelFamily::PdvBase, 2),
            (ModelFamily::PdvNull, 0),
            (ModelFamily::M1, 2),
            (ModelFamily::M3, 1),
        ];
        for (fam, n) in expect {
            assert_eq!(fam.lambda_count(), n, "{fam}");
        }
        assert_eq!(
            ModelFamily::HarPdCj.lambda_blocks(),
            vec!["R2".to_string(), "PDCJ".into(), "PDCV".into()]
        );
    }

    #[test]
    fn names_round_trip() {
        for fam in ModelFamily::ALL {
            assert_eq!(fam.name().parse::<ModelFamily>().unwrap(), fam);
            let lasso = ModelSpec::lasso(fam);
            assert_eq!(lasso.name().parse::<ModelSpec>().unwrap(), lasso);
        }
        assert_eq!(
            "har_pd_cj".parse::<ModelFamily>().unwrap(),
            ModelFamily::HarPdCj
        );
        assert!("HAR_XYZ".parse::<ModelFamily>().is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = ModelSpec::new(ModelFamily::HarPdCj);
        assert!(s.validate().is_ok());
        s.lambdas.pop();
        assert!(s.validate().is_err());
        let s = ModelSpec::new(ModelFamily::M3).with_lambdas(vec![-1.0]);
        assert!(s.validate().is_err());
    }
}
