use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    CoefficientModel, FamilyId, Kernel, KernelMask, LinearDrift, ModelError, Point, PositivityParams,
    QuadraticFitness, TabulatedKernel,
};
use crate::semiflow::TruncatedBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxConfig {
    pub half_width: f64,
    pub cells_per_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedKernelConfig {
    pub half_width: f64,
    pub cells_per_dim: usize,
    /// Dense row-major `n^d × n^d` array; rows are sources `y`, columns targets `x`.
    pub values: Vec<f64>,
}

/// JSON model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: String,
    pub period: f64,
    pub dimension: usize,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    #[serde(rename = "box")]
    pub box_: BoxConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabulated: Option<TabulatedKernelConfig>,
}

impl ModelConfig {
    pub fn truncated_box(&self) -> Result<TruncatedBox, ModelError> {
        TruncatedBox::new(self.box_.half_width, self.box_.cells_per_dim, self.dimension).map_err(|e| {
            ModelError::InvalidParameter {
                name: "box".into(),
                reason: e.to_string(),
            }
        })
    }
}

const COMMON: &[&str] = &["fitness_shift", "fitness_modulation", "kernel_mask", "r0", "r1", "x0"];

struct Params<'a> {
    map: &'a BTreeMap<String, Value>,
}

impl Params<'_> {
    fn check_known(&self, family: &[&str]) -> Result<(), ModelError> {
        for key in self.map.keys() {
            if !family.contains(&key.as_str()) && !COMMON.contains(&key.as_str()) {
                return Err(ModelError::InvalidParameter {
                    name: key.clone(),
                    reason: "not a parameter of this family".into(),
                });
            }
        }
        Ok(())
    }

    fn opt(&self, name: &str) -> Result<Option<f64>, ModelError> {
        match self.map.get(name) {
            None => Ok(None),
            Some(v) => match v.as_f64() {
                Some(x) if x.is_finite() => Ok(Some(x)),
                _ => Err(ModelError::InvalidParameter {
                    name: name.into(),
                    reason: format!("expected a finite number, got {v}"),
                }),
            },
        }
    }

    fn req(&self, name: &str) -> Result<f64, ModelError> {
        self.opt(name)?.ok_or_else(|| ModelError::MissingParameter(name.into()))
    }

    fn or(&self, name: &str, default: f64) -> Result<f64, ModelError> {
        Ok(self.opt(name)?.unwrap_or(default))
    }

    fn positive(&self, name: &str, value: f64) -> Result<f64, ModelError> {
        if value > 0.0 {
            Ok(value)
        } else {
            Err(ModelError::InvalidParameter {
                name: name.into(),
                reason: format!("must be positive, got {value}"),
            })
        }
    }

    fn point(&self, name: &str) -> Result<Option<Point>, ModelError> {
        let Some(v) = self.map.get(name) else {
            return Ok(None);
        };
        let bad = || ModelError::InvalidParameter {
            name: name.into(),
            reason: format!("expected an array of one or two numbers, got {v}"),
        };
        let arr = v.as_array().ok_or_else(bad)?;
        if arr.is_empty() || arr.len() > 2 {
            return Err(bad());
        }
        let mut p = [0.0; 2];
        for (slot, x) in p.iter_mut().zip(arr) {
            *slot = x.as_f64().ok_or_else(bad)?;
        }
        Ok(Some(p))
    }

    fn mask(&self) -> Result<Option<KernelMask>, ModelError> {
        match self.map.get("kernel_mask") {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) if s == "x_greater_than_y" => Ok(Some(KernelMask::XGreaterThanY)),
            Some(v) => Err(ModelError::InvalidParameter {
                name: "kernel_mask".into(),
                reason: format!("unknown mask {v}"),
            }),
        }
    }
}

/// Instantiates a coefficient model from its JSON description.
pub fn build_model(config: &ModelConfig) -> Result<CoefficientModel, ModelError> {
    let family = FamilyId::parse(&config.family)?;
    if !(config.period > 0.0 && config.period.is_finite()) {
        return Err(ModelError::NonPositivePeriod(config.period));
    }
    if !(1..=2).contains(&config.dimension) {
        return Err(ModelError::InvalidDimension(config.dimension));
    }
    let p = Params { map: &config.params };

    let (drift, fitness, kernel, default_r0) = match family {
        FamilyId::GaussianConfined | FamilyId::Autonomous => {
            let autonomous = family == FamilyId::Autonomous;
            let mut names = vec!["kappa", "a0", "a2", "beta", "sigma"];
            if !autonomous {
                names.extend(["c", "a_mod"]);
            }
            p.check_known(&names)?;
            let sigma = p.positive("sigma", p.req("sigma")?)?;
            let beta = p.req("beta")?;
            let drift = LinearDrift {
                kappa: p.req("kappa")?,
                shift: if autonomous { 0.0 } else { p.req("c")? },
            };
            let fitness = QuadraticFitness {
                a0: p.req("a0")?,
                a_mod: if autonomous { 0.0 } else { p.or("a_mod", 1.0)? },
                a2: p.req("a2")?,
                shift: 0.0,
                modulation: 0.0,
            };
            (drift, fitness, Kernel::Convolution { beta, sigma }, sigma)
        }
        FamilyId::RankOne => {
            p.check_known(&["a0", "beta", "k_sigma"])?;
            let sigma = p.positive("k_sigma", p.or("k_sigma", 0.3)?)?;
            let fitness = QuadraticFitness {
                a0: p.req("a0")?,
                a_mod: 0.0,
                a2: 0.0,
                shift: 0.0,
                modulation: 0.0,
            };
            let drift = LinearDrift { kappa: 0.0, shift: 0.0 };
            (drift, fitness, Kernel::RankOne { beta: p.req("beta")?, sigma }, sigma)
        }
        FamilyId::CustomTabulated => {
            p.check_known(&["kappa", "c", "a0", "a_mod", "a2"])?;
            let tab = config
                .tabulated
                .as_ref()
                .ok_or_else(|| ModelError::MissingParameter("tabulated".into()))?;
            let table = tabulated_kernel(tab, config.dimension)?;
            let h = 2.0 * tab.half_width / tab.cells_per_dim as f64;
            let drift = LinearDrift {
                kappa: p.or("kappa", 0.0)?,
                shift: p.or("c", 0.0)?,
            };
            let fitness = QuadraticFitness {
                a0: p.or("a0", 0.0)?,
                a_mod: p.or("a_mod", 0.0)?,
                a2: p.or("a2", 0.0)?,
                shift: 0.0,
                modulation: 0.0,
            };
            (drift, fitness, Kernel::Tabulated(Arc::new(table)), 2.0 * h)
        }
    };

    let r0 = p.positive("r0", p.or("r0", default_r0)?)?;
    let r1 = p.positive("r1", p.or("r1", r0 / 2.0)?)?;
    if r1 >= r0 {
        return Err(ModelError::InvalidParameter {
            name: "r1".into(),
            reason: format!("must lie in (0, r0 = {r0}), got {r1}"),
        });
    }
    let mut x0 = p.point("x0")?.unwrap_or([0.0, 0.0]);
    if config.dimension == 1 {
        x0[1] = 0.0;
    }

    let mut model = CoefficientModel {
        period: config.period,
        dimension: config.dimension,
        family,
        drift,
        fitness_law: fitness,
        kernel_law: kernel,
        mask: p.mask()?,
        positivity: PositivityParams { x0, r0, r1 },
    };
    model.fitness_law.shift = p.or("fitness_shift", 0.0)?;
    model.fitness_law.modulation = p.or("fitness_modulation", 0.0)?;
    Ok(model)
}

fn tabulated_kernel(tab: &TabulatedKernelConfig, dimension: usize) -> Result<TabulatedKernel, ModelError> {
    if !(tab.half_width > 0.0) || tab.cells_per_dim == 0 {
        return Err(ModelError::InvalidTabulation("declared grid must be nonempty".into()));
    }
    let n = tab.cells_per_dim.pow(dimension as u32);
    if tab.values.len() != n * n {
        return Err(ModelError::InvalidTabulation(format!(
            "expected {} values for {} nodes, got {}",
            n * n,
            n,
            tab.values.len()
        )));
    }
    if let Some((index, &value)) = tab.values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(ModelError::NegativeTabulatedKernel { index, value });
    }
    Ok(TabulatedKernel {
        half_width: tab.half_width,
        cells_per_dim: tab.cells_per_dim,
        dimension,
        values: tab.values.clone(),
    })
}
