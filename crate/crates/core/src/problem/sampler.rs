//! Closed-form node samplers for `psi`, `phi` and reference solutions.

use evalexpr::{
    build_operator_tree, ContextWithMutableFunctions, ContextWithMutableVariables,
    DefaultNumericTypes, Function, HashMapContext, Node, Value,
};
use serde::{Deserialize, Serialize};

use crate::discretize::{Grid, GridField};
use crate::error::{HessolveError, Result};

/// Sampler description as it appears in configuration files:
/// `{"kind": "...", "params": {...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    content = "params",
    rename_all = "snake_case",
    deny_unknown_fields
)]
pub enum SamplerSpec {
    Constant {
        value: f64,
    },
    /// `offset + slope . x`
    Affine {
        offset: f64,
        slope: Vec<f64>,
    },
    /// `scale/2 |x - center|^2 + offset`; `center` defaults to the origin.
    Quadratic {
        scale: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default)]
        offset: f64,
    },
    /// `amplitude |x - center|^power`
    RadialPower {
        center: Vec<f64>,
        amplitude: f64,
        power: f64,
    },
    /// Zero on the closed ball, `amplitude exp(-r^2 / (|x-c|^2 - r^2))` outside.
    BumpVanishing {
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
    },
    /// Arithmetic expression in `x`, `y`, `z`.
    Expression {
        expr: String,
    },
}

/// A validated, compiled sampler. Evaluation is pure and thread-safe.
#[derive(Clone, Debug)]
pub struct Sampler {
    spec: SamplerSpec,
    tree: Option<Node<DefaultNumericTypes>>,
}

impl SamplerSpec {
    pub fn compile(&self, n: usize) -> Result<Sampler> {
        Sampler::new(self.clone(), n)
    }
}

fn check_vec(name: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(HessolveError::Config(format!(
            "sampler parameter `{name}` needs {n} components, got {}",
            v.len()
        )));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(HessolveError::Config(format!(
            "sampler parameter `{name}` must be finite"
        )));
    }
    Ok(())
}

fn check_scalar(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(HessolveError::Config(format!(
            "sampler parameter `{name}` must be finite"
        )));
    }
    Ok(())
}

/// Rewrites bare integer literals as floats so that `1/2` means one half.
fn floatify(expr: &str) -> String {
    let chars: Vec<char> = expr.chars().collect();
    let mut out = String::with_capacity(expr.len() + 8);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let prev_ident = i > 0 && (chars[i - 1].is_alphanumeric() || chars[i - 1] == '_');
        if c.is_ascii_digit() && !prev_ident {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_float = false;
            if i < chars.len() && chars[i] == '.' {
                is_float = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    is_float = true;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            out.extend(&chars[start..i]);
            if !is_float {
                out.push_str(".0");
            }
        } else {
            out.push(c);
            i += 1;
        }
    }
    out
}

fn unary(f: fn(f64) -> f64) -> Function<DefaultNumericTypes> {
    Function::new(move |arg: &Value<DefaultNumericTypes>| Ok(Value::Float(f(arg.as_number()?))))
}

fn context(x: &[f64]) -> Result<HashMapContext<DefaultNumericTypes>> {
    let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
    let names = ["x", "y", "z"];
    for (d, name) in names.iter().enumerate() {
        let v = x.get(d).copied().unwrap_or(0.0);
        ctx.set_value((*name).into(), Value::Float(v))
            .map_err(|e| HessolveError::Config(e.to_string()))?;
    }
    let funcs: [(&str, fn(f64) -> f64); 9] = [
        ("exp", f64::exp),
        ("ln", f64::ln),
        ("sqrt", f64::sqrt),
        ("sin", f64::sin),
        ("cos", f64::cos),
        ("tan", f64::tan),
        ("abs", f64::abs),
        ("sinh", f64::sinh),
        ("cosh", f64::cosh),
    ];
    for (name, f) in funcs {
        ctx.set_function(name.into(), unary(f))
            .map_err(|e| HessolveError::Config(e.to_string()))?;
    }
    ctx.set_function(
        "pow".into(),
        Function::new(|arg: &Value<DefaultNumericTypes>| {
            let t = arg.as_fixed_len_tuple(2)?;
            Ok(Value::Float(t[0].as_number()?.powf(t[1].as_number()?)))
        }),
    )
    .map_err(|e| HessolveError::Config(e.to_string()))?;
    Ok(ctx)
}

impl Sampler {
    pub fn new(spec: SamplerSpec, n: usize) -> Result<Self> {
        let mut tree = None;
        match &spec {
            SamplerSpec::Constant { value } => check_scalar("value", *value)?,
            SamplerSpec::Affine { offset, slope } => {
                check_scalar("offset", *offset)?;
                check_vec("slope", slope, n)?;
            }
            SamplerSpec::Quadratic {
                scale,
                center,
                offset,
            } => {
                check_scalar("scale", *scale)?;
                check_scalar("offset", *offset)?;
                if let Some(c) = center {
                    check_vec("center", c, n)?;
                }
            }
            SamplerSpec::RadialPower {
                center,
                amplitude,
                power,
            } => {
                check_vec("center", center, n)?;
                check_scalar("amplitude", *amplitude)?;
                check_scalar("power", *power)?;
            }
            SamplerSpec::BumpVanishing {
                center,
                radius,
                amplitude,
            } => {
                check_vec("center", center, n)?;
                check_scalar("amplitude", *amplitude)?;
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(HessolveError::Config(
                        "bump_vanishing radius must be positive".into(),
                    ));
                }
            }
            SamplerSpec::Expression { expr } => {
                let node = build_operator_tree::<DefaultNumericTypes>(&floatify(expr))
                    .map_err(|e| HessolveError::Config(format!("expression `{expr}`: {e}")))?;
                tree = Some(node);
            }
        }
        let s = Sampler { spec, tree };
        // Catch evaluation errors (unknown identifiers, type errors) up front.
        s.eval(&vec![0.5; n])?;
        Ok(s)
    }

    pub fn spec(&self) -> &SamplerSpec {
        &self.spec
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let dist2 = |c: &[f64]| -> f64 { x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum() };
        Ok(match &self.spec {
            SamplerSpec::Constant { value } => *value,
            SamplerSpec::Affine { offset, slope } => {
                offset + x.iter().zip(slope).map(|(a, b)| a * b).sum::<f64>()
            }
            SamplerSpec::Quadratic {
                scale,
                center,
                offset,
            } => {
                let d2 = match center {
                    Some(c) => dist2(c),
                    None => x.iter().map(|a| a * a).sum(),
                };
                0.5 * scale * d2 + offset
            }
            SamplerSpec::RadialPower {
                center,
                amplitude,
                power,
            } => amplitude * dist2(center).sqrt().powf(*power),
            SamplerSpec::BumpVanishing {
                center,
                radius,
                amplitude,
            } => {
                let d2 = dist2(center);
                let r2 = radius * radius;
                if d2 <= r2 {
                    0.0
                } else {
                    amplitude * (-r2 / (d2 - r2)).exp()
                }
            }
            SamplerSpec::Expression { expr } => {
                let tree = self.tree.as_ref().expect("expression sampler is compiled");
                let ctx = context(x)?;
                tree.eval_number_with_context(&ctx)
                    .map_err(|e| HessolveError::Config(format!("expression `{expr}`: {e}")))?
                    as f64
            }
        })
    }

    /// Samples at every node of the grid.
    pub fn sample(&self, grid: &Grid) -> Result<GridField> {
        let n = grid.n();
        let values = (0..grid.len())
            .map(|i| self.eval(&grid.coords(i)[..n]))
            .collect::<Result<Vec<_>>>()?;
        GridField::new(*grid, values)
    }
}
