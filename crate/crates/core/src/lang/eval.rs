//! Validation and evaluation.
//!
//! Programs are compiled into slot-indexed trees once and then evaluated per
//! step, which keeps the hot training loop free of string lookups.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ast::{BinOp, CmpOp, Expr, ExprKind, Func, RewardProgram, TOTAL_COMPONENT};
use super::error::{RewardLangError, UnknownName};
use crate::env::ObservationSchema;

/// Named scalar bindings for evaluation. All values are finite.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalContext {
    values: BTreeMap<String, f64>,
}

impl EvalContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) -> Result<(), RewardLangError> {
        let name = name.into();
        if !value.is_finite() {
            return Err(RewardLangError::eval(
                name.clone(),
                format!("channel '{name}' is not finite"),
            ));
        }
        self.values.insert(name, value);
        Ok(())
    }

    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<Self, RewardLangError> {
        let mut ctx = Self::new();
        for (name, value) in pairs {
            ctx.insert(name, value)?;
        }
        Ok(ctx)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

/// Result of evaluating a program at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentValues {
    pub total: f64,
    /// Declaration order; excludes an explicit `total`.
    pub components: Vec<(String, f64)>,
}

impl ComponentValues {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.components
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }
}

/// Checks that every identifier is a schema channel or an earlier component.
pub fn validate_program(
    program: &RewardProgram,
    schema: &ObservationSchema,
) -> Result<(), RewardLangError> {
    let channels: Vec<&str> = schema.names().collect();
    check_names(program, &channels)
}

fn check_names(program: &RewardProgram, channels: &[&str]) -> Result<(), RewardLangError> {
    let mut declared: Vec<&str> = Vec::new();
    let mut unknown = Vec::new();
    for component in &program.components {
        component.body.for_each_ident(&mut |name, span| {
            if !declared.contains(&name) && !channels.contains(&name) {
                unknown.push(UnknownName {
                    name: name.to_string(),
                    span,
                });
            }
        });
        declared.push(&component.name);
    }
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(RewardLangError::unknown_identifiers(unknown))
    }
}

/// Evaluates `program` against named bindings.
pub fn evaluate_program(
    program: &RewardProgram,
    ctx: &EvalContext,
) -> Result<ComponentValues, RewardLangError> {
    let names: Vec<&str> = ctx.names().collect();
    let evaluator = Evaluator::compile(program, &names)?;
    let channels: Vec<f64> = ctx.values.values().copied().collect();
    let mut scratch = Vec::new();
    evaluator.evaluate(&channels, &mut scratch)?;
    Ok(evaluator.component_values(&scratch))
}

#[derive(Debug, Clone)]
enum Code {
    Const(f64),
    Slot(usize),
    Neg(Box<Code>),
    Bin(BinOp, Box<Code>, Box<Code>),
    Unary(Func, Box<Code>),
    Min(Box<Code>, Box<Code>),
    Max(Box<Code>, Box<Code>),
    Clamp(Box<Code>, Box<Code>, Box<Code>),
    Where {
        op: CmpOp,
        lhs: Box<Code>,
        rhs: Box<Code>,
        then: Box<Code>,
        otherwise: Box<Code>,
    },
}

#[derive(Debug, Clone)]
struct CompiledComponent {
    name: String,
    code: Code,
}

/// A program resolved against a fixed, ordered channel list.
///
/// Slots `0..channels` hold channel values, followed by one slot per
/// component in declaration order.
#[derive(Debug, Clone)]
pub struct Evaluator {
    channel_count: usize,
    components: Vec<CompiledComponent>,
    total_slot: Option<usize>,
}

impl Evaluator {
    pub fn compile(program: &RewardProgram, channels: &[&str]) -> Result<Self, RewardLangError> {
        check_names(program, channels)?;
        let mut components: Vec<CompiledComponent> = Vec::with_capacity(program.components.len());
        let mut total_slot = None;
        for (index, component) in program.components.iter().enumerate() {
            let code = lower(&component.body, &|name| {
                // Earlier components shadow channels of the same name.
                components
                    .iter()
                    .rposition(|c| c.name == name)
                    .map(|k| channels.len() + k)
                    .or_else(|| channels.iter().position(|c| *c == name))
            });
            if component.name == TOTAL_COMPONENT {
                total_slot = Some(channels.len() + index);
            }
            components.push(CompiledComponent {
                name: component.name.clone(),
                code,
            });
        }
        Ok(Self {
            channel_count: channels.len(),
            components,
            total_slot,
        })
    }

    pub fn channel_count(&self) -> usize {
        self.channel_count
    }

    /// Reported component names in declaration order (no `total`).
    pub fn component_names(&self) -> impl Iterator<Item = &str> {
        self.components
            .iter()
            .map(|c| c.name.as_str())
            .filter(|n| *n != TOTAL_COMPONENT)
    }

    /// Evaluates every component and returns the total. Component values are
    /// left in `scratch` for [`Evaluator::component_values`].
    pub fn evaluate(&self, channels: &[f64], scratch: &mut Vec<f64>) -> Result<f64, RewardLangError> {
        assert_eq!(channels.len(), self.channel_count, "channel count mismatch");
        scratch.clear();
        scratch.extend_from_slice(channels);
        for component in &self.components {
            let value = run(&component.code, scratch)
                .map_err(|msg| RewardLangError::eval(component.name.clone(), msg))?;
            scratch.push(value);
        }
        let total = match self.total_slot {
            Some(slot) => scratch[slot],
            None => {
                let mut sum = 0.0;
                for (k, component) in self.components.iter().enumerate() {
                    if component.name != TOTAL_COMPONENT {
                        sum += scratch[self.channel_count + k];
                    }
                }
                if !sum.is_finite() {
                    return Err(RewardLangError::eval(TOTAL_COMPONENT, "non-finite total reward"));
                }
                sum
            }
        };
        Ok(total)
    }

    /// Reads the reported component values out of an evaluated scratch buffer.
    pub fn component_values(&self, scratch: &[f64]) -> ComponentValues {
        let components = self
            .components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.name != TOTAL_COMPONENT)
            .map(|(k, c)| (c.name.clone(), scratch[self.channel_count + k]))
            .collect();
        let total = match self.total_slot {
            Some(slot) => scratch[slot],
            None => {
                let mut sum = 0.0;
                for (k, c) in self.components.iter().enumerate() {
                    if c.name != TOTAL_COMPONENT {
                        sum += scratch[self.channel_count + k];
                    }
                }
                sum
            }
        };
        ComponentValues { total, components }
    }

    /// Reported component values in declaration order.
    pub fn component_slice<'a>(&self, scratch: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        let offset = self.channel_count;
        let total_slot = self.total_slot;
        (offset..scratch.len()).filter(move |s| Some(*s) != total_slot).map(move |s| scratch[s])
    }
}

fn lower(expr: &Expr, resolve: &dyn Fn(&str) -> Option<usize>) -> Code {
    let boxed = |e: &Expr| Box::new(lower(e, resolve));
    match &expr.kind {
        ExprKind::Number(v) => Code::Const(*v),
        ExprKind::Ident(name) => {
            Code::Slot(resolve(name).expect("identifiers are checked before lowering"))
        }
        ExprKind::Neg(inner) => Code::Neg(boxed(inner)),
        ExprKind::Binary { op, lhs, rhs } => Code::Bin(*op, boxed(lhs), boxed(rhs)),
        ExprKind::Compare { .. } => unreachable!("comparisons only appear inside where()"),
        ExprKind::Call { func, args } => match func {
            Func::Min => Code::Min(boxed(&args[0]), boxed(&args[1])),
            Func::Max => Code::Max(boxed(&args[0]), boxed(&args[1])),
            Func::Clamp => Code::Clamp(boxed(&args[0]), boxed(&args[1]), boxed(&args[2])),
            Func::Where => {
                let ExprKind::Compare { op, lhs, rhs } = &args[0].kind else {
                    unreachable!("parser guarantees a comparison")
                };
                Code::Where {
                    op: *op,
                    lhs: boxed(lhs),
                    rhs: boxed(rhs),
                    then: boxed(&args[1]),
                    otherwise: boxed(&args[2]),
                }
            }
            unary => Code::Unary(*unary, boxed(&args[0])),
        },
    }
}

fn lesser(a: f64, b: f64) -> f64 {
    if b < a {
        b
    } else {
        a
    }
}

fn greater(a: f64, b: f64) -> f64 {
    if b > a {
        b
    } else {
        a
    }
}

fn finite(value: f64, what: &str) -> Result<f64, String> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("non-finite result in {what}"))
    }
}

fn run(code: &Code, slots: &[f64]) -> Result<f64, String> {
    Ok(match code {
        Code::Const(v) => *v,
        Code::Slot(s) => slots[*s],
        Code::Neg(inner) => -run(inner, slots)?,
        Code::Bin(op, lhs, rhs) => {
            let a = run(lhs, slots)?;
            let b = run(rhs, slots)?;
            match op {
                BinOp::Add => finite(a + b, "'+'")?,
                BinOp::Sub => finite(a - b, "'-'")?,
                BinOp::Mul => finite(a * b, "'*'")?,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err("division by zero".to_string());
                    }
                    finite(a / b, "'/'")?
                }
            }
        }
        Code::Unary(func, arg) => {
            let x = run(arg, slots)?;
            match func {
                Func::Abs => x.abs(),
                Func::Tanh => x.tanh(),
                Func::Exp => finite(x.exp(), "exp()")?,
                Func::Sqrt => {
                    if x < 0.0 {
                        return Err("sqrt of negative value".to_string());
                    }
                    x.sqrt()
                }
                Func::Sign => {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
                _ => unreachable!("multi-argument functions are lowered separately"),
            }
        }
        Code::Min(a, b) => {
            let a = run(a, slots)?;
            lesser(a, run(b, slots)?)
        }
        Code::Max(a, b) => {
            let a = run(a, slots)?;
            greater(a, run(b, slots)?)
        }
        Code::Clamp(x, lo, hi) => {
            let x = run(x, slots)?;
            let lo = run(lo, slots)?;
            let hi = run(hi, slots)?;
            lesser(greater(x, lo), hi)
        }
        Code::Where {
            op,
            lhs,
            rhs,
            then,
            otherwise,
        } => {
            let l = run(lhs, slots)?;
            let r = run(rhs, slots)?;
            let a = run(then, slots)?;
            let b = run(otherwise, slots)?;
            if op.holds(l, r) {
                a
            } else {
                b
            }
        }
    })
}
