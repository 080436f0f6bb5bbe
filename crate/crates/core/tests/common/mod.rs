//! Random reward programs and a deliberately naive reference interpreter.
//!
//! The interpreter works on its own tree type and string-keyed bindings and
//! shares no code with the library evaluator.

#![allow(dead_code)]

pub mod golden;

use std::collections::HashMap;

use bilevel_core::env::CHANNEL_NAMES;
use proptest::prelude::*;

#[derive(Debug, Clone)]
pub enum T {
    Num(f64),
    Var(String),
    Neg(Box<T>),
    Bin(char, Box<T>, Box<T>),
    Call(&'static str, Vec<T>),
    Where(&'static str, Box<T>, Box<T>, Box<T>, Box<T>),
}

impl T {
    /// Nesting depth, counting the comparison inside `where` as a level.
    pub fn depth(&self) -> usize {
        match self {
            T::Num(_) | T::Var(_) => 1,
            T::Neg(a) => 1 + a.depth(),
            T::Bin(_, a, b) => 1 + a.depth().max(b.depth()),
            T::Call(_, args) => 1 + args.iter().map(T::depth).max().unwrap_or(0),
            T::Where(_, l, r, a, b) => 1 + (1 + l.depth().max(r.depth())).max(a.depth()).max(b.depth()),
        }
    }

    fn rename(self, f: &impl Fn(String) -> String) -> T {
        let b = |t: Box<T>| Box::new(t.rename(f));
        match self {
            T::Var(v) => T::Var(f(v)),
            T::Num(n) => T::Num(n),
            T::Neg(a) => T::Neg(b(a)),
            T::Bin(op, l, r) => T::Bin(op, b(l), b(r)),
            T::Call(name, args) => T::Call(name, args.into_iter().map(|a| a.rename(f)).collect()),
            T::Where(op, l, r, x, y) => T::Where(op, b(l), b(r), b(x), b(y)),
        }
    }
}

/// Fully parenthesized source text.
pub fn render(t: &T) -> String {
    match t {
        T::Num(n) => format!("{n:?}"),
        T::Var(v) => v.clone(),
        T::Neg(a) => format!("(-{})", render(a)),
        T::Bin(op, a, b) => format!("({} {op} {})", render(a), render(b)),
        T::Call(name, args) => {
            let args: Vec<String> = args.iter().map(render).collect();
            format!("{name}({})", args.join(", "))
        }
        T::Where(op, l, r, a, b) => {
            format!("where({} {op} {}, {}, {})", render(l), render(r), render(a), render(b))
        }
    }
}

pub type Oracle = Result<f64, String>;

fn ok_finite(v: f64) -> Oracle {
    if v.is_finite() {
        Ok(v)
    } else {
        Err("non-finite".into())
    }
}

/// Reference semantics: arguments left to right, both `where` branches
/// always evaluated, division by zero and non-finite results are errors,
/// `min(a, b)` is `b` only when `b < a`.
pub fn oracle(t: &T, env: &HashMap<String, f64>) -> Oracle {
    match t {
        T::Num(n) => Ok(*n),
        T::Var(v) => Ok(env[v]),
        T::Neg(a) => Ok(-oracle(a, env)?),
        T::Bin(op, a, b) => {
            let x = oracle(a, env)?;
            let y = oracle(b, env)?;
            match op {
                '+' => ok_finite(x + y),
                '-' => ok_finite(x - y),
                '*' => ok_finite(x * y),
                '/' if y == 0.0 => Err("division by zero".into()),
                '/' => ok_finite(x / y),
                _ => unreachable!(),
            }
        }
        T::Call(name, args) => {
            let v: Vec<f64> = args.iter().map(|a| oracle(a, env)).collect::<Result<_, _>>()?;
            let min = |a: f64, b: f64| if b < a { b } else { a };
            let max = |a: f64, b: f64| if b > a { b } else { a };
            match *name {
                "abs" => Ok(v[0].abs()),
                "tanh" => Ok(v[0].tanh()),
                "exp" => ok_finite(v[0].exp()),
                "sqrt" if v[0] < 0.0 => Err("sqrt of negative".into()),
                "sqrt" => Ok(v[0].sqrt()),
                "sign" => Ok(if v[0] > 0.0 {
                    1.0
                } else if v[0] < 0.0 {
                    -1.0
                } else {
                    0.0
                }),
                "min" => Ok(min(v[0], v[1])),
                "max" => Ok(max(v[0], v[1])),
                "clamp" => Ok(min(max(v[0], v[1]), v[2])),
                _ => unreachable!(),
            }
        }
        T::Where(op, l, r, a, b) => {
            let (l, r) = (oracle(l, env)?, oracle(r, env)?);
            let (a, b) = (oracle(a, env)?, oracle(b, env)?);
            let holds = match *op {
                "<" => l < r,
                "<=" => l <= r,
                ">" => l > r,
                ">=" => l >= r,
                "==" => l == r,
                _ => unreachable!(),
            };
            Ok(if holds { a } else { b })
        }
    }
}

#[derive(Debug, Clone)]
pub struct TProgram {
    pub components: Vec<(String, T)>,
}

impl TProgram {
    pub fn source(&self) -> String {
        self.components
            .iter()
            .map(|(name, body)| format!("{name} = {}\n", render(body)))
            .collect()
    }

    /// Total and per-component values (explicit `total` excluded).
    pub fn oracle(&self, channels: &[f64]) -> Result<(f64, Vec<f64>), String> {
        let mut env: HashMap<String, f64> = CHANNEL_NAMES
            .iter()
            .zip(channels)
            .map(|(n, v)| (n.to_string(), *v))
            .collect();
        let mut values = Vec::new();
        let mut total = None;
        for (name, body) in &self.components {
            let v = oracle(body, &env)?;
            env.insert(name.clone(), v);
            if name == "total" {
                total = Some(v);
            } else {
                values.push(v);
            }
        }
        let total = match total {
            Some(t) => t,
            None => ok_finite(values.iter().fold(0.0, |acc, v| acc + v))?,
        };
        Ok((total, values))
    }
}

/// Identifiers a generated expression may draw from; component references
/// are remapped to channels when they would point forward.
const POOL: [&str; 13] = [
    "torso_z",
    "vel_x",
    "vel_z",
    "pitch",
    "ang_vel",
    "up_proj",
    "contact",
    "action_prev_0",
    "action_prev_1",
    "c0",
    "c1",
    "c2",
    "c3",
];

pub fn number() -> impl Strategy<Value = f64> {
    prop_oneof![
        4 => (0u32..8).prop_map(f64::from),
        4 => 0.0..10.0f64,
        1 => prop::num::f64::POSITIVE | prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
    ]
}

fn leaf() -> BoxedStrategy<T> {
    prop_oneof![
        number().prop_map(T::Num),
        prop::sample::select(&POOL[..]).prop_map(|s| T::Var(s.to_string())),
    ]
    .boxed()
}

/// Expressions of depth at most `depth`.
pub fn expr(depth: usize) -> BoxedStrategy<T> {
    if depth <= 1 {
        return leaf();
    }
    let sub = || expr(depth - 1);
    let b = |t: T| Box::new(t);
    let mut options: Vec<(u32, BoxedStrategy<T>)> = vec![
        (3, leaf()),
        (1, sub().prop_map(move |a| T::Neg(b(a))).boxed()),
        (
            4,
            (prop::sample::select(vec!['+', '-', '*', '/']), sub(), sub())
                .prop_map(move |(op, l, r)| T::Bin(op, b(l), b(r)))
                .boxed(),
        ),
        (
            2,
            (prop::sample::select(vec!["abs", "tanh", "exp", "sqrt", "sign"]), sub())
                .prop_map(|(f, a)| T::Call(f, vec![a]))
                .boxed(),
        ),
        (
            1,
            (prop::sample::select(vec!["min", "max"]), sub(), sub())
                .prop_map(|(f, a, c)| T::Call(f, vec![a, c]))
                .boxed(),
        ),
        (
            1,
            (sub(), sub(), sub())
                .prop_map(|(x, lo, hi)| T::Call("clamp", vec![x, lo, hi]))
                .boxed(),
        ),
    ];
    if depth >= 3 {
        options.push((
            2,
            (
                prop::sample::select(vec!["<", "<=", ">", ">=", "=="]),
                expr(depth - 2),
                expr(depth - 2),
                sub(),
                sub(),
            )
                .prop_map(move |(op, l, r, x, y)| T::Where(op, b(l), b(r), b(x), b(y)))
                .boxed(),
        ));
    }
    proptest::strategy::Union::new_weighted(options).boxed()
}

/// Programs of 1 to 4 components with bodies of depth at most `depth`,
/// sometimes ending in an explicit `total`.
pub fn program(depth: usize) -> impl Strategy<Value = TProgram> {
    (prop::collection::vec(expr(depth), 1..=4), any::<bool>()).prop_map(|(bodies, explicit_total)| {
        let n = bodies.len();
        let components = bodies
            .into_iter()
            .enumerate()
            .map(|(k, body)| {
                let body = body.rename(&|v: String| match v.strip_prefix('c').and_then(|i| i.parse::<usize>().ok()) {
                    Some(j) if j >= k => CHANNEL_NAMES[j % CHANNEL_NAMES.len()].to_string(),
                    _ => v,
                });
                let name = if explicit_total && k + 1 == n && n > 1 {
                    "total".to_string()
                } else {
                    format!("c{k}")
                };
                (name, body)
            })
            .collect();
        TProgram { components }
    })
}

/// Observation vectors: mostly moderate values, sometimes exact zeros.
pub fn channels() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![3 => -10.0..10.0f64, 1 => Just(0.0), 1 => Just(1.0)], CHANNEL_NAMES.len())
}
