//! Canonical printing: one component per line, single spaces around `=` and
//! binary operators, and only the parentheses the tree shape requires.

use std::fmt::Write;

use super::ast::{Expr, ExprKind, RewardProgram};

pub fn print_program(program: &RewardProgram) -> String {
    let mut out = String::new();
    for (i, component) in program.components.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&component.name);
        out.push_str(" = ");
        write_expr(&mut out, &component.body);
    }
    out
}

pub fn print_expr(expr: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, expr);
    out
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_number(value: f64) -> String {
    format!("{value:?}")
}

fn write_expr(out: &mut String, expr: &Expr) {
    match &expr.kind {
        ExprKind::Number(v) => out.push_str(&format_number(*v)),
        ExprKind::Ident(name) => out.push_str(name),
        ExprKind::Neg(inner) => {
            out.push('-');
            match inner.kind {
                ExprKind::Number(_) | ExprKind::Ident(_) | ExprKind::Call { .. } => {
                    write_expr(out, inner)
                }
                _ => write_parenthesized(out, inner),
            }
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let prec = op.precedence();
            match &lhs.kind {
                ExprKind::Binary { op: inner, .. } if inner.precedence() < prec => {
                    write_parenthesized(out, lhs)
                }
                _ => write_expr(out, lhs),
            }
            let _ = write!(out, " {} ", op.symbol());
            // Left associativity: an equal-precedence right operand needs
            // parentheses to keep its grouping.
            match &rhs.kind {
                ExprKind::Binary { op: inner, .. } if inner.precedence() <= prec => {
                    write_parenthesized(out, rhs)
                }
                _ => write_expr(out, rhs),
            }
        }
        ExprKind::Compare { op, lhs, rhs } => {
            write_expr(out, lhs);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, rhs);
        }
        ExprKind::Call { func, args } => {
            out.push_str(func.name());
            out.push('(');
            for (i, arg) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, arg);
            }
            out.push(')');
        }
    }
}

fn write_parenthesized(out: &mut String, expr: &Expr) {
    out.push('(');
    write_expr(out, expr);
    out.push(')');
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;

    fn canon(src: &str) -> String {
        print_program(&parse_program(src).unwrap())
    }

    #[test]
    fn identity_case() {
        assert_eq!(canon("r = vel_x"), "r = vel_x");
    }

    #[test]
    fn precedence_forces_parentheses() {
        assert_eq!(canon("a = (vel_x + 1.0) * 2.0"), "a = (vel_x + 1.0) * 2.0");
        assert_eq!(canon("a = ((vel_x * 1.0)) + 2.0"), "a = vel_x * 1.0 + 2.0");
        assert_eq!(canon("a = vel_x - (vel_z - 1.0)"), "a = vel_x - (vel_z - 1.0)");
        assert_eq!(canon("a = (vel_x - vel_z) - 1.0"), "a = vel_x - vel_z - 1.0");
        assert_eq!(canon("a = vel_x / (vel_z * 2.0)"), "a = vel_x / (vel_z * 2.0)");
    }

    #[test]
    fn negation_and_calls() {
        assert_eq!(canon("a = -(vel_x+1)"), "a = -(vel_x + 1.0)");
        assert_eq!(canon("a = -(-vel_x)"), "a = -(-vel_x)");
        assert_eq!(canon("a = vel_x*-2"), "a = vel_x * -2.0");
        assert_eq!(
            canon("a = where(vel_z>=0.5,clamp(vel_x,0,1),-abs(pitch))"),
            "a = where(vel_z >= 0.5, clamp(vel_x, 0.0, 1.0), -abs(pitch))"
        );
    }

    #[test]
    fn multi_line_output() {
        assert_eq!(canon("# c\na = 1\n\nb = a*2\n"), "a = 1.0\nb = a * 2.0");
    }

    #[test]
    fn number_text_round_trips() {
        for v in [0.0, 0.1, 1.0, 1e-7, 2.5e20, 123456.789, f64::MAX, f64::MIN_POSITIVE] {
            let text = format_number(v);
            assert_eq!(text.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{text}");
            let p = parse_program(&format!("r = {text}")).unwrap();
            assert!(matches!(p.components[0].body.kind, ExprKind::Number(x) if x == v));
        }
    }
}
