//! Grammar description handed to the reward-writing backend.

/// Info string of the fenced block that carries a reward program in replies.
pub const PROGRAM_FENCE_TAG: &str = "reward";

pub const GRAMMAR_VERSION: &str = "reward-lang v1";

const HELP: &str = "\
Reward functions are written in reward-lang v1, a small expression language.

A reward function is a list of named components, one per line:

    name = expression

- Names match [a-z_][a-z0-9_]* and must be unique.
- An expression may use the observation variables listed for the environment
  and any component declared on an earlier line. Nothing else is available.
- The total reward is the sum of all components, in order. To weight or
  combine components differently, declare a final component named `total`;
  its value is then used as the total reward instead of the sum.
- Every value is a scalar (a single floating-point number).
- Operators: + - * / and unary minus, with the usual precedence. Use
  parentheses to group.
- Numbers: 1, 0.5, 2.5e-3. Comments start with # and run to the end of the line.

Functions:
    abs(x)   exp(x)   tanh(x)   sqrt(x)   sign(x)
    min(a, b)   max(a, b)
    clamp(x, lo, hi)      x limited to the range [lo, hi]
    where(cond, a, b)     a if cond holds, otherwise b; cond is a comparison
                          such as vel_z > 0.5 using <, <=, >, >= or ==

Both branches of where(cond, a, b) are always evaluated, so guard every
denominator: division by zero, sqrt of a negative value, or any overflow is
an error, not a silent clamp.

Example:

```reward
forward = vel_x
hop = where(vel_z > 0.5, 0.5 * vel_z, 0.0)
upright = 0.2 * up_proj
```

Reply with exactly one fenced code block tagged `reward` (```reward ... ```)
that contains the complete reward function.";

/// Fixed, versioned description of the reward language and reply format.
pub fn grammar_help_text() -> &'static str {
    HELP
}

/// Short example used where the prompts ask for a reward function signature.
pub const SIGNATURE_EXAMPLE: &str = "```reward\nforward = vel_x\nupright = 0.1 * up_proj\n```";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{observation_schema, EnvConfig};
    use crate::lang::{parse_program, validate_program};

    #[test]
    fn mentions_where_and_clamp_and_fence() {
        let text = grammar_help_text();
        assert!(text.contains("where(cond, a, b)"));
        assert!(text.contains("clamp(x, lo, hi)"));
        assert!(text.contains(&format!("```{PROGRAM_FENCE_TAG}")));
        assert!(text.contains(GRAMMAR_VERSION));
        assert_eq!(text.as_bytes(), grammar_help_text().as_bytes());
    }

    #[test]
    fn embedded_examples_are_valid_programs() {
        let schema = observation_schema(&EnvConfig::default());
        let example = HELP.split("```reward\n").nth(1).unwrap().split("```").next().unwrap();
        validate_program(&parse_program(example).unwrap(), &schema).unwrap();
        let sig = SIGNATURE_EXAMPLE.trim_start_matches("```reward\n").trim_end_matches("```");
        validate_program(&parse_program(sig).unwrap(), &schema).unwrap();
    }
}
