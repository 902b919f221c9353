//! Token pools for the three built-in car-following problems.

use crate::expr::{BinaryOp, SamplingConstraint, TokenPool, TokenSpec};
use crate::traffic::VehicleParams;

fn arithmetic() -> Vec<TokenSpec> {
    [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div, BinaryOp::Min]
        .into_iter()
        .map(TokenSpec::binary)
        .collect()
}

fn min_first(cap: usize) -> Vec<SamplingConstraint> {
    vec![
        SamplingConstraint::MaxOccurrences { token: "min".into(), max: cap },
        SamplingConstraint::MustBeFirst { token: "min".into() },
    ]
}

/// Krauss search pool: `+ - * / min`, the four trajectory features and the
/// parameters `a_max`, `b`. With `structural` the pool also forces a single
/// leading `min`; the length range applies either way.
pub fn krauss_pool(structural: bool, length: (usize, usize)) -> TokenPool {
    let p = VehicleParams::default();
    let mut tokens = arithmetic();
    tokens.extend(["v_f", "v_l", "ds", "s_f"].map(TokenSpec::variable));
    tokens.push(TokenSpec::parameter("a_max", p.a_max));
    tokens.push(TokenSpec::parameter("b", p.b));
    let mut c = if structural { min_first(1) } else { Vec::new() };
    c.push(SamplingConstraint::LengthRange { min: length.0, max: length.1 });
    TokenPool::new(tokens, c).expect("built-in pool is satisfiable")
}

/// Pool for the stimulus-response models: `+ - * / min pow const`,
/// parameters `a_max`, `v_max`, `b` and the given variables. `min` and the
/// constant may each occur at most twice and `min` leads.
pub fn response_pool(variables: &[&str], length: (usize, usize)) -> TokenPool {
    let p = VehicleParams::default();
    let mut tokens = arithmetic();
    tokens.push(TokenSpec::binary(BinaryOp::Pow));
    tokens.push(TokenSpec::constant());
    tokens.push(TokenSpec::parameter("a_max", p.a_max));
    tokens.push(TokenSpec::parameter("v_max", p.v_max));
    tokens.push(TokenSpec::parameter("b", p.b));
    tokens.extend(variables.iter().map(|v| TokenSpec::variable(*v)));
    let mut c = min_first(2);
    c.push(SamplingConstraint::MaxOccurrences { token: "const".into(), max: 2 });
    c.push(SamplingConstraint::LengthRange { min: length.0, max: length.1 });
    TokenPool::new(tokens, c).expect("built-in pool is satisfiable")
}

pub fn gm_pool() -> TokenPool {
    response_pool(&["v_f", "v_l"], (3, 40))
}

pub fn ghr_pool() -> TokenPool {
    response_pool(&["v_f", "dv_lag", "s_f_lag"], (3, 40))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ExpressionTree;

    fn encodes(pool: &TokenPool, text: &str) -> usize {
        let t = ExpressionTree::parse_prefix(text, Some(pool)).unwrap();
        let idx = t.to_indices(pool).unwrap();
        pool.validate(&idx).unwrap();
        idx.len()
    }

    #[test]
    fn targets_are_reachable() {
        let k = krauss_pool(true, (10, 40));
        assert_eq!(encodes(&k, "min + v_f a_max + v_l / * + b b ds + + v_f v_l + b b"), 19);
        assert_eq!(encodes(&gm_pool(), "min + v_f * const - v_l v_f v_max"), 9);
        assert_eq!(
            encodes(&ghr_pool(), "min + v_f / * * const v_f dv_lag pow s_f_lag const v_max"),
            13
        );
    }

    #[test]
    fn structural_constraints() {
        let k = krauss_pool(true, (10, 40));
        let t = ExpressionTree::parse_prefix("+ v_f min a_max + v_l / * ds b + v_f v_l", Some(&k)).unwrap();
        assert!(k.validate(&t.to_indices(&k).unwrap()).is_err());
        let loose = krauss_pool(false, (10, 40));
        assert!(loose.validate(&t.to_indices(&loose).unwrap()).is_ok());
    }
}
