//! `OPID(_PARAM)?(_PROB)?` operator strings joined by `+` for order-2 mutations.

use super::{Level, MutationError, MutationSpec, OpId, OpParam, OperatorInstance};

fn parse_error(position: usize, message: impl Into<String>) -> MutationError {
    MutationError::Parse { position, message: message.into() }
}

/// Splits `text` on `sep`, yielding each piece with its byte offset.
fn split_with_offsets(text: &str, sep: char) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split(sep).map(move |piece| {
        let start = offset;
        offset += piece.len() + sep.len_utf8();
        (start, piece)
    })
}

fn parse_number(token: &str, position: usize, what: &str) -> Result<f64, MutationError> {
    let value: f64 = token.parse().map_err(|_| parse_error(position, format!("malformed {what} {token:?}")))?;
    if !value.is_finite() {
        return Err(parse_error(position, format!("{what} must be finite")));
    }
    Ok(value)
}

fn parse_probability(token: &str, position: usize) -> Result<f64, MutationError> {
    let p = parse_number(token, position, "probability")?;
    if !(0.0..=1.0).contains(&p) {
        return Err(parse_error(position, format!("probability {p} outside [0, 1]")));
    }
    Ok(p)
}

fn parse_operator(text: &str, base: usize) -> Result<OperatorInstance, MutationError> {
    let tokens: Vec<(usize, &str)> = split_with_offsets(text, '_').map(|(o, t)| (base + o, t)).collect();
    let (op_pos, op_text) = tokens[0];
    if op_text.is_empty() {
        return Err(parse_error(op_pos, "missing operator identifier"));
    }
    let op: OpId = op_text.parse().map_err(|e: String| parse_error(op_pos, e))?;
    if let Some(&(pos, _)) = tokens.iter().skip(1).find(|(_, t)| t.is_empty()) {
        return Err(parse_error(pos, "empty token"));
    }
    let args = &tokens[1..];
    let end = base + text.len();
    let too_many = |n: usize| parse_error(args[n].0, format!("unexpected token {:?} for {op}", args[n].1));

    let (param, probability) = match op.level() {
        Level::Environment => match (op, args) {
            (_, []) => return Err(parse_error(end, format!("{op} needs an application probability"))),
            (_, [(pp, p)]) => (None, Some(parse_probability(p, *pp)?)),
            (OpId::RN, [(sp, s), (pp, p)]) => {
                let sigma = parse_number(s, *sp, "noise sigma")?;
                if sigma < 0.0 {
                    return Err(parse_error(*sp, "noise sigma must be non-negative"));
                }
                (Some(OpParam::NoiseSigma(sigma)), Some(parse_probability(p, *pp)?))
            }
            (OpId::RN, _) => return Err(too_many(2)),
            _ => return Err(too_many(1)),
        },
        Level::Agent => match args {
            [] => (None, None),
            _ => return Err(too_many(0)),
        },
        Level::Policy => match args {
            [] => return Err(parse_error(end, format!("{op} needs a parameter"))),
            [(pos, value)] => {
                let param = if op == OpId::PAC {
                    OpParam::Activation(value.parse().map_err(|e: String| parse_error(*pos, e))?)
                } else {
                    OpParam::Optimizer(value.parse().map_err(|e: String| parse_error(*pos, e))?)
                };
                (Some(param), None)
            }
            _ => return Err(too_many(1)),
        },
    };
    OperatorInstance::build(op, probability, param).map_err(|e| parse_error(op_pos, e.to_string()))
}

pub(super) fn parse_mutation(text: &str) -> Result<MutationSpec, MutationError> {
    let text_trimmed = text.trim_end();
    let lead = text_trimmed.len() - text_trimmed.trim_start().len();
    let body = text_trimmed.trim_start();
    if body.is_empty() {
        return Err(parse_error(0, "empty mutation string"));
    }
    let mut operators = Vec::new();
    for (offset, piece) in split_with_offsets(body, '+') {
        operators.push(parse_operator(piece, lead + offset)?);
    }
    if operators.len() > 2 {
        return Err(MutationError::Order(operators.len()));
    }
    MutationSpec::from_operators(operators)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, OptimizerKind};
    use proptest::prelude::*;

    #[test]
    fn notation_examples() {
        let m = MutationSpec::parse("M_1.0").unwrap();
        assert_eq!(m.order(), 1);
        assert_eq!(m.operators()[0].op(), OpId::M);
        assert_eq!(m.operators()[0].probability(), Some(1.0));

        let m = MutationSpec::parse("NR").unwrap();
        assert_eq!(m.operators()[0].op(), OpId::NR);
        assert_eq!(m.operators()[0].probability(), None);
        assert_eq!(m.operators()[0].param(), None);

        let m = MutationSpec::parse("PAC_Sigmoid+NDF").unwrap();
        assert_eq!(m.order(), 2);
        assert_eq!(m.operators()[0].param(), Some(OpParam::Activation(Activation::Sigmoid)));
        assert_eq!(m.operators()[1].op(), OpId::NDF);

        let m = MutationSpec::parse("POC_SGD").unwrap();
        assert_eq!(m.operators()[0].param(), Some(OpParam::Optimizer(OptimizerKind::Sgd)));
    }

    #[test]
    fn canonical_rendering() {
        for (input, canonical) in [
            ("M_1", "M_1.0"),
            ("Ra_0.50", "Ra_0.5"),
            ("RN_1.0_1.0", "RN_1.0"),
            ("RN_2_0.25", "RN_2.0_0.25"),
            (" MTS ", "MTS"),
            ("R_1.0+ILF", "R_1.0+ILF"),
        ] {
            assert_eq!(MutationSpec::parse(input).unwrap().to_string(), canonical, "{input}");
        }
    }

    #[test]
    fn errors_carry_positions() {
        let cases = [
            ("XYZ", 0),
            ("M_abc", 2),
            ("M_1.5", 2),
            ("M", 1),
            ("NDF_1.0", 4),
            ("PAC_Swish", 4),
            ("PAC", 3),
            ("NDF+ILF_x", 8),
            ("NDF+", 4),
            ("M__1.0", 2),
        ];
        for (text, expected) in cases {
            match MutationSpec::parse(text) {
                Err(MutationError::Parse { position, .. }) => assert_eq!(position, expected, "{text}"),
                other => panic!("{text}: expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn rejects_duplicates_and_high_order() {
        assert_eq!(MutationSpec::parse("NDF+NDF"), Err(MutationError::Duplicate(OpId::NDF)));
        assert_eq!(MutationSpec::parse("NDF+ILF+MTS"), Err(MutationError::Order(3)));
    }

    fn arb_operator() -> impl Strategy<Value = OperatorInstance> {
        let prob = (0u32..=20).prop_map(|k| f64::from(k) / 20.0);
        prop_oneof![
            (prop::sample::select(vec![OpId::M, OpId::Ra, OpId::R]), prob.clone())
                .prop_map(|(op, p)| OperatorInstance::environment(op, p).unwrap()),
            (0u32..40, prob).prop_map(|(s, p)| OperatorInstance::reward_noise(f64::from(s) / 8.0, p).unwrap()),
            prop::sample::select(vec![OpId::NDF, OpId::NR, OpId::MSU, OpId::MTS, OpId::ILF])
                .prop_map(|op| OperatorInstance::agent(op).unwrap()),
            prop::sample::select(Activation::ALL.to_vec()).prop_map(OperatorInstance::activation_change),
            prop::sample::select(vec![OptimizerKind::Adam, OptimizerKind::Sgd])
                .prop_map(OperatorInstance::optimizer_change),
        ]
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(a in arb_operator(), b in arb_operator(), pair in any::<bool>()) {
            let ops = if pair && a.op() != b.op() { vec![a, b] } else { vec![a] };
            let spec = MutationSpec::from_operators(ops).unwrap();
            let text = spec.to_string();
            let parsed = MutationSpec::parse(&text).unwrap();
            prop_assert_eq!(&parsed, &spec);
            prop_assert_eq!(parsed.to_string(), text);
        }
    }
}
