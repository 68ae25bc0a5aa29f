use super::{BilevelProblem, ProblemError};
use crate::expr::CompiledFunction;

/// Reads the line-oriented problem format:
///
/// ```text
/// # comment
/// dims n=1 m=1
/// upper.objective y1
/// upper.ineq x1 - 1
/// lower.objective x1^2 + y1^2
/// lower.ineq (x1^2 - y1 - 1)*(x1^2 + y1^2 - 1)
/// ```
///
/// `eq` lines mean `expr = 0`, `ineq` lines mean `expr <= 0`.
pub fn load_problem(text: &str) -> Result<BilevelProblem, ProblemError> {
    let mut dims: Option<(usize, usize)> = None;
    let mut upper_objective = None;
    let mut lower_objective = None;
    let (mut upper_eq, mut upper_ineq, mut lower_eq, mut lower_ineq) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let format_err = |message: String| ProblemError::Format { line: line_no, message };

        let Some((n, m)) = dims else {
            dims = Some(parse_dims(line).map_err(format_err)?);
            continue;
        };

        let (key, body) = line
            .split_once(char::is_whitespace)
            .map(|(k, b)| (k, b.trim()))
            .unwrap_or((line, ""));
        if body.is_empty() && key != "dims" {
            return Err(format_err(format!("`{key}` has no expression")));
        }
        let compile = || {
            CompiledFunction::parse(body, n, m).map_err(|source| ProblemError::Parse {
                line: line_no,
                source,
            })
        };
        match key {
            "dims" => return Err(format_err("duplicate `dims` line".into())),
            "upper.objective" => {
                if upper_objective.is_some() {
                    return Err(format_err("duplicate `upper.objective`".into()));
                }
                upper_objective = Some(compile()?);
            }
            "lower.objective" => {
                if lower_objective.is_some() {
                    return Err(format_err("duplicate `lower.objective`".into()));
                }
                lower_objective = Some(compile()?);
            }
            "upper.eq" => upper_eq.push(compile()?),
            "upper.ineq" => upper_ineq.push(compile()?),
            "lower.eq" => lower_eq.push(compile()?),
            "lower.ineq" => lower_ineq.push(compile()?),
            other => return Err(format_err(format!("unknown key `{other}`"))),
        }
    }

    let last = text.lines().count().max(1);
    let Some((n, m)) = dims else {
        return Err(ProblemError::Format {
            line: last,
            message: "missing `dims` line".into(),
        });
    };
    let missing = |what: &str| ProblemError::Format {
        line: last,
        message: format!("missing `{what}`"),
    };
    let upper_objective = upper_objective.ok_or_else(|| missing("upper.objective"))?;
    let lower_objective = lower_objective.ok_or_else(|| missing("lower.objective"))?;
    Ok(BilevelProblem::new(
        n,
        m,
        upper_objective,
        upper_eq,
        upper_ineq,
        lower_objective,
        lower_eq,
        lower_ineq,
    ))
}

fn parse_dims(line: &str) -> Result<(usize, usize), String> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some("dims") {
        return Err("first line must be `dims n=<int> m=<int>`".into());
    }
    let mut n = None;
    let mut m = None;
    for part in parts {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| format!("malformed dims entry `{part}`"))?;
        let v: usize = v.parse().map_err(|_| format!("malformed dims value `{v}`"))?;
        match k {
            "n" if n.is_none() => n = Some(v),
            "m" if m.is_none() => m = Some(v),
            _ => return Err(format!("unexpected dims entry `{part}`")),
        }
    }
    match (n, m) {
        (Some(n), Some(m)) => Ok((n, m)),
        _ => Err("dims needs both n and m".into()),
    }
}
