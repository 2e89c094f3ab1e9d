use super::{LlmError, ParseStatus, Verdict};

fn last_non_empty_line(response: &str) -> Option<&str> {
    response
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| !l.is_empty())
}

/// Value after `KEY:` on `line`, matching the key case-insensitively.
fn keyed_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let head = line.get(..key.len())?;
    if !head.eq_ignore_ascii_case(key) {
        return None;
    }
    let rest = line[key.len()..].trim_start().strip_prefix(':')?;
    Some(rest.trim())
}

/// Reads the verdict from the final non-empty line, which must be
/// `VERDICT: 0` or `VERDICT: 1` (any case, surrounding whitespace ignored).
/// Earlier lines are never consulted.
pub fn parse_verdict(response: &str) -> Result<Verdict, LlmError> {
    let line = last_non_empty_line(response)
        .ok_or_else(|| LlmError::ParseFailure("empty response".into()))?;
    let label = match keyed_value(line, "verdict") {
        Some("0") => 0,
        Some("1") => 1,
        _ => {
            return Err(LlmError::ParseFailure(format!(
                "final line {line:?} is not a verdict"
            )))
        }
    };
    Ok(Verdict {
        label,
        raw_response: response.to_string(),
        parse_status: ParseStatus::Parsed,
        retries_used: 0,
    })
}

/// Reads `CHOICE: <k>` from the final non-empty line and checks
/// `1 <= k <= n_candidates`.
pub fn parse_choice(response: &str, n_candidates: usize) -> Result<usize, LlmError> {
    let line = last_non_empty_line(response)
        .ok_or_else(|| LlmError::ParseFailure("empty response".into()))?;
    let value = keyed_value(line, "choice")
        .ok_or_else(|| LlmError::ParseFailure(format!("final line {line:?} is not a choice")))?;
    if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
        return Err(LlmError::ParseFailure(format!(
            "choice {value:?} is not a number"
        )));
    }
    let out_of_range = || LlmError::OutOfRange {
        choice: value.to_string(),
        n_candidates,
    };
    let k: usize = value.parse().map_err(|_| out_of_range())?;
    if k == 0 || k > n_candidates {
        return Err(out_of_range());
    }
    Ok(k)
}
