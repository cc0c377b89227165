use tvl_core::metrics::{FormatFailure, Prediction};
use tvl_core::tvl::parse_tvl;

fn find_keyword(s: &str) -> Option<usize> {
    let lower = s.to_ascii_lowercase();
    let mut from = 0;
    while let Some(i) = lower[from..].find("visualize") {
        let at = from + i;
        let before_ok = lower[..at].chars().next_back().map_or(true, |c| !c.is_alphanumeric() && c != '_');
        if before_ok {
            return Some(at);
        }
        from = at + 1;
    }
    None
}

/// Body of the first ``` fence, without its info string.
fn first_fence(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let rest = &text[open + 3..];
    let body_start = rest.find('\n').map_or(rest.len(), |i| i + 1);
    let body = &rest[body_start..];
    Some(body.find("```").map_or(body, |end| &body[..end]))
}

/// Pulls the first TVL statement out of a completion and parses it.
///
/// A fenced block that contains `VISUALIZE` wins, and its lines are joined;
/// otherwise the statement runs from the first `VISUALIZE` to the end of
/// that line. A trailing `;` is dropped.
pub fn parse_model_output(text: &str) -> Prediction {
    if text.trim().is_empty() {
        return Err(FormatFailure::Empty);
    }
    let candidate = match first_fence(text).and_then(|b| find_keyword(b).map(|i| &b[i..])) {
        Some(block) => block.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" "),
        None => {
            let at = find_keyword(text).ok_or(FormatFailure::NoTvlBlock)?;
            text[at..].lines().next().unwrap_or("").trim().to_string()
        }
    };
    let stmt = candidate.trim_end().trim_end_matches(';').trim_end();
    parse_tvl(stmt).map_err(|e| FormatFailure::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tvl_core::tvl::render_tvl;

    const TVL: &str = "VISUALIZE bar AREA \"Haidian District, Beijing\" SQL SELECT travel_mode, COUNT(*) FROM traj_data GROUP BY travel_mode";

    #[test]
    fn canonical_text() {
        assert_eq!(render_tvl(&parse_model_output(TVL).unwrap()), TVL);
        assert_eq!(render_tvl(&parse_model_output(&format!("  {TVL};\n")).unwrap()), TVL);
    }

    #[test]
    fn prose_then_fence() {
        let text = format!(
            "Sure! To visualize this we count points per mode.\n\n```tvl\n{}\n  {}\n```\nHope that helps.",
            &TVL[..TVL.find(" SQL").unwrap()],
            &TVL[TVL.find(" SQL").unwrap()..]
        );
        assert_eq!(render_tvl(&parse_model_output(&text).unwrap()), TVL);
    }

    #[test]
    fn prefix_on_same_line() {
        let text = format!("TVL: {TVL}\nExplanation: counts by mode.");
        assert_eq!(render_tvl(&parse_model_output(&text).unwrap()), TVL);
    }

    #[test]
    fn failures() {
        assert_eq!(parse_model_output(""), Err(FormatFailure::Empty));
        assert_eq!(parse_model_output(" \n\t"), Err(FormatFailure::Empty));
        assert_eq!(parse_model_output("I cannot help with that."), Err(FormatFailure::NoTvlBlock));
        assert!(matches!(parse_model_output("VISUALIZE scatter SQL SELECT x FROM t"), Err(FormatFailure::Parse(_))));
        // "visualized" inside a word before the real statement is not taken.
        assert!(matches!(parse_model_output("unvisualize VISUALIZE"), Err(FormatFailure::Parse(_))));
    }
}
