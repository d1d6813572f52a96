use serde::{Deserialize, Serialize};

/// One past round: what the agent saw, what it replied, and what the
/// environment said back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub observation: String,
    pub reply: String,
    pub feedback: String,
}

/// The most recent `window` exchanges. The system prompt and the current
/// observation live outside the history and are never cut.
pub fn truncate_history(history: &[Exchange], window: usize) -> &[Exchange] {
    &history[history.len().saturating_sub(window)..]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hist(n: usize) -> Vec<Exchange> {
        (0..n)
            .map(|i| Exchange {
                observation: format!("o{i}"),
                reply: format!("r{i}"),
                feedback: format!("f{i}"),
            })
            .collect()
    }

    #[test]
    fn keeps_suffix() {
        let h = hist(12);
        let t = truncate_history(&h, 8);
        assert_eq!(t.len(), 8);
        assert_eq!(t[0].observation, "o4");
        assert_eq!(truncate_history(&hist(3), 8).len(), 3);
    }

    proptest! {
        #[test]
        fn idempotent_and_ordered(n in 0usize..40, w in 1usize..20) {
            let h = hist(n);
            let once = truncate_history(&h, w);
            prop_assert_eq!(truncate_history(once, w), once);
            prop_assert_eq!(once, &h[n - once.len()..]);
            prop_assert_eq!(once.len(), n.min(w));
        }
    }
}
