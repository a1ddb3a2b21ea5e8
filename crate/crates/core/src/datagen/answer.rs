//! Answer equality: canonical forms, majority voting, rejection sampling.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::types::Trajectory;

/// Normalises a final answer for equality tests.
///
/// Whitespace is trimmed and collapsed, trailing periods dropped and the
/// text case-folded. A lone letter, optionally parenthesised, becomes the
/// upper-case choice letter. Integers, decimals and fractions become a
/// reduced rational, `p` or `p/q`.
pub fn canonicalize_answer(text: &str) -> String {
    let folded = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let mut s = folded.as_str();
    while let Some(rest) = s.strip_suffix('.') {
        s = rest.trim_end();
    }
    if let Some(letter) = choice_letter(s) {
        return letter.to_ascii_uppercase().to_string();
    }
    let compact: String = s.chars().filter(|c| *c != ' ').collect();
    if let Some(r) = parse_rational(&compact) {
        return r;
    }
    s.to_string()
}

fn choice_letter(s: &str) -> Option<char> {
    let inner = s.strip_prefix('(').and_then(|r| r.strip_suffix(')')).unwrap_or(s);
    let mut chars = inner.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_alphabetic() => Some(c),
        _ => None,
    }
}

fn digits(s: &str) -> Option<i128> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.bytes()
        .try_fold(0i128, |acc, b| acc.checked_mul(10)?.checked_add(i128::from(b - b'0')))
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs()
}

fn parse_rational(s: &str) -> Option<String> {
    let (negative, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (num, den) = if let Some((a, b)) = body.split_once('/') {
        (digits(a)?, digits(b)?)
    } else if let Some((int, frac)) = body.split_once('.') {
        if int.is_empty() && frac.is_empty() {
            return None;
        }
        let i = if int.is_empty() { 0 } else { digits(int)? };
        let f = if frac.is_empty() { 0 } else { digits(frac)? };
        let scale = 10i128.checked_pow(u32::try_from(frac.len()).ok()?)?;
        (i.checked_mul(scale)?.checked_add(f)?, scale)
    } else {
        (digits(body)?, 1)
    };
    if den == 0 {
        return None;
    }
    let g = gcd(num, den).max(1);
    let (p, q) = (num / g, den / g);
    let p = if negative && p != 0 { -p } else { p };
    Some(if q == 1 { format!("{p}") } else { format!("{p}/{q}") })
}

/// The most frequent canonical answer and its count. Ties go to the
/// lexicographically smallest canonical form. `None` for no answers.
pub fn self_consistency_vote<S: AsRef<str>>(answers: &[S]) -> Option<(String, usize)> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for a in answers {
        *counts.entry(canonicalize_answer(a.as_ref())).or_default() += 1;
    }
    let mut best: Option<(String, usize)> = None;
    for (answer, n) in counts {
        if best.as_ref().is_none_or(|(_, m)| n > *m) {
            best = Some((answer, n));
        }
    }
    best
}

/// Keeps trajectories whose canonical final answer equals the canonical
/// `gold`. Trajectories without a final answer are skipped with a warning.
pub fn rejection_sample(trajectories: &[Trajectory], gold: &str) -> Vec<Trajectory> {
    let gold = canonicalize_answer(gold);
    trajectories
        .iter()
        .filter(|t| match &t.final_answer {
            Some(a) => canonicalize_answer(a) == gold,
            None => {
                log::warn!("{}: trajectory has no final answer, skipped", t.problem_id);
                false
            }
        })
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn canonical_forms() {
        assert_eq!(canonicalize_answer(" 1/2 "), "1/2");
        assert_eq!(canonicalize_answer("0.5"), "1/2");
        assert_eq!(canonicalize_answer(".50"), "1/2");
        assert_eq!(canonicalize_answer("2/4"), "1/2");
        assert_eq!(canonicalize_answer("-6/3"), "-2");
        assert_eq!(canonicalize_answer("+4.0"), "4");
        assert_eq!(canonicalize_answer("-0"), "0");
        assert_eq!(canonicalize_answer("12."), "12");
        assert_eq!(canonicalize_answer("1 / 3"), "1/3");
        assert_eq!(canonicalize_answer("(b)"), "B");
        assert_eq!(canonicalize_answer(" c. "), "C");
        assert_eq!(canonicalize_answer("  The   Mitochondria. "), "the mitochondria");
        assert_eq!(canonicalize_answer("1/0"), "1/0");
        assert_eq!(canonicalize_answer("99999999999999999999999999999999999999999"), "99999999999999999999999999999999999999999");
    }

    #[test]
    fn vote_examples() {
        assert_eq!(self_consistency_vote(&["A", "A", "B"]), Some(("A".into(), 2)));
        assert_eq!(self_consistency_vote(&["A", "B"]), Some(("A".into(), 1)));
        assert_eq!(self_consistency_vote(&["b", "(B)", "A"]), Some(("B".into(), 2)));
        assert_eq!(self_consistency_vote::<&str>(&[]), None);
    }

    #[test]
    fn vote_matches_counting_oracle() {
        let answers = ["3", "7", "3", "1/2", "0.5", "7", "7", "3.0", "0.50"];
        // 3 -> {3, 3, 3.0} = 3, 7 -> 3, 1/2 -> 3: three-way tie, smallest form wins
        let mut tally = std::collections::HashMap::new();
        for a in answers {
            *tally.entry(canonicalize_answer(a)).or_insert(0usize) += 1;
        }
        let max = *tally.values().max().unwrap();
        let mut modes: Vec<_> = tally.iter().filter(|(_, n)| **n == max).map(|(k, _)| k.clone()).collect();
        modes.sort();
        assert_eq!(self_consistency_vote(&answers), Some((modes[0].clone(), max)));
        assert_eq!(modes[0], "1/2");
    }

    #[test]
    fn rejection_examples() {
        use crate::types::{ActionKind, ReasoningStep};
        let traj = |a: &str| {
            Trajectory::new("p", vec![ReasoningStep::new(ActionKind::Answer, a, "x").unwrap()]).unwrap()
        };
        let ts = vec![traj("4"), traj("5"), traj("4.0")];
        assert_eq!(rejection_sample(&ts, "4").len(), 2);
        assert!(rejection_sample(&ts, "6").is_empty());
        assert_eq!(rejection_sample(&[traj(" 1/2 ")], "0.5").len(), 1);
        let open = Trajectory::new("p", vec![ReasoningStep::new(ActionKind::Caption, "c", "x").unwrap()]).unwrap();
        assert!(rejection_sample(&[open], "4").is_empty());
    }

    proptest! {
        #[test]
        fn canonicalization_is_idempotent(s in "[ a-cA-C0-9./()+-]{0,12}") {
            let once = canonicalize_answer(&s);
            prop_assert_eq!(canonicalize_answer(&once), once);
        }

        #[test]
        fn equal_rationals_share_a_form(p in -500i64..500, q in 1i64..60, k in 1i64..9) {
            prop_assert_eq!(
                canonicalize_answer(&format!("{p}/{q}")),
                canonicalize_answer(&format!("{}/{}", p * k, q * k))
            );
        }
    }
}
