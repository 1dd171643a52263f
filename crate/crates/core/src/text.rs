//! String measures shared by the matcher, transformer and repairer.

use std::collections::{BTreeMap, BTreeSet};

/// Character-class signature: alpha runs become `A`, digit runs `9`,
/// whitespace runs a single space, and any other character stays literal.
pub fn shape(value: &str) -> String {
    let mut out = String::new();
    let mut last: Option<char> = None;
    for ch in value.chars() {
        let class = if ch.is_alphabetic() {
            'A'
        } else if ch.is_ascii_digit() {
            '9'
        } else if ch.is_whitespace() {
            ' '
        } else {
            out.push(ch);
            last = None;
            continue;
        };
        if last != Some(class) {
            out.push(class);
            last = Some(class);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BasicType {
    Integer,
    Decimal,
    Text,
}

fn is_grouped_digits(s: &str) -> bool {
    // 1,234,567 style thousands grouping
    let mut groups = s.split(',');
    let Some(head) = groups.next() else {
        return false;
    };
    let head_ok = !head.is_empty() && head.len() <= 3 && head.bytes().all(|b| b.is_ascii_digit());
    let mut saw_group = false;
    for g in groups {
        if g.len() != 3 || !g.bytes().all(|b| b.is_ascii_digit()) {
            return false;
        }
        saw_group = true;
    }
    head_ok && saw_group
}

fn is_plain_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

pub fn basic_type(value: &str) -> BasicType {
    let body = value.strip_prefix(['-', '+']).unwrap_or(value);
    if is_plain_digits(body) || is_grouped_digits(body) {
        return BasicType::Integer;
    }
    if let Some((int, frac)) = body.split_once('.') {
        let int_ok = int.is_empty() || is_plain_digits(int) || is_grouped_digits(int);
        if int_ok && is_plain_digits(frac) {
            return BasicType::Decimal;
        }
    }
    BasicType::Text
}

/// Splits a schema element name on `_`, `.`, `-`, whitespace, lower-to-upper
/// camelCase boundaries and digit-to-letter boundaries. Tokens are lowercased.
pub fn name_tokens(name: &str) -> BTreeSet<String> {
    let mut tokens = BTreeSet::new();
    let mut cur = String::new();
    let mut prev: Option<char> = None;
    for ch in name.trim().chars() {
        if ch == '_' || ch == '.' || ch == '-' || ch.is_whitespace() {
            if !cur.is_empty() {
                tokens.insert(std::mem::take(&mut cur).to_lowercase());
            }
            prev = None;
            continue;
        }
        let boundary = match prev {
            Some(p) => (p.is_lowercase() && ch.is_uppercase()) || (p.is_ascii_digit() && ch.is_alphabetic()),
            None => false,
        };
        if boundary && !cur.is_empty() {
            tokens.insert(std::mem::take(&mut cur).to_lowercase());
        }
        cur.push(ch);
        prev = Some(ch);
    }
    if !cur.is_empty() {
        tokens.insert(cur.to_lowercase());
    }
    tokens
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// `1 - lev(a, b) / max(|a|, |b|)` over characters.
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / longest as f64
}

/// Unrestricted Damerau-Levenshtein distance over characters.
pub fn damerau_levenshtein(a: &str, b: &str) -> usize {
    strsim::damerau_levenshtein(a, b)
}

/// Character trigram counts, summed over values. Each value is lowercased
/// and padded with one space on either side.
pub fn trigram_profile<'a, I>(values: I) -> BTreeMap<[char; 3], f64>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut profile = BTreeMap::new();
    for value in values {
        let chars: Vec<char> = std::iter::once(' ')
            .chain(value.to_lowercase().chars())
            .chain(std::iter::once(' '))
            .collect();
        for w in chars.windows(3) {
            *profile.entry([w[0], w[1], w[2]]).or_insert(0.0) += 1.0;
        }
    }
    profile
}

pub fn cosine<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(k, x)| b.get(k).map(|y| x * y))
        .sum();
    let na: f64 = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        assert_eq!(shape("SE15 4UJ"), "A9 9A");
        assert_eq!(shape("W1T 5EF"), "A9A 9A");
        assert_eq!(shape("137,495"), "9,9");
        assert_eq!(shape("125.000£"), "9.9£");
        assert_eq!(shape("9  Canton St"), "9 A A");
    }

    #[test]
    fn basic_types() {
        assert_eq!(basic_type("155000"), BasicType::Integer);
        assert_eq!(basic_type("137,495"), BasicType::Integer);
        assert_eq!(basic_type("-3.25"), BasicType::Decimal);
        assert_eq!(basic_type("1,234.5"), BasicType::Decimal);
        assert_eq!(basic_type("125.000£"), BasicType::Text);
        assert_eq!(basic_type("12,34"), BasicType::Text);
        assert_eq!(basic_type("London"), BasicType::Text);
    }

    #[test]
    fn tokens() {
        let t = name_tokens("lst_det_city_h2");
        assert_eq!(t, ["city", "det", "h2", "lst"].iter().map(|s| s.to_string()).collect());
        let t = name_tokens("streetName.v2Nr");
        assert_eq!(t, ["name", "nr", "street", "v2"].iter().map(|s| s.to_string()).collect());
        let t = name_tokens("box6a");
        assert_eq!(t, ["a", "box6"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn dl_counts_transpositions_once() {
        assert_eq!(damerau_levenshtein("ab", "ba"), 1);
        assert_eq!(damerau_levenshtein("", "London"), 6);
        assert_eq!(damerau_levenshtein("9 Canton St", "Canton Street"), 6);
        assert_eq!(damerau_levenshtein("ca", "abc"), 2);
    }

    #[test]
    fn cosine_of_identical_profiles_is_one() {
        let p = trigram_profile(["London", "Leeds"]);
        assert!((cosine(&p, &p) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&p, &trigram_profile(["123"])), 0.0);
    }
}
