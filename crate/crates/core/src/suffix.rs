//! Suffix array by induced sorting (SA-IS) and LCP by Kasai's algorithm,
//! over integer alphabets.

const EMPTY: u32 = u32::MAX;

/// Suffix array of `text` whose symbols lie in `0..alphabet`.
pub(crate) fn suffix_array(text: &[u32], alphabet: usize) -> Vec<u32> {
    let n = text.len();
    let mut sa = vec![EMPTY; n];
    match n {
        0 => {}
        1 => sa[0] = 0,
        _ => sais(text, &mut sa, alphabet),
    }
    sa
}

fn bucket_bounds(text: &[u32], alphabet: usize, ends: bool) -> Vec<u32> {
    let mut count = vec![0u32; alphabet];
    for &c in text {
        count[c as usize] += 1;
    }
    let mut sum = 0u32;
    for c in count.iter_mut() {
        sum += *c;
        *c = if ends { sum } else { sum - *c };
    }
    count
}

/// Classifies suffixes: `true` = S-type.
fn types(text: &[u32]) -> Vec<bool> {
    let n = text.len();
    let mut s = vec![false; n];
    for i in (0..n - 1).rev() {
        s[i] = text[i] < text[i + 1] || (text[i] == text[i + 1] && s[i + 1]);
    }
    s
}

#[inline]
fn is_lms(s: &[bool], i: usize) -> bool {
    i > 0 && s[i] && !s[i - 1]
}

fn induce(text: &[u32], sa: &mut [u32], s: &[bool], alphabet: usize) {
    let n = text.len();
    let mut heads = bucket_bounds(text, alphabet, false);
    // The last suffix is L-type by convention; place it first in its bucket.
    let last = text[n - 1] as usize;
    sa[heads[last] as usize] = (n - 1) as u32;
    heads[last] += 1;
    for i in 0..n {
        let j = sa[i];
        if j != EMPTY && j > 0 && !s[j as usize - 1] {
            let c = text[j as usize - 1] as usize;
            sa[heads[c] as usize] = j - 1;
            heads[c] += 1;
        }
    }
    let mut tails = bucket_bounds(text, alphabet, true);
    for i in (0..n).rev() {
        let j = sa[i];
        if j != EMPTY && j > 0 && s[j as usize - 1] {
            let c = text[j as usize - 1] as usize;
            tails[c] -= 1;
            sa[tails[c] as usize] = j - 1;
        }
    }
}

fn place_lms(text: &[u32], sa: &mut [u32], lms: impl DoubleEndedIterator<Item = u32>, alphabet: usize) {
    sa.fill(EMPTY);
    let mut tails = bucket_bounds(text, alphabet, true);
    for j in lms.rev() {
        let c = text[j as usize] as usize;
        tails[c] -= 1;
        sa[tails[c] as usize] = j;
    }
}

fn sais(text: &[u32], sa: &mut [u32], alphabet: usize) {
    let n = text.len();
    let s = types(text);
    let lms_positions: Vec<u32> = (1..n).filter(|&i| is_lms(&s, i)).map(|i| i as u32).collect();

    place_lms(text, sa, lms_positions.iter().copied(), alphabet);
    induce(text, sa, &s, alphabet);

    // Name the sorted LMS substrings.
    let m = lms_positions.len();
    if m == 0 {
        return;
    }
    let sorted_lms: Vec<u32> = sa.iter().copied().filter(|&j| j != EMPTY && is_lms(&s, j as usize)).collect();
    let mut name_of = vec![EMPTY; n];
    let mut name = 0u32;
    let mut prev: Option<usize> = None;
    for &j in &sorted_lms {
        let j = j as usize;
        if let Some(p) = prev {
            if !lms_equal(text, &s, p, j) {
                name += 1;
            }
        }
        name_of[j] = name;
        prev = Some(j);
    }
    let names = name as usize + 1;
    let reduced: Vec<u32> = lms_positions.iter().map(|&j| name_of[j as usize]).collect();

    let reduced_sa = if names < m {
        let mut rsa = vec![EMPTY; m];
        if m == 1 {
            rsa[0] = 0;
        } else {
            sais(&reduced, &mut rsa, names);
        }
        rsa
    } else {
        let mut rsa = vec![0u32; m];
        for (i, &c) in reduced.iter().enumerate() {
            rsa[c as usize] = i as u32;
        }
        rsa
    };

    let ordered = reduced_sa.iter().map(|&r| lms_positions[r as usize]);
    let ordered: Vec<u32> = ordered.collect();
    place_lms(text, sa, ordered.into_iter(), alphabet);
    induce(text, sa, &s, alphabet);
}

/// Whether the LMS substrings starting at `a` and `b` are identical. The
/// substring runs up to and including the next LMS position; one that reaches
/// the end of the text is unique.
fn lms_equal(text: &[u32], s: &[bool], a: usize, b: usize) -> bool {
    let n = text.len();
    let mut i = 0;
    loop {
        let (x, y) = (a + i, b + i);
        if x == n || y == n {
            return false;
        }
        if text[x] != text[y] || s[x] != s[y] {
            return false;
        }
        if i > 0 {
            let (lx, ly) = (is_lms(s, x), is_lms(s, y));
            if lx && ly {
                return true;
            }
            if lx != ly {
                return false;
            }
        }
        i += 1;
    }
}

/// `lcp[i]` = longest common prefix of suffixes `sa[i-1]` and `sa[i]`;
/// `lcp[0] = 0`.
pub(crate) fn lcp_array(text: &[u32], sa: &[u32]) -> Vec<u32> {
    let n = text.len();
    let mut rank = vec![0u32; n];
    for (i, &p) in sa.iter().enumerate() {
        rank[p as usize] = i as u32;
    }
    let mut lcp = vec![0u32; n];
    let mut h = 0usize;
    for p in 0..n {
        let r = rank[p] as usize;
        if r == 0 {
            h = 0;
            continue;
        }
        let q = sa[r - 1] as usize;
        while p + h < n && q + h < n && text[p + h] == text[q + h] {
            h += 1;
        }
        lcp[r] = h as u32;
        h = h.saturating_sub(1);
    }
    lcp
}
