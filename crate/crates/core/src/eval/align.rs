use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpKind {
    Match,
    Substitute,
    Insert,
    Delete,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignOp {
    pub kind: OpKind,
    pub reference: Option<String>,
    pub hypothesis: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub ops: Vec<AlignOp>,
    pub n_match: usize,
    pub n_sub: usize,
    pub n_ins: usize,
    pub n_del: usize,
}

impl Alignment {
    pub fn cost(&self) -> usize {
        self.n_sub + self.n_ins + self.n_del
    }
}

/// Minimum-edit alignment with unit costs. The backtrace prefers match,
/// then substitution. When both a deletion and an insertion are optimal it
/// deletes if more reference than hypothesis remains (on a draw, if the
/// reference symbol sorts after the hypothesis symbol), so swapping the two
/// sequences mirrors the alignment exactly.
pub fn edit_align<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Alignment {
    let (n, m) = (reference.len(), hypothesis.len());
    let r = |i: usize| reference[i].as_ref();
    let h = |j: usize| hypothesis[j].as_ref();
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[i - 1][j - 1] + usize::from(r(i - 1) != h(j - 1));
            d[i][j] = diag.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }

    let mut out = Alignment::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let op = if i > 0 && j > 0 && r(i - 1) == h(j - 1) && d[i][j] == d[i - 1][j - 1] {
            OpKind::Match
        } else if i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1 {
            OpKind::Substitute
        } else {
            let del = i > 0 && d[i][j] == d[i - 1][j] + 1;
            let ins = j > 0 && d[i][j] == d[i][j - 1] + 1;
            let prefer_del = i > j || (i == j && r(i - 1) > h(j - 1));
            if del && (!ins || prefer_del) {
                OpKind::Delete
            } else {
                OpKind::Insert
            }
        };
        let (rf, hy) = match op {
            OpKind::Match | OpKind::Substitute => {
                i -= 1;
                j -= 1;
                (Some(r(i)), Some(h(j)))
            }
            OpKind::Delete => {
                i -= 1;
                (Some(r(i)), None)
            }
            OpKind::Insert => {
                j -= 1;
                (None, Some(h(j)))
            }
        };
        match op {
            OpKind::Match => out.n_match += 1,
            OpKind::Substitute => out.n_sub += 1,
            OpKind::Insert => out.n_ins += 1,
            OpKind::Delete => out.n_del += 1,
        }
        out.ops.push(AlignOp { kind: op, reference: rf.map(str::to_string), hypothesis: hy.map(str::to_string) });
    }
    out.ops.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_deletion() {
        let a = edit_align(&["a", "b", "c"], &["a", "b", "c"]);
        assert_eq!((a.n_match, a.n_sub, a.n_ins, a.n_del), (3, 0, 0, 0));
        let a = edit_align(&["a", "b", "c"], &["a", "c"]);
        assert_eq!((a.n_del, a.cost()), (1, 1));
        assert_eq!(a.ops[1], AlignOp { kind: OpKind::Delete, reference: Some("b".into()), hypothesis: None });
    }

    #[test]
    fn leading_insertion() {
        let a = edit_align(&["a", "b"], &["b", "a", "b"]);
        assert_eq!(a.cost(), 1);
        assert_eq!(a.ops[0].kind, OpKind::Insert);
        assert_eq!(a.ops[0].hypothesis.as_deref(), Some("b"));
    }

    #[test]
    fn empty_sides() {
        let e: [&str; 0] = [];
        assert_eq!(edit_align(&e, &e).cost(), 0);
        assert_eq!(edit_align(&["x", "y"], &e).n_del, 2);
        assert_eq!(edit_align(&e, &["x"]).n_ins, 1);
    }
}
