//! Hamming-ranking retrieval over a gallery of hash codes, plus MAP and
//! NDCG@k.

use std::fmt::Write as _;
use std::io::BufRead;

use crate::adcmh::{hash, HashCode};
use crate::error::{Error, Result};
use crate::gf2::{bits_to_string, parse_bit_string};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ItemMeta {
    pub subject_id: u64,
    pub attributes: Vec<u8>,
}

/// Immutable gallery of `c`-bit codes with per-item metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalIndex {
    code_len: usize,
    codes: Vec<HashCode>,
    packed: Vec<Vec<u64>>,
    metadata: Vec<ItemMeta>,
}

fn pack_code(code: &HashCode) -> Vec<u64> {
    let mut words = vec![0u64; code.len().div_ceil(64)];
    for (i, &s) in code.signs().iter().enumerate() {
        if s < 0 {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    words
}

impl RetrievalIndex {
    pub fn from_codes(code_len: usize, codes: Vec<HashCode>, metadata: Vec<ItemMeta>) -> Result<Self> {
        if codes.len() != metadata.len() {
            return Err(Error::dim(codes.len(), metadata.len()));
        }
        if let Some(bad) = codes.iter().find(|c| c.len() != code_len) {
            return Err(Error::dim(code_len, bad.len()));
        }
        let packed = codes.iter().map(pack_code).collect();
        Ok(Self {
            code_len,
            codes,
            packed,
            metadata,
        })
    }

    /// Hashes each activation with [`hash`] before indexing.
    pub fn from_activations<A: AsRef<[f64]>>(code_len: usize, activations: &[A], metadata: Vec<ItemMeta>) -> Result<Self> {
        let codes = activations.iter().map(|a| hash(a.as_ref())).collect();
        Self::from_codes(code_len, codes, metadata)
    }

    pub fn code_len(&self) -> usize {
        self.code_len
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[HashCode] {
        &self.codes
    }

    pub fn metadata(&self) -> &[ItemMeta] {
        &self.metadata
    }

    /// Every gallery item as `(item id, Hamming distance)`, by ascending
    /// distance and then ascending id.
    pub fn rank(&self, query: &HashCode) -> Result<Vec<(usize, usize)>> {
        if query.len() != self.code_len {
            return Err(Error::dim(self.code_len, query.len()));
        }
        let q = pack_code(query);
        let mut out: Vec<(usize, usize)> = self
            .packed
            .iter()
            .enumerate()
            .map(|(id, words)| {
                let d = words.iter().zip(&q).map(|(a, b)| (a ^ b).count_ones() as usize).sum();
                (id, d)
            })
            .collect();
        out.sort_unstable_by_key(|&(id, d)| (d, id));
        Ok(out)
    }
}

/// A conjunctive attribute query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuerySpec {
    mask: Vec<u8>,
}

impl QuerySpec {
    pub fn new(mask: Vec<u8>) -> Result<Self> {
        if mask.iter().any(|&b| b > 1) {
            return Err(Error::Parameter("query mask entries must be 0/1".into()));
        }
        if mask.iter().all(|&b| b == 0) {
            return Err(Error::Parameter("query mask selects no attribute".into()));
        }
        Ok(Self { mask })
    }

    /// Mask of length `d_attr` with the listed attribute indices set.
    pub fn from_indices(d_attr: usize, indices: &[usize]) -> Result<Self> {
        let mut mask = vec![0u8; d_attr];
        for &i in indices {
            if i >= d_attr {
                return Err(Error::Parameter(format!("attribute {i} out of range 0..{d_attr}")));
            }
            mask[i] = 1;
        }
        Self::new(mask)
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn arity(&self) -> usize {
        self.mask.iter().filter(|&&b| b == 1).count()
    }

    /// Number of queried attributes the item has.
    pub fn grade(&self, item: &ItemMeta) -> Result<usize> {
        if item.attributes.len() != self.mask.len() {
            return Err(Error::dim(self.mask.len(), item.attributes.len()));
        }
        Ok(self
            .mask
            .iter()
            .zip(&item.attributes)
            .filter(|&(&m, &a)| m == 1 && a == 1)
            .count())
    }

    /// 1 iff the item has every queried attribute.
    pub fn relevance(&self, item: &ItemMeta) -> Result<u8> {
        Ok(u8::from(self.grade(item)? == self.arity()))
    }
}

/// Average precision of one ranked relevance list; `None` if nothing is relevant.
pub fn average_precision(relevant: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &r) in relevant.iter().enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapSummary {
    pub map: f64,
    /// Queries that contributed.
    pub queries: usize,
    /// Queries without any relevant item, left out of the mean.
    pub excluded: usize,
}

pub fn mean_average_precision<R: AsRef<[bool]>>(rankings: &[R]) -> Result<MapSummary> {
    let aps: Vec<f64> = rankings.iter().filter_map(|r| average_precision(r.as_ref())).collect();
    if aps.is_empty() {
        return Err(Error::UndefinedMetric("no query has a relevant item".into()));
    }
    Ok(MapSummary {
        map: aps.iter().sum::<f64>() / aps.len() as f64,
        queries: aps.len(),
        excluded: rankings.len() - aps.len(),
    })
}

fn dcg(grades: &[f64], k: usize) -> f64 {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| (2f64.powf(g) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k with gain `2^rel − 1` and discount `log₂(i + 1)`; the ideal DCG comes
/// from the same grades sorted descending.
pub fn ndcg_at_k(grades: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Parameter("k must be ≥ 1".into()));
    }
    if grades.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::Parameter("relevance grades must be nonnegative".into()));
    }
    let mut ideal = grades.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let z = dcg(&ideal, k);
    if z == 0.0 {
        return Err(Error::UndefinedMetric("all relevance grades are zero".into()));
    }
    Ok(dcg(grades, k) / z)
}

/// One evaluated query: its mask (if known) and the ranked list.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedQuery {
    pub mask: Option<Vec<u8>>,
    pub rows: Vec<RankedRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankedRow {
    pub rank: usize,
    pub item_id: usize,
    pub distance: usize,
    pub relevance: u8,
}

impl RankedQuery {
    /// Ranks `index` for `code` and attaches conjunctive relevance for `query`.
    pub fn evaluate(index: &RetrievalIndex, query: &QuerySpec, code: &HashCode) -> Result<Self> {
        let ranked = index.rank(code)?;
        let rows = ranked
            .into_iter()
            .enumerate()
            .map(|(pos, (item_id, distance))| {
                Ok(RankedRow {
                    rank: pos + 1,
                    item_id,
                    distance,
                    relevance: query.relevance(&index.metadata()[item_id])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mask: Some(query.mask().to_vec()),
            rows,
        })
    }

    pub fn relevance_list(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.relevance == 1).collect()
    }

    pub fn arity(&self) -> Option<usize> {
        self.mask.as_ref().map(|m| m.iter().filter(|&&b| b == 1).count())
    }
}

/// Text format: per query an optional `# query <q> mask <bits>` line followed
/// by `rank, item_id, hamming_distance, relevance` lines.
pub fn write_rankings(queries: &[RankedQuery]) -> String {
    let mut out = String::new();
    for (q, rq) in queries.iter().enumerate() {
        match &rq.mask {
            Some(mask) => {
                let _ = writeln!(out, "# query {q} mask {}", bits_to_string(mask));
            }
            None => {
                let _ = writeln!(out, "# query {q}");
            }
        }
        for r in &rq.rows {
            let _ = writeln!(out, "{}, {}, {}, {}", r.rank, r.item_id, r.distance, r.relevance);
        }
    }
    out
}

pub fn read_rankings<R: BufRead>(reader: R) -> Result<Vec<RankedQuery>> {
    let mut queries: Vec<RankedQuery> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            let mut mask = None;
            let mut words = rest.split_whitespace();
            while let Some(w) = words.next() {
                if w == "mask" {
                    let bits = words.next().ok_or_else(|| Error::parse(lineno, "mask without bits"))?;
                    mask = Some(parse_bit_string(bits).map_err(|e| Error::parse(lineno, e.to_string()))?);
                }
            }
            queries.push(RankedQuery { mask, rows: Vec::new() });
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::parse(lineno, "expected `rank, item_id, hamming_distance, relevance`"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(lineno, format!("{s:?}: {e}")));
        let relevance = num(fields[3])?;
        if relevance > 1 {
            return Err(Error::parse(lineno, "relevance must be 0 or 1"));
        }
        let row = RankedRow {
            rank: num(fields[0])?,
            item_id: num(fields[1])?,
            distance: num(fields[2])?,
            relevance: relevance as u8,
        };
        if queries.is_empty() {
            queries.push(RankedQuery { mask: None, rows: Vec::new() });
        }
        queries.last_mut().expect("nonempty").rows.push(row);
    }
    Ok(queries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(bits: &str) -> HashCode {
        HashCode::from_bits(&parse_bit_string(bits).unwrap())
    }

    fn meta(n: usize) -> Vec<ItemMeta> {
        (0..n)
            .map(|i| ItemMeta {
                subject_id: i as u64,
                attributes: vec![0, 1],
            })
            .collect()
    }

    #[test]
    fn empty_index() {
        let idx = RetrievalIndex::from_codes(4, vec![], vec![]).unwrap();
        assert!(idx.is_empty());
        assert!(idx.rank(&code("0101")).unwrap().is_empty());
    }

    #[test]
    fn length_mismatches() {
        assert!(RetrievalIndex::from_codes(4, vec![code("0101")], vec![]).is_err());
        assert!(RetrievalIndex::from_codes(4, vec![code("010")], meta(1)).is_err());
        let idx = RetrievalIndex::from_codes(4, vec![code("0101")], meta(1)).unwrap();
        assert!(matches!(idx.rank(&code("01")), Err(Error::Dimension { .. })));
    }

    #[test]
    fn activations_are_hashed_and_codes_kept() {
        let idx = RetrievalIndex::from_activations(3, &[vec![0.2, -0.1, 0.0]], meta(1)).unwrap();
        assert_eq!(idx.codes()[0].signs(), &[1, -1, 1]);
        let codes = vec![code("101"), code("000")];
        let idx = RetrievalIndex::from_codes(3, codes.clone(), meta(2)).unwrap();
        assert_eq!(idx.codes(), codes.as_slice());
        assert_eq!(idx.len(), 2);
    }

    #[test]
    fn rank_examples() {
        let q = code("00000");
        let gallery = vec![code("11000"), code("00000"), code("11111")];
        let idx = RetrievalIndex::from_codes(5, gallery, meta(3)).unwrap();
        assert_eq!(idx.rank(&q).unwrap(), vec![(1, 0), (0, 2), (2, 5)]);
    }

    #[test]
    fn complement_is_at_full_distance() {
        let g = code("1011001");
        let comp = HashCode::from_bits(&g.to_bits().iter().map(|b| 1 - b).collect::<Vec<_>>());
        let idx = RetrievalIndex::from_codes(7, vec![g.clone()], meta(1)).unwrap();
        assert_eq!(idx.rank(&comp).unwrap(), vec![(0, 7)]);
        assert_eq!(idx.rank(&g).unwrap(), vec![(0, 0)]);
    }

    #[test]
    fn ties_break_by_id() {
        let idx = RetrievalIndex::from_codes(2, vec![code("10"), code("01"), code("00")], meta(3)).unwrap();
        assert_eq!(idx.rank(&code("11")).unwrap(), vec![(0, 1), (1, 1), (2, 2)]);
    }

    #[test]
    fn relevance_rules() {
        assert!(QuerySpec::new(vec![0, 0, 0]).is_err());
        let all = ItemMeta {
            subject_id: 0,
            attributes: vec![1, 1, 1],
        };
        for mask in [vec![1, 0, 0], vec![0, 1, 1], vec![1, 1, 1]] {
            assert_eq!(QuerySpec::new(mask).unwrap().relevance(&all).unwrap(), 1);
        }
        // {bald, sunglasses} against an item that is only bald
        let q = QuerySpec::from_indices(3, &[0, 2]).unwrap();
        let bald_only = ItemMeta {
            subject_id: 1,
            attributes: vec![1, 0, 0],
        };
        assert_eq!(q.relevance(&bald_only).unwrap(), 0);
        assert_eq!(q.grade(&bald_only).unwrap(), 1);
        assert!(QuerySpec::from_indices(3, &[3]).is_err());
    }

    #[test]
    fn average_precision_examples() {
        assert_eq!(average_precision(&[true, true, false]), Some(1.0));
        assert_eq!(average_precision(&[false, true]), Some(0.5));
        assert!((average_precision(&[true, false, true]).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&[false, false]), None);
    }

    #[test]
    fn map_excludes_queries_without_relevant_items() {
        let s = mean_average_precision(&[vec![false, true], vec![false, false], vec![true]]).unwrap();
        assert_eq!(s.queries, 2);
        assert_eq!(s.excluded, 1);
        assert!((s.map - 0.75).abs() < 1e-15);
        assert!(matches!(
            mean_average_precision(&[vec![false]]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[3.0, 2.0, 1.0, 0.0], 4).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&[2.0, 0.0, 2.0], 1).unwrap(), 1.0);
        let v = ndcg_at_k(&[0.0, 1.0], 2).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert!(matches!(ndcg_at_k(&[0.0, 0.0], 2), Err(Error::UndefinedMetric(_))));
        assert!(ndcg_at_k(&[1.0], 0).is_err());
    }

    #[test]
    fn ranking_file_round_trip() {
        let q = RankedQuery {
            mask: Some(vec![1, 0, 1]),
            rows: vec![
                RankedRow { rank: 1, item_id: 4, distance: 0, relevance: 1 },
                RankedRow { rank: 2, item_id: 0, distance: 3, relevance: 0 },
            ],
        };
        let text = write_rankings(std::slice::from_ref(&q));
        assert_eq!(read_rankings(text.as_bytes()).unwrap(), vec![q]);
        assert!(read_rankings("1, 2, 3\n".as_bytes()).is_err());
        let bare = read_rankings("1, 0, 0, 0\n2, 1, 1, 1\n".as_bytes()).unwrap();
        assert_eq!(bare.len(), 1);
        assert_eq!(bare[0].mask, None);
    }
}
