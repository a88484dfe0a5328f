//! Binary linear block codes: systematic BCH construction, encoding, syndromes,
//! exhaustive minimum distance and a bounded-distance decoder.
//!
//! Bit `j` of a length-`n` word corresponds to the coefficient of `x^(n-1-j)`
//! when the word is read as a polynomial, so the leftmost printed column of a
//! matrix is bit 0. Systematic generators are laid out as `[I_k | P]`, the
//! parity-check matrix as `[Pᵀ | I_(n-k)]`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::gf2::{bits_to_string, parse_bit_string, Gf2Matrix};

/// Largest message length for which exhaustive codeword enumeration is allowed.
pub const MAX_ENUMERATION_K: usize = 20;
/// Largest redundancy for which a syndrome table is built.
pub const MAX_SYNDROME_BITS: usize = 20;
/// Upper bound on error patterns enumerated when filling a syndrome table.
const MAX_SYNDROME_PATTERNS: u64 = 5_000_000;

/// Primitive polynomials, bit `i` = coefficient of `x^i`.
const PRIMITIVE_POLYS: [(u32, u32); 6] = [
    (2, 0b111),        // x^2 + x + 1
    (3, 0b1011),       // x^3 + x + 1
    (4, 0b1_0011),     // x^4 + x + 1
    (5, 0b10_0101),    // x^5 + x^2 + 1
    (6, 0b100_0011),   // x^6 + x + 1
    (7, 0b1000_1001),  // x^7 + x^3 + 1
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Codeword(Vec<u8>);

impl Codeword {
    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bits(self) -> Vec<u8> {
        self.0
    }
}

impl AsRef<[u8]> for Codeword {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// A binary `(n, k)` linear block code with guaranteed correcting capability `t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearCode {
    n: usize,
    k: usize,
    t: usize,
    d_min: Option<usize>,
    generator: Gf2Matrix,
    parity_check: Gf2Matrix,
    gen_rows: Vec<u128>,
    check_rows: Vec<u128>,
}

impl LinearCode {
    /// Assembles a code from a generator/parity-check pair, checking
    /// `G·Hᵀ = 0`, full row rank of `G` and `rank H = n − k`. `H` may carry
    /// redundant rows.
    pub fn new(
        generator: Gf2Matrix,
        parity_check: Gf2Matrix,
        t: usize,
        d_min: Option<usize>,
    ) -> Result<Self> {
        let n = generator.cols();
        if parity_check.cols() != n {
            return Err(Error::dim(n, parity_check.cols()));
        }
        if n > 128 {
            return Err(Error::UnsupportedParameter(format!("code length {n} exceeds 128")));
        }
        let k = generator.rows();
        if k == 0 {
            return Err(Error::DegenerateCode("k = 0".into()));
        }
        if parity_check.rows() > 128 {
            return Err(Error::UnsupportedParameter(format!(
                "{} parity checks exceed 128",
                parity_check.rows()
            )));
        }
        if generator.rank() != k {
            return Err(Error::DegenerateCode("generator rows are dependent".into()));
        }
        if parity_check.rank() != n - k {
            return Err(Error::DegenerateCode(format!(
                "rank H = {} but n − k = {}",
                parity_check.rank(),
                n - k
            )));
        }
        if !generator.mul(&parity_check.transpose())?.is_zero() {
            return Err(Error::DegenerateCode("G·Hᵀ ≠ 0".into()));
        }
        if let Some(d) = d_min {
            if d < 2 * t + 1 {
                return Err(Error::Parameter(format!(
                    "d_min = {d} cannot guarantee t = {t} corrections"
                )));
            }
        }
        let gen_rows = generator.iter_rows().map(pack).collect();
        let check_rows = parity_check.iter_rows().map(pack).collect();
        Ok(Self {
            n,
            k,
            t,
            d_min,
            generator,
            parity_check,
            gen_rows,
            check_rows,
        })
    }

    /// Derives the generator as a null-space basis of `H`. When `t` is not given
    /// it is computed from the exhaustive minimum distance (requires `k ≤ 20`).
    pub fn from_parity_check(parity_check: Gf2Matrix, t: Option<usize>) -> Result<Self> {
        let n = parity_check.cols();
        let generator = parity_check.null_space();
        let k = generator.rows();
        if k == 0 {
            return Err(Error::DegenerateCode(format!("H has full rank {n}, k = 0")));
        }
        let d_min = if k <= MAX_ENUMERATION_K {
            Some(min_weight(&generator.iter_rows().map(pack).collect::<Vec<_>>()))
        } else {
            None
        };
        let t = match (t, d_min) {
            (Some(t), _) => t,
            (None, Some(d)) => (d - 1) / 2,
            (None, None) => {
                return Err(Error::Capacity(format!(
                    "cannot infer t for k = {k} > {MAX_ENUMERATION_K} without enumeration"
                )))
            }
        };
        Self::new(generator, parity_check, t, d_min)
    }

    /// The `n`-bit repetition code, `d_min = n`.
    pub fn repetition(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::DegenerateCode(format!("repetition length {n}")));
        }
        let generator = Gf2Matrix::from_rows(&[vec![1u8; n]])?;
        let mut h = Gf2Matrix::zeros(n - 1, n);
        for r in 0..n - 1 {
            h.set(r, r, 1);
            h.set(r, r + 1, 1);
        }
        Self::new(generator, h, (n - 1) / 2, Some(n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Error-correcting capability (the `e` of the code-selection tables).
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn d_min(&self) -> Option<usize> {
        self.d_min
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    pub fn generator(&self) -> &Gf2Matrix {
        &self.generator
    }

    pub fn parity_check(&self) -> &Gf2Matrix {
        &self.parity_check
    }

    pub fn syndrome(&self, word: &[u8]) -> Result<Vec<u8>> {
        self.check_len(word)?;
        self.parity_check.mul_transposed(word)
    }

    pub fn is_codeword(&self, word: &[u8]) -> Result<bool> {
        Ok(self.syndrome(word)?.iter().all(|&b| b == 0))
    }

    pub fn encode(&self, message: &[u8]) -> Result<Codeword> {
        if message.len() != self.k {
            return Err(Error::dim(self.k, message.len()));
        }
        Ok(Codeword(self.generator.vec_mul(message)?))
    }

    /// Accepts `word` as a codeword if its syndrome vanishes.
    pub fn codeword(&self, word: Vec<u8>) -> Result<Codeword> {
        if !self.is_codeword(&word)? {
            return Err(Error::Parameter("word has a nonzero syndrome".into()));
        }
        Ok(Codeword(word))
    }

    pub fn zero_codeword(&self) -> Codeword {
        Codeword(vec![0; self.n])
    }

    /// Minimum Hamming weight over all nonzero codewords, by enumeration.
    pub fn min_distance(&self) -> Result<usize> {
        if self.k > MAX_ENUMERATION_K {
            return Err(Error::Capacity(format!(
                "exhaustive minimum distance needs k ≤ {MAX_ENUMERATION_K}, got {}",
                self.k
            )));
        }
        Ok(min_weight(&self.gen_rows))
    }

    /// All `2^k` codewords in Gray-code order, starting from zero.
    pub fn codewords(&self) -> Result<Vec<Codeword>> {
        if self.k > MAX_ENUMERATION_K {
            return Err(Error::Capacity(format!("k = {} too large to enumerate", self.k)));
        }
        Ok(gray_codewords(&self.gen_rows)
            .map(|w| Codeword(unpack(w, self.n)))
            .collect())
    }

    /// Writes the text descriptor: a header line `n k t` and then `H` one row
    /// per line.
    pub fn to_descriptor(&self) -> String {
        let mut out = format!("{} {} {}\n", self.n, self.k, self.t);
        for row in self.parity_check.iter_rows() {
            let _ = writeln!(out, "{}", bits_to_string(row));
        }
        out
    }

    pub fn write_descriptor<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_descriptor().as_bytes())?;
        Ok(())
    }

    pub fn read_descriptor<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "missing `n k t` header"))?;
        let header = header?;
        let fields = header
            .split_whitespace()
            .map(|f| f.parse::<usize>().map_err(|e| Error::parse(1, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let [n, k, t] = fields[..] else {
            return Err(Error::parse(1, "header must hold exactly `n k t`"));
        };
        if k > n {
            return Err(Error::parse(1, format!("k = {k} exceeds n = {n}")));
        }
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = parse_bit_string(line.trim()).map_err(|e| Error::parse(idx + 1, e.to_string()))?;
            if row.len() != n {
                return Err(Error::parse(idx + 1, format!("expected {n} bits, got {}", row.len())));
            }
            rows.push(row);
        }
        if rows.len() < n - k {
            return Err(Error::Format(format!(
                "expected at least {} parity-check rows, got {}",
                n - k,
                rows.len()
            )));
        }
        let code = Self::from_parity_check(Gf2Matrix::from_rows(&rows)?, Some(t))?;
        if code.k != k {
            return Err(Error::Format(format!("header k = {k} but H has rank {}", n - code.k)));
        }
        Ok(code)
    }

    fn check_len(&self, word: &[u8]) -> Result<()> {
        if word.len() != self.n {
            return Err(Error::dim(self.n, word.len()));
        }
        Ok(())
    }

    pub(crate) fn packed_syndrome(&self, word: u128) -> u128 {
        self.check_rows
            .iter()
            .enumerate()
            .fold(0u128, |s, (r, &h)| s | (((word & h).count_ones() & 1) as u128) << r)
    }
}

/// `(n, k, t)` of a BCH code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct BchParams {
    pub n: usize,
    pub k: usize,
    pub t: usize,
}

/// Binary primitive narrow-sense BCH code of length `2^m − 1` with designed
/// capability `t_design`, in systematic form.
pub fn build_bch(m: usize, t_design: usize) -> Result<LinearCode> {
    let field = Gf2m::new(m)?;
    let n = field.order();
    if t_design == 0 || t_design >= 1 << (m - 1) {
        return Err(Error::UnsupportedParameter(format!(
            "t = {t_design} outside 1..{} for m = {m}",
            1 << (m - 1)
        )));
    }
    let g = field.generator_poly(t_design);
    let deg = poly_degree(g);
    if deg >= n {
        return Err(Error::DegenerateCode(format!("deg g(x) = {deg} leaves k ≤ 0")));
    }
    let k = n - deg;
    let r = n - k;

    let mut generator = Gf2Matrix::identity(k);
    generator = hstack(&generator, &Gf2Matrix::zeros(k, r));
    for i in 0..k {
        // message bit i is the coefficient of x^(n-1-i)
        let rem = poly_mod(1u128 << (n - 1 - i), g);
        for d in 0..r {
            if rem >> d & 1 == 1 {
                generator.set(i, n - 1 - d, 1);
            }
        }
    }
    let mut h = Gf2Matrix::zeros(r, n);
    for row in 0..r {
        for i in 0..k {
            h.set(row, i, generator.get(i, k + row));
        }
        h.set(row, k + row, 1);
    }
    let d_min = if k <= MAX_ENUMERATION_K {
        Some(min_weight(&generator.iter_rows().map(pack).collect::<Vec<_>>()))
    } else {
        Some(2 * t_design + 1)
    };
    LinearCode::new(generator, h, t_design, d_min)
}

/// Generator polynomial of `build_bch(m, t)`, bit `i` = coefficient of `x^i`.
pub fn bch_generator_poly(m: usize, t_design: usize) -> Result<u128> {
    let field = Gf2m::new(m)?;
    if t_design == 0 || t_design >= 1 << (m - 1) {
        return Err(Error::UnsupportedParameter(format!("t = {t_design} for m = {m}")));
    }
    Ok(field.generator_poly(t_design))
}

/// Every distinct BCH code of length `n`, each listed with the largest
/// designed `t` that produces it. Sorted by increasing `t`.
pub fn available_bch_codes(n: usize) -> Result<Vec<BchParams>> {
    let m = (n + 1).trailing_zeros() as usize;
    if (n + 1).count_ones() != 1 || !(2..=7).contains(&m) {
        return Err(Error::UnsupportedParameter(format!(
            "BCH length must be 2^m − 1 with 2 ≤ m ≤ 7, got {n}"
        )));
    }
    let field = Gf2m::new(m)?;
    let mut best: Vec<BchParams> = Vec::new();
    for t in 1..(1 << (m - 1)) {
        let deg = poly_degree(field.generator_poly(t));
        if deg >= n {
            break;
        }
        let k = n - deg;
        match best.last_mut() {
            Some(last) if last.k == k => last.t = t,
            _ => best.push(BchParams { n, k, t }),
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BddOutcome {
    Corrected { codeword: Codeword, errors: usize },
    Failure,
}

/// Bounded-distance decoder: returns the unique codeword within distance `t`.
///
/// Uses a syndrome table when `n − k ≤ 20`, otherwise scans the `2^k`
/// codewords (`k ≤ 20`).
#[derive(Clone, Debug)]
pub struct BoundedDistanceDecoder {
    code: LinearCode,
    strategy: Strategy,
}

#[derive(Clone, Debug)]
enum Strategy {
    Syndrome(HashMap<u128, u128>),
    Scan(Vec<u128>),
}

impl BoundedDistanceDecoder {
    pub fn new(code: &LinearCode) -> Result<Self> {
        let r = code.n - code.k;
        let patterns = patterns_up_to(code.n, code.t);
        let strategy = if r <= MAX_SYNDROME_BITS && patterns <= MAX_SYNDROME_PATTERNS {
            let mut table = HashMap::new();
            for_each_pattern(code.n, code.t, |e| {
                table.entry(code.packed_syndrome(e)).or_insert(e);
            });
            Strategy::Syndrome(table)
        } else if code.k <= MAX_ENUMERATION_K {
            Strategy::Scan(gray_codewords(&code.gen_rows).collect())
        } else {
            return Err(Error::Capacity(format!(
                "bounded-distance decoding needs k ≤ {MAX_ENUMERATION_K} or n − k ≤ {MAX_SYNDROME_BITS}; got ({}, {})",
                code.n, code.k
            )));
        };
        Ok(Self {
            code: code.clone(),
            strategy,
        })
    }

    pub fn decode(&self, word: &[u8]) -> Result<BddOutcome> {
        self.code.check_len(word)?;
        let w = pack(word);
        let t = self.code.t as u32;
        let found = match &self.strategy {
            Strategy::Syndrome(table) => table
                .get(&self.code.packed_syndrome(w))
                .map(|&e| (w ^ e, e.count_ones())),
            Strategy::Scan(words) => words
                .iter()
                .map(|&c| (c, (c ^ w).count_ones()))
                .find(|&(_, d)| d <= t),
        };
        Ok(match found {
            Some((c, d)) if d <= t => BddOutcome::Corrected {
                codeword: Codeword(unpack(c, self.code.n)),
                errors: d as usize,
            },
            _ => BddOutcome::Failure,
        })
    }
}

pub fn bounded_distance_decode(word: &[u8], code: &LinearCode) -> Result<BddOutcome> {
    BoundedDistanceDecoder::new(code)?.decode(word)
}

pub(crate) fn pack(bits: &[u8]) -> u128 {
    bits.iter()
        .enumerate()
        .fold(0u128, |acc, (i, &b)| acc | ((b & 1) as u128) << i)
}

pub(crate) fn unpack(word: u128, n: usize) -> Vec<u8> {
    (0..n).map(|i| (word >> i & 1) as u8).collect()
}

fn gray_codewords(rows: &[u128]) -> impl Iterator<Item = u128> + '_ {
    let count = 1u64 << rows.len();
    let mut w = 0u128;
    (0..count).map(move |i| {
        if i > 0 {
            w ^= rows[i.trailing_zeros() as usize];
        }
        w
    })
}

fn min_weight(rows: &[u128]) -> usize {
    gray_codewords(rows)
        .skip(1)
        .map(|w| w.count_ones() as usize)
        .min()
        .unwrap_or(0)
}

fn patterns_up_to(n: usize, t: usize) -> u64 {
    let mut total = 0u64;
    let mut binom = 1u64;
    for w in 0..=t.min(n) {
        total = total.saturating_add(binom);
        binom = binom.saturating_mul((n - w) as u64) / (w as u64 + 1);
    }
    total
}

fn for_each_pattern(n: usize, t: usize, mut f: impl FnMut(u128)) {
    fn rec(start: usize, n: usize, left: usize, acc: u128, f: &mut impl FnMut(u128)) {
        f(acc);
        if left == 0 {
            return;
        }
        for i in start..n {
            rec(i + 1, n, left - 1, acc | 1u128 << i, f);
        }
    }
    rec(0, n, t, 0, &mut f);
}

fn hstack(a: &Gf2Matrix, b: &Gf2Matrix) -> Gf2Matrix {
    let mut out = Gf2Matrix::zeros(a.rows(), a.cols() + b.cols());
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            out.set(r, c, a.get(r, c));
        }
        for c in 0..b.cols() {
            out.set(r, a.cols() + c, b.get(r, c));
        }
    }
    out
}

fn poly_degree(p: u128) -> usize {
    127 - p.leading_zeros() as usize
}

fn poly_mod(mut a: u128, g: u128) -> u128 {
    let dg = poly_degree(g);
    while a != 0 && poly_degree(a) >= dg {
        a ^= g << (poly_degree(a) - dg);
    }
    a
}

/// GF(2^m) via exp/log tables over a fixed primitive polynomial.
struct Gf2m {
    m: usize,
    exp: Vec<u32>,
    log: Vec<u32>,
}

impl Gf2m {
    fn new(m: usize) -> Result<Self> {
        let &(_, prim) = PRIMITIVE_POLYS
            .iter()
            .find(|&&(deg, _)| deg as usize == m)
            .ok_or_else(|| Error::UnsupportedParameter(format!("field degree m = {m} not in 2..=7")))?;
        let n = (1usize << m) - 1;
        let mut exp = vec![0u32; 2 * n];
        let mut log = vec![0u32; n + 1];
        let mut x = 1u32;
        for i in 0..n {
            exp[i] = x;
            exp[i + n] = x;
            log[x as usize] = i as u32;
            x <<= 1;
            if x >> m & 1 == 1 {
                x ^= prim;
            }
        }
        Ok(Self { m, exp, log })
    }

    fn order(&self) -> usize {
        (1 << self.m) - 1
    }

    fn mul(&self, a: u32, b: u32) -> u32 {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[(self.log[a as usize] + self.log[b as usize]) as usize]
        }
    }

    fn coset(&self, i: usize) -> Vec<usize> {
        let n = self.order();
        let mut out = vec![i % n];
        let mut j = (2 * i) % n;
        while j != i % n {
            out.push(j);
            j = (2 * j) % n;
        }
        out
    }

    /// Product of `(x − α^j)` over a cyclotomic coset; coefficients land in GF(2).
    fn minimal_poly(&self, i: usize) -> u128 {
        let mut coeffs = vec![1u32]; // ascending powers
        for j in self.coset(i) {
            let root = self.exp[j];
            let mut next = vec![0u32; coeffs.len() + 1];
            for (d, &c) in coeffs.iter().enumerate() {
                next[d + 1] ^= c;
                next[d] ^= self.mul(c, root);
            }
            coeffs = next;
        }
        coeffs.iter().enumerate().fold(0u128, |acc, (d, &c)| {
            debug_assert!(c <= 1, "minimal polynomial coefficient outside GF(2)");
            acc | (c as u128) << d
        })
    }

    fn generator_poly(&self, t: usize) -> u128 {
        let n = self.order();
        let mut seen = vec![false; n];
        let mut g = 1u128;
        for i in 1..=(2 * t).min(n) {
            let rep = i % n;
            if seen[rep] {
                continue;
            }
            for j in self.coset(rep) {
                seen[j] = true;
            }
            g = poly_mul(g, self.minimal_poly(rep));
        }
        g
    }
}

fn poly_mul(a: u128, b: u128) -> u128 {
    let mut out = 0u128;
    for i in 0..128 {
        if b >> i & 1 == 1 {
            out ^= a << i;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitive_polys_generate_full_group() {
        for m in 2..=7 {
            let f = Gf2m::new(m).unwrap();
            let mut seen = f.exp[..f.order()].to_vec();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), f.order(), "m = {m}");
        }
    }

    #[test]
    fn bch_7_4_generator_is_x3_x_1() {
        assert_eq!(bch_generator_poly(3, 1).unwrap(), 0b1011);
        let code = build_bch(3, 1).unwrap();
        assert_eq!((code.n(), code.k(), code.t()), (7, 4, 1));
    }

    #[test]
    fn unsupported_parameters() {
        assert!(matches!(build_bch(8, 1), Err(Error::UnsupportedParameter(_))));
        assert!(matches!(build_bch(1, 1), Err(Error::UnsupportedParameter(_))));
        assert!(matches!(build_bch(4, 0), Err(Error::UnsupportedParameter(_))));
        assert!(matches!(build_bch(4, 8), Err(Error::UnsupportedParameter(_))));
    }

    #[test]
    fn length_mismatch_is_dimension_error() {
        let code = build_bch(3, 1).unwrap();
        assert!(matches!(code.syndrome(&[0; 6]), Err(Error::Dimension { .. })));
        assert!(matches!(code.encode(&[0; 5]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn single_bit_syndrome_is_column_of_h() {
        let code = build_bch(4, 2).unwrap();
        let h = code.parity_check();
        for i in 0..code.n() {
            let mut w = vec![0u8; code.n()];
            w[i] = 1;
            let col: Vec<u8> = (0..h.rows()).map(|r| h.get(r, i)).collect();
            assert_eq!(code.syndrome(&w).unwrap(), col);
        }
    }

    #[test]
    fn repetition_code_distance() {
        let rep = LinearCode::repetition(3).unwrap();
        assert_eq!(rep.min_distance().unwrap(), 3);
        assert_eq!(rep.t(), 1);
    }

    #[test]
    fn min_distance_refuses_large_k() {
        let code = build_bch(6, 3).unwrap();
        assert!(matches!(code.min_distance(), Err(Error::Capacity(_))));
        assert_eq!(code.d_min(), Some(7));
    }

    #[test]
    fn descriptor_rejects_bad_rows() {
        let text = "7 4 1\n1011100\n0101110\n11x0111\n";
        let err = LinearCode::read_descriptor(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        let short = "7 4 1\n1011100\n";
        assert!(LinearCode::read_descriptor(short.as_bytes()).is_err());
    }

    #[test]
    fn pattern_count_matches_binomial_sum() {
        assert_eq!(patterns_up_to(7, 1), 8);
        assert_eq!(patterns_up_to(15, 2), 1 + 15 + 105);
        let mut count = 0;
        for_each_pattern(15, 2, |_| count += 1);
        assert_eq!(count, 121);
    }
}
