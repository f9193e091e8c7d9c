//! Evaluable holomorphic expressions over the plane.
//!
//! Expressions are reference-counted DAGs so that deformation sweeps, which
//! repeatedly wrap earlier data in new factors, grow linearly instead of
//! exponentially. Evaluation goes through a compiled [`Tape`]: a topologically
//! sorted slot program shared by every component of a Weierstrass triple.
//!
//! Pole sets are *declared* by constructors (rational atoms know their
//! denominator roots); zero-freeness is tracked structurally (`exp` is always
//! zero-free, products of zero-free maps are zero-free) and can be certified
//! on a point sample. Symbolic zero detection is not attempted.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_complex::Complex64;
use serde_json::{json, Value};

use crate::error::HoloError;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug)]
enum Kind {
    Const(Complex64),
    /// The identity map z.
    Z,
    /// p(z)/q(z), coefficients low-to-high. Denominator roots are declared by
    /// the constructor, not recomputed.
    Rational {
        num: Vec<Complex64>,
        den: Vec<Complex64>,
    },
    Sum(Vec<HoloMap>),
    Product(Vec<HoloMap>),
    Pow(HoloMap, i32),
    Exp(HoloMap),
    Recip(HoloMap),
}

#[derive(Debug)]
struct Node {
    id: u64,
    kind: Kind,
    poles: Vec<Complex64>,
    zero_free: bool,
}

/// A holomorphic map on the plane minus its declared poles.
#[derive(Clone, Debug)]
pub struct HoloMap(Arc<Node>);

impl HoloMap {
    fn new(kind: Kind, poles: Vec<Complex64>, zero_free: bool) -> Self {
        HoloMap(Arc::new(Node {
            id: fresh_id(),
            kind,
            poles,
            zero_free,
        }))
    }

    pub fn constant(c: Complex64) -> Self {
        let zf = c.norm() > 0.0;
        Self::new(Kind::Const(c), vec![], zf)
    }

    pub fn real(x: f64) -> Self {
        Self::constant(Complex64::new(x, 0.0))
    }

    pub fn zero() -> Self {
        Self::constant(Complex64::new(0.0, 0.0))
    }

    pub fn one() -> Self {
        Self::constant(Complex64::new(1.0, 0.0))
    }

    pub fn z() -> Self {
        Self::new(Kind::Z, vec![], false)
    }

    /// Polynomial with coefficients low-to-high.
    pub fn poly(coeffs: Vec<Complex64>) -> Self {
        Self::new(
            Kind::Rational {
                num: coeffs,
                den: vec![Complex64::new(1.0, 0.0)],
            },
            vec![],
            false,
        )
    }

    /// p(z)/q(z); `den_roots` declares the poles (with multiplicity collapsed).
    pub fn rational(num: Vec<Complex64>, den: Vec<Complex64>, den_roots: Vec<Complex64>) -> Self {
        Self::new(Kind::Rational { num, den }, den_roots, false)
    }

    /// c/(z - p)^k for k >= 1.
    pub fn pole_term(c: Complex64, p: Complex64, k: u32) -> Self {
        // den = (z-p)^k expanded
        let mut den = vec![Complex64::new(1.0, 0.0)];
        for _ in 0..k {
            let mut next = vec![Complex64::new(0.0, 0.0); den.len() + 1];
            for (i, a) in den.iter().enumerate() {
                next[i + 1] += a;
                next[i] -= a * p;
            }
            den = next;
        }
        Self::rational(vec![c], den, vec![p])
    }

    pub fn sum(terms: Vec<HoloMap>) -> Self {
        let mut poles = vec![];
        for t in &terms {
            merge_poles(&mut poles, &t.0.poles);
        }
        Self::new(Kind::Sum(terms), poles, false)
    }

    pub fn add(a: &HoloMap, b: &HoloMap) -> Self {
        Self::sum(vec![a.clone(), b.clone()])
    }

    pub fn product(factors: Vec<HoloMap>) -> Self {
        let mut poles = vec![];
        let mut zf = true;
        for f in &factors {
            merge_poles(&mut poles, &f.0.poles);
            zf &= f.0.zero_free;
        }
        Self::new(Kind::Product(factors), poles, zf)
    }

    pub fn mul(a: &HoloMap, b: &HoloMap) -> Self {
        Self::product(vec![a.clone(), b.clone()])
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self::mul(&Self::constant(c), self)
    }

    pub fn pow(base: &HoloMap, k: i32) -> Self {
        let zf = base.0.zero_free;
        let poles = base.0.poles.clone();
        Self::new(Kind::Pow(base.clone(), k), poles, zf)
    }

    pub fn exp(arg: &HoloMap) -> Self {
        Self::new(Kind::Exp(arg.clone()), arg.0.poles.clone(), true)
    }

    /// Reciprocal of a structurally zero-free map. The result is pole-free
    /// away from `f`'s own poles (where it vanishes instead).
    pub fn recip(f: &HoloMap) -> Result<Self, HoloError> {
        if !f.0.zero_free {
            return Err(HoloError::ZeroOnDomain);
        }
        let zf = f.0.poles.is_empty();
        Ok(Self::new(Kind::Recip(f.clone()), vec![], zf))
    }

    /// Reciprocal without the zero-free guarantee. Used to present derived
    /// Gauss maps g = Phi3/eta, whose denominator zeros are only known
    /// pointwise. Declared pole set is empty by necessity.
    pub fn recip_unchecked(f: &HoloMap) -> Self {
        Self::new(Kind::Recip(f.clone()), vec![], false)
    }

    pub fn declared_poles(&self) -> &[Complex64] {
        &self.0.poles
    }

    pub fn is_zero_free(&self) -> bool {
        self.0.zero_free
    }

    /// Certify zero-freeness on a sample: structural flag plus |f| > tol at
    /// every sample point.
    pub fn certify_zero_free(&self, samples: &[Complex64], tol: f64) -> Result<(), HoloError> {
        let tape = Tape::compile(&[self.clone()]);
        let mut scratch = tape.scratch();
        for &z in samples {
            let v = tape.eval(z, &mut scratch)[0];
            if !v.is_finite() || v.norm() <= tol {
                return Err(HoloError::ZeroOnDomain);
            }
        }
        Ok(())
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let tape = Tape::compile(&[self.clone()]);
        let mut scratch = tape.scratch();
        tape.eval(z, &mut scratch)[0]
    }

    /// Number of tree nodes after expanding shared subgraphs, saturating.
    pub fn tree_size(&self) -> u64 {
        fn walk(n: &HoloMap, memo: &mut HashMap<u64, u64>) -> u64 {
            if let Some(&s) = memo.get(&n.0.id) {
                return s;
            }
            let s = match &n.0.kind {
                Kind::Const(_) | Kind::Z | Kind::Rational { .. } => 1,
                Kind::Sum(ts) | Kind::Product(ts) => ts
                    .iter()
                    .fold(1u64, |acc, t| acc.saturating_add(walk(t, memo))),
                Kind::Pow(b, _) => 1u64.saturating_add(walk(b, memo)),
                Kind::Exp(a) | Kind::Recip(a) => 1u64.saturating_add(walk(a, memo)),
            };
            memo.insert(n.0.id, s);
            s
        }
        walk(self, &mut HashMap::new())
    }

    /// Tagged-node JSON tree. Fails if the expanded tree would be huge.
    pub fn to_json(&self) -> Result<Value, HoloError> {
        const MAX_TREE: u64 = 1 << 20;
        if self.tree_size() > MAX_TREE {
            return Err(HoloError::TreeTooLarge);
        }
        fn cplx(c: Complex64) -> Value {
            json!([c.re, c.im])
        }
        fn emit(n: &HoloMap) -> Value {
            match &n.0.kind {
                Kind::Const(c) => json!({"op": "const", "value": cplx(*c)}),
                Kind::Z => json!({"op": "z"}),
                Kind::Rational { num, den } => json!({
                    "op": "rational",
                    "num": num.iter().map(|&c| cplx(c)).collect::<Vec<_>>(),
                    "den": den.iter().map(|&c| cplx(c)).collect::<Vec<_>>(),
                    "poles": n.0.poles.iter().map(|&c| cplx(c)).collect::<Vec<_>>(),
                }),
                Kind::Sum(ts) => json!({
                    "op": "sum",
                    "args": ts.iter().map(emit).collect::<Vec<_>>(),
                }),
                Kind::Product(ts) => json!({
                    "op": "product",
                    "args": ts.iter().map(emit).collect::<Vec<_>>(),
                }),
                Kind::Pow(b, k) => json!({"op": "pow", "args": [emit(b)], "k": k}),
                Kind::Exp(a) => json!({"op": "exp", "args": [emit(a)]}),
                Kind::Recip(a) => json!({"op": "recip", "args": [emit(a)]}),
            }
        }
        Ok(emit(self))
    }

    pub fn from_json(v: &Value) -> Result<Self, HoloError> {
        let op = v
            .get("op")
            .and_then(Value::as_str)
            .ok_or(HoloError::BadExpression("missing op".into()))?;
        let cplx = |v: &Value| -> Result<Complex64, HoloError> {
            let arr = v
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or(HoloError::BadExpression("bad complex literal".into()))?;
            Ok(Complex64::new(
                arr[0].as_f64().unwrap_or(f64::NAN),
                arr[1].as_f64().unwrap_or(f64::NAN),
            ))
        };
        let args = |v: &Value| -> Result<Vec<HoloMap>, HoloError> {
            v.get("args")
                .and_then(Value::as_array)
                .ok_or(HoloError::BadExpression("missing args".into()))?
                .iter()
                .map(Self::from_json)
                .collect()
        };
        match op {
            "const" => cplx(v.get("value").unwrap_or(&Value::Null)).map(Self::constant),
            "z" => Ok(Self::z()),
            "rational" => {
                let get = |key: &str| -> Result<Vec<Complex64>, HoloError> {
                    v.get(key)
                        .and_then(Value::as_array)
                        .ok_or(HoloError::BadExpression(format!("missing {key}")))?
                        .iter()
                        .map(&cplx)
                        .collect()
                };
                let poles = if v.get("poles").is_some() { get("poles")? } else { vec![] };
                Ok(Self::rational(get("num")?, get("den")?, poles))
            }
            "sum" => Ok(Self::sum(args(v)?)),
            "product" => Ok(Self::product(args(v)?)),
            "pow" => {
                let k = v
                    .get("k")
                    .and_then(Value::as_i64)
                    .ok_or(HoloError::BadExpression("missing k".into()))? as i32;
                let a = args(v)?;
                if a.len() != 1 {
                    return Err(HoloError::BadExpression("pow wants one arg".into()));
                }
                Ok(Self::pow(&a[0], k))
            }
            "exp" => {
                let a = args(v)?;
                if a.len() != 1 {
                    return Err(HoloError::BadExpression("exp wants one arg".into()));
                }
                Ok(Self::exp(&a[0]))
            }
            "recip" => {
                let a = args(v)?;
                if a.len() != 1 {
                    return Err(HoloError::BadExpression("recip wants one arg".into()));
                }
                Ok(Self::recip_unchecked(&a[0]))
            }
            other => Err(HoloError::BadExpression(format!("unknown op {other}"))),
        }
    }
}

fn merge_poles(into: &mut Vec<Complex64>, from: &[Complex64]) {
    for &p in from {
        if !into.iter().any(|&q| (q - p).norm() < 1e-14) {
            into.push(p);
        }
    }
}

enum TapeOp {
    Const(Complex64),
    Z,
    Rational { num: Vec<Complex64>, den: Vec<Complex64> },
    Sum(Vec<usize>),
    Product(Vec<usize>),
    Pow(usize, i32),
    Exp(usize),
    Recip(usize),
}

/// Compiled straight-line program for one or more maps with shared nodes.
pub struct Tape {
    ops: Vec<TapeOp>,
    outs: Vec<usize>,
}

impl Tape {
    pub fn compile(maps: &[HoloMap]) -> Tape {
        let mut slots: HashMap<u64, usize> = HashMap::new();
        let mut ops = Vec::new();
        let mut outs = Vec::new();
        for m in maps {
            let s = compile_node(m, &mut slots, &mut ops);
            outs.push(s);
        }
        Tape { ops, outs }
    }

    pub fn scratch(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.ops.len()]
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Evaluate all outputs at z. `scratch` must come from [`Tape::scratch`].
    pub fn eval(&self, z: Complex64, scratch: &mut [Complex64]) -> Vec<Complex64> {
        self.eval_into(z, scratch);
        self.outs.iter().map(|&s| scratch[s]).collect()
    }

    pub fn eval_into(&self, z: Complex64, scratch: &mut [Complex64]) {
        for (i, op) in self.ops.iter().enumerate() {
            let v = match op {
                TapeOp::Const(c) => *c,
                TapeOp::Z => z,
                TapeOp::Rational { num, den } => {
                    let n = horner(num, z);
                    let d = horner(den, z);
                    n / d
                }
                TapeOp::Sum(args) => {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for &a in args {
                        acc += scratch[a];
                    }
                    acc
                }
                TapeOp::Product(args) => {
                    let mut acc = Complex64::new(1.0, 0.0);
                    for &a in args {
                        acc *= scratch[a];
                    }
                    acc
                }
                TapeOp::Pow(a, k) => scratch[*a].powi(*k),
                TapeOp::Exp(a) => scratch[*a].exp(),
                TapeOp::Recip(a) => scratch[*a].finv(),
            };
            scratch[i] = v;
        }
    }

    /// Evaluate output `idx` only (still walks the whole tape).
    pub fn eval_one(&self, z: Complex64, scratch: &mut [Complex64], idx: usize) -> Complex64 {
        self.eval_into(z, scratch);
        scratch[self.outs[idx]]
    }
}

fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

fn compile_node(n: &HoloMap, slots: &mut HashMap<u64, usize>, ops: &mut Vec<TapeOp>) -> usize {
    if let Some(&s) = slots.get(&n.0.id) {
        return s;
    }
    let op = match &n.0.kind {
        Kind::Const(c) => TapeOp::Const(*c),
        Kind::Z => TapeOp::Z,
        Kind::Rational { num, den } => TapeOp::Rational {
            num: num.clone(),
            den: den.clone(),
        },
        Kind::Sum(ts) => TapeOp::Sum(ts.iter().map(|t| compile_node(t, slots, ops)).collect()),
        Kind::Product(ts) => {
            TapeOp::Product(ts.iter().map(|t| compile_node(t, slots, ops)).collect())
        }
        Kind::Pow(b, k) => TapeOp::Pow(compile_node(b, slots, ops), *k),
        Kind::Exp(a) => TapeOp::Exp(compile_node(a, slots, ops)),
        Kind::Recip(a) => TapeOp::Recip(compile_node(a, slots, ops)),
    };
    let slot = ops.len();
    ops.push(op);
    slots.insert(n.0.id, slot);
    slot
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pole_term_matches_direct_formula() {
        let f = HoloMap::pole_term(c(2.0, 0.0), c(1.0, -1.0), 2);
        let z = c(0.3, 0.7);
        let expect = c(2.0, 0.0) / (z - c(1.0, -1.0)).powi(2);
        assert!((f.eval(z) - expect).norm() < 1e-13);
        assert_eq!(f.declared_poles().len(), 1);
    }

    #[test]
    fn shared_subgraph_compiles_once() {
        let base = HoloMap::exp(&HoloMap::z());
        let big = HoloMap::sum(vec![base.clone(), base.clone(), base.clone()]);
        let tape = Tape::compile(&[big]);
        // z, exp, sum: sharing collapses the three exp references.
        assert_eq!(tape.len(), 3);
    }

    #[test]
    fn zero_free_structure() {
        let e = HoloMap::exp(&HoloMap::poly(vec![c(0.0, 0.0), c(1.0, 0.0)]));
        assert!(e.is_zero_free());
        let p = HoloMap::mul(&e, &HoloMap::constant(c(2.0, 0.0)));
        assert!(p.is_zero_free());
        let s = HoloMap::add(&e, &HoloMap::one());
        assert!(!s.is_zero_free());
        assert!(HoloMap::recip(&s).is_err());
        assert!(HoloMap::recip(&e).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let f = HoloMap::sum(vec![
            HoloMap::pole_term(c(1.0, 0.0), c(0.5, 0.0), 1),
            HoloMap::exp(&HoloMap::z().scale(c(0.0, 1.0))),
            HoloMap::pow(&HoloMap::z(), 3),
        ]);
        let j = f.to_json().unwrap();
        let g = HoloMap::from_json(&j).unwrap();
        for &z in &[c(0.1, 0.2), c(-0.4, 0.9), c(2.0, -1.0)] {
            assert!((f.eval(z) - g.eval(z)).norm() < 1e-12);
        }
    }
}
