//! Labelled planar rooted trees, their values, cluster classification and the
//! line-counting bounds.
//!
//! Nodes are stored in preorder, so the descendants of node `v` are exactly the
//! indices `v..v + size(v)`. The line leaving node `v` is identified with `v`.
//! A tree may carry one marked *entry* leaf: it stands for the line entering a
//! self-energy structure, has no node factor, and shifts the momenta of the lines
//! above it by the external argument `x`.

use std::collections::HashMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forcing::ForcingSpec;
use crate::frequency::{DivisorTable, FrequencyVector};
use crate::mode::Mode;
use crate::scales::CutoffFamily;
use crate::trig::TrigPolynomial;

/// Default largest order the enumerators accept.
pub const DEFAULT_ORDER_CAP: usize = 6;

/// Scale of a line that lies outside every resolved window (argument 0).
pub const UNBOUNDED_SCALE: i64 = i64::MAX / 4;

#[derive(Clone, Debug, PartialEq)]
pub struct LabelledTree {
    pub modes: Vec<Mode>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    /// Subtree sizes (node counts, entry leaf included).
    pub size: Vec<usize>,
    pub entry: Option<usize>,
    /// Momentum of each node's line, without the entry contribution.
    pub momentum: Vec<Mode>,
    /// Whether the node's subtree contains the entry leaf.
    pub on_path: Vec<bool>,
    /// Scale labels per line; `-1` for a zero-momentum root line.
    pub scales: Vec<i64>,
}

impl LabelledTree {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Number of nodes carrying a node factor.
    pub fn order(&self) -> usize {
        self.modes.len() - usize::from(self.entry.is_some())
    }

    pub fn total_momentum(&self) -> Mode {
        self.momentum[0]
    }

    pub fn s(&self, v: usize) -> usize {
        self.children[v].len()
    }

    pub fn is_node(&self, v: usize) -> bool {
        Some(v) != self.entry
    }

    /// Lines carrying a propagator: every node line, except the entry line and,
    /// for a structure, the exiting (root) line.
    pub fn internal_lines(&self) -> impl Iterator<Item = usize> + '_ {
        let skip_root = self.entry.is_some();
        (0..self.len()).filter(move |&v| self.is_node(v) && !(skip_root && v == 0))
    }

    /// `K = sum_v |nu_v|`.
    pub fn mode_mass(&self) -> u64 {
        self.modes.iter().map(|m| m.norm1()).sum()
    }

    /// Argument `omega . nu_l` of the line leaving `v`, given the external argument `x`.
    pub fn argument(&self, v: usize, divisors: &DivisorTable, x: f64) -> f64 {
        let base = divisors.get(&self.momentum[v]);
        if self.on_path[v] {
            base + x
        } else {
            base
        }
    }

    /// Node indices of the subgraph between the line of `v` (exiting) and the
    /// line of `w` (entering).
    pub fn between(&self, v: usize, w: usize) -> impl Iterator<Item = usize> + '_ {
        let (lo, hi) = (w, w + self.size[w]);
        (v..v + self.size[v]).filter(move |&u| u < lo || u >= hi)
    }

    pub fn is_descendant(&self, w: usize, v: usize) -> bool {
        w > v && w < v + self.size[v]
    }

    /// Recompute momenta bottom-up from the node modes.
    pub fn recompute_momenta(&self) -> Vec<Mode> {
        let d = self.modes[0].dim();
        let mut out = vec![Mode::zero(d); self.len()];
        for v in (0..self.len()).rev() {
            let mut m = self.modes[v];
            for &c in &self.children[v] {
                m = m + out[c];
            }
            out[v] = m;
        }
        out
    }

    /// Parenthesised planar encoding, `mode@scale(children)`; the entry leaf is `*`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        self.dump_from(0, &mut s);
        s
    }

    fn dump_from(&self, v: usize, out: &mut String) {
        if Some(v) == self.entry {
            out.push('*');
            return;
        }
        let _ = write!(out, "{}@{}", self.modes[v], self.scales[v]);
        if !self.children[v].is_empty() {
            out.push('[');
            for (i, &c) in self.children[v].iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                self.dump_from(c, out);
            }
            out.push(']');
        }
    }
}

/// All planar rooted trees with `n` nodes, as preorder child-count sequences.
pub fn planar_shapes(n: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, open: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let placed = cur.len();
        if placed == n {
            if open == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let left_after = n - placed - 1;
        // placing one node closes one slot and opens s new ones
        for s in 0..=left_after {
            let next_open = open - 1 + s;
            if next_open > left_after || (next_open == 0 && left_after > 0) {
                continue;
            }
            cur.push(s);
            go(n, next_open, cur, out);
            cur.pop();
        }
    }
    let mut out = vec![];
    if n > 0 {
        go(n, 1, &mut vec![], &mut out);
    }
    out
}

fn skeleton_from_shape(shape: &[usize]) -> (Vec<Option<usize>>, Vec<Vec<usize>>, Vec<usize>) {
    let n = shape.len();
    let mut parent = vec![None; n];
    let mut children = vec![vec![]; n];
    let mut stack: Vec<(usize, usize)> = vec![];
    for (i, &s) in shape.iter().enumerate() {
        while let Some(top) = stack.last_mut() {
            if top.1 == 0 {
                stack.pop();
            } else {
                top.1 -= 1;
                parent[i] = Some(top.0);
                children[top.0].push(i);
                break;
            }
        }
        if s > 0 {
            stack.push((i, s));
        }
    }
    let mut size = vec![1; n];
    for i in (0..n).rev() {
        if let Some(p) = parent[i] {
            size[p] += size[i];
        }
    }
    (parent, children, size)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TreeSet {
    Plain,
    Renormalised,
}

/// Shared data for enumeration and evaluation.
pub struct TreeContext<'a> {
    pub spec: &'a ForcingSpec,
    pub family: &'a CutoffFamily,
    pub divisors: DivisorTable,
    pub cap: usize,
    factors: HashMap<(Mode, usize), TrigPolynomial>,
}

impl<'a> TreeContext<'a> {
    /// Divisors are tabulated for momenta up to `max_order * N_f`.
    pub fn new(
        spec: &'a ForcingSpec,
        omega: &FrequencyVector,
        family: &'a CutoffFamily,
        max_order: usize,
    ) -> Result<Self> {
        if omega.dim() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                got: omega.dim(),
            });
        }
        let radius = (max_order as u64 * spec.max_norm()).max(1);
        let divisors = DivisorTable::build(omega, radius)?;
        let mut factors = HashMap::new();
        for nu in spec.support() {
            for s in 0..=max_order {
                let f = spec.node_factor(&nu, s as u32);
                if !f.is_zero() {
                    factors.insert((nu, s), f);
                }
            }
        }
        Ok(TreeContext {
            spec,
            family,
            divisors,
            cap: max_order.max(DEFAULT_ORDER_CAP),
            factors,
        })
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn node_factor(&self, nu: &Mode, s: usize) -> Option<&TrigPolynomial> {
        self.factors.get(&(*nu, s))
    }

    fn check_order(&self, k: usize) -> Result<()> {
        if k > self.cap {
            return Err(Error::OrderCapExceeded { k, cap: self.cap });
        }
        let need = k as u64 * self.spec.max_norm();
        if need > self.divisors.radius() {
            return Err(Error::OrderCapExceeded {
                k,
                cap: (self.divisors.radius() / self.spec.max_norm().max(1)) as usize,
            });
        }
        Ok(())
    }

    /// Product of node factors.
    pub fn node_product(&self, t: &LabelledTree) -> TrigPolynomial {
        let mut p = TrigPolynomial::constant(1.0);
        for v in 0..t.len() {
            if t.is_node(v) {
                p = &p
                    * self
                        .node_factor(&t.modes[v], t.s(v))
                        .expect("enumerated with nonzero factor");
            }
        }
        p
    }

    /// Undressed propagator product `prod Psi_{n_l}(x_l) / x_l^2` for the stored labels.
    pub fn propagator_product(&self, t: &LabelledTree, x: f64) -> Result<f64> {
        let mut w = 1.0;
        for v in t.internal_lines() {
            if t.scales[v] < 0 {
                continue;
            }
            let a = t.argument(v, &self.divisors, x);
            if a == 0.0 {
                return Ok(0.0);
            }
            let psi = self.family.big_psi(t.scales[v] as usize, a)?;
            w *= psi / (a * a);
        }
        Ok(w)
    }

    /// Value with undressed propagators.
    pub fn tree_value(&self, t: &LabelledTree, x: f64) -> Result<TrigPolynomial> {
        let w = self.propagator_product(t, x)?;
        if w == 0.0 {
            return Ok(TrigPolynomial::zero());
        }
        Ok(self.node_product(t).scale_real(w))
    }

    /// Every admissible scale assignment of the internal lines at external argument `x`,
    /// with the product of the cutoff weights. Lines whose argument vanishes make the
    /// list empty.
    pub fn scale_assignments(&self, t: &LabelledTree, x: f64) -> Result<Vec<(Vec<i64>, f64)>> {
        let mut base = vec![UNBOUNDED_SCALE; t.len()];
        if t.entry.is_none() && t.momentum[0].is_zero() {
            base[0] = -1;
        }
        let mut out = vec![(base, 1.0)];
        for v in t.internal_lines() {
            if t.entry.is_none() && v == 0 && t.momentum[0].is_zero() {
                continue;
            }
            let a = t.argument(v, &self.divisors, x);
            if a == 0.0 {
                return Ok(vec![]);
            }
            let opts = self.family.admissible_scales(a)?;
            let mut next = Vec::with_capacity(out.len() * opts.len());
            for (lab, w) in &out {
                for &(n, p) in &opts {
                    let mut l = lab.clone();
                    l[v] = n as i64;
                    next.push((l, w * p));
                }
            }
            out = next;
        }
        Ok(out)
    }
}

impl TreeContext<'_> {
    /// Scale assignments using only scales `0..=nmax`, weighted by the cutoffs.
    /// Empty when some line has a vanishing argument or no admissible scale in range.
    pub fn scale_assignments_upto(
        &self,
        t: &LabelledTree,
        x: f64,
        nmax: i64,
    ) -> Result<Vec<(Vec<i64>, f64)>> {
        let mut out = vec![(vec![UNBOUNDED_SCALE; t.len()], 1.0)];
        for v in t.internal_lines() {
            let a = t.argument(v, &self.divisors, x);
            if a == 0.0 || nmax < 0 {
                return Ok(vec![]);
            }
            let mut opts = Vec::with_capacity(2);
            for q in 0..=(nmax as usize).min(self.family.depth().saturating_sub(1)) {
                let w = self.family.big_psi(q, a)?;
                if w > 0.0 {
                    opts.push((q as i64, w));
                }
            }
            if opts.is_empty() {
                return Ok(vec![]);
            }
            let mut next = Vec::with_capacity(out.len() * opts.len());
            for (lab, w) in &out {
                for &(q, p) in &opts {
                    let mut l = lab.clone();
                    l[v] = q;
                    next.push((l, w * p));
                }
            }
            out = next;
        }
        Ok(out)
    }
}

/// Unlabelled skeletons (shape plus modes) with nonzero node factors.
///
/// With `entry`, one non-root leaf of a `k + 1` node shape is the entry leaf and the
/// total momentum is forced to zero. Momenta of lines off the entry path must be nonzero.
pub fn enumerate_skeletons(
    ctx: &TreeContext,
    k: usize,
    entry: bool,
    total: Option<Mode>,
    visit: &mut dyn FnMut(&LabelledTree),
) -> Result<()> {
    ctx.check_order(k)?;
    if k == 0 {
        return Ok(());
    }
    let d = ctx.spec.dim();
    let support = ctx.spec.support();
    let n = k + usize::from(entry);
    let total = if entry { Some(Mode::zero(d)) } else { total };
    for shape in planar_shapes(n) {
        let (parent, children, size) = skeleton_from_shape(&shape);
        let entries: Vec<Option<usize>> = if entry {
            (1..n).filter(|&i| shape[i] == 0).map(Some).collect()
        } else {
            vec![None]
        };
        for e in entries {
            let mut t = LabelledTree {
                modes: vec![Mode::zero(d); n],
                parent: parent.clone(),
                children: children.clone(),
                size: size.clone(),
                entry: e,
                momentum: vec![Mode::zero(d); n],
                on_path: vec![false; n],
                scales: vec![0; n],
            };
            assign_modes(ctx, &support, &mut t, n, total, visit);
        }
    }
    Ok(())
}

fn assign_modes(
    ctx: &TreeContext,
    support: &[Mode],
    t: &mut LabelledTree,
    upto: usize,
    total: Option<Mode>,
    visit: &mut dyn FnMut(&LabelledTree),
) {
    if upto == 0 {
        if total.is_none_or(|m| m == t.momentum[0]) {
            visit(t);
        }
        return;
    }
    let v = upto - 1;
    let mut below = Mode::zero(t.modes[0].dim());
    let mut path = Some(v) == t.entry;
    for &c in &t.children[v] {
        below = below + t.momentum[c];
        path |= t.on_path[c];
    }
    t.on_path[v] = path;
    if Some(v) == t.entry {
        t.momentum[v] = below;
        assign_modes(ctx, support, t, v, total, visit);
        return;
    }
    let s = t.children[v].len();
    for nu in support {
        if ctx.node_factor(nu, s).is_none() {
            continue;
        }
        let m = *nu + below;
        if v != 0 && !path && m.is_zero() {
            continue;
        }
        if (m.norm1()) > ctx.divisors.radius() {
            continue;
        }
        t.modes[v] = *nu;
        t.momentum[v] = m;
        assign_modes(ctx, support, t, v, total, visit);
    }
}

/// Trees of order `k` (optionally with fixed total momentum), one per admissible
/// scale assignment. Under sharp cutoffs every line has exactly one label.
pub fn enumerate_trees(
    ctx: &TreeContext,
    k: usize,
    total: Option<Mode>,
    set: TreeSet,
    visit: &mut dyn FnMut(&LabelledTree, f64),
) -> Result<()> {
    let mut err = None;
    enumerate_skeletons(ctx, k, false, total, &mut |sk| {
        if err.is_some() {
            return;
        }
        match ctx.scale_assignments(sk, 0.0) {
            Ok(labels) => {
                let mut t = sk.clone();
                for (lab, w) in labels {
                    t.scales = lab;
                    if set == TreeSet::Renormalised && !is_renormalised(&t, None) {
                        continue;
                    }
                    visit(&t, w);
                }
            }
            Err(e) => err = Some(e),
        }
    })?;
    err.map_or(Ok(()), Err)
}

/// `sum` of undressed tree values over trees of order `k` and total momentum `nu`.
pub fn sum_trees(ctx: &TreeContext, k: usize, nu: &Mode, set: TreeSet) -> Result<TrigPolynomial> {
    let mut acc = TrigPolynomial::zero();
    let mut err = None;
    enumerate_trees(ctx, k, Some(*nu), set, &mut |t, _| {
        if err.is_some() {
            return;
        }
        match ctx.tree_value(t, 0.0) {
            Ok(v) => acc += &v,
            Err(e) => err = Some(e),
        }
    })?;
    err.map_or(Ok(acc), Err)
}

/// Which self-energy definition to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SelfEnergyRule {
    /// Both external scales exceed the internal scale.
    Strict,
    /// Both external scales exceed the internal scale by at least 2.
    Gapped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SubgraphKind {
    /// Single node with zero mode and one entering line.
    ScaleMinusOne,
    SelfEnergy,
    LeftFake,
    RightFake,
}

/// A subgraph with one entering line (leaving `lower`) and one exiting line
/// (leaving `upper`) with equal momenta.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Subgraph {
    pub upper: usize,
    pub lower: usize,
    /// Largest internal scale, `-1` for a single node.
    pub scale: i64,
    pub kind: SubgraphKind,
}

fn line_scale(t: &LabelledTree, v: usize, external: i64) -> i64 {
    if Some(v) == t.entry || (t.entry.is_some() && v == 0) {
        external
    } else {
        t.scales[v]
    }
}

/// Equal-momentum subgraphs of `t` classified under `rule`. External lines of a
/// structure get scale `external`. Pairs that are neither self-energy nor fake are
/// omitted.
pub fn classify_subgraphs(t: &LabelledTree, rule: SelfEnergyRule, external: i64) -> Vec<Subgraph> {
    let mut out = vec![];
    for v in 0..t.len() {
        if !t.is_node(v) {
            continue;
        }
        for w in v + 1..v + t.size[v] {
            if t.momentum[v] != t.momentum[w] || t.on_path[v] != t.on_path[w] {
                continue;
            }
            let mut scale = -1i64;
            let mut count = 0;
            for u in t.between(v, w) {
                if u != v {
                    scale = scale.max(line_scale(t, u, external));
                    count += 1;
                }
            }
            if count == 0 {
                if t.modes[v].is_zero() && t.s(v) == 1 {
                    out.push(Subgraph {
                        upper: v,
                        lower: w,
                        scale: -1,
                        kind: SubgraphKind::ScaleMinusOne,
                    });
                }
                continue;
            }
            let (nu_out, nu_in) = (line_scale(t, v, external), line_scale(t, w, external));
            let gap = match rule {
                SelfEnergyRule::Strict => 1,
                SelfEnergyRule::Gapped => 2,
            };
            let kind = if nu_out.min(nu_in) >= scale.saturating_add(gap) {
                SubgraphKind::SelfEnergy
            } else if nu_in == scale + 1 && nu_out == scale {
                SubgraphKind::LeftFake
            } else if nu_in == scale && nu_out == scale + 1 {
                SubgraphKind::RightFake
            } else {
                continue;
            };
            out.push(Subgraph {
                upper: v,
                lower: w,
                scale,
                kind,
            });
        }
    }
    out
}

fn is_self_energy(s: &Subgraph) -> bool {
    matches!(
        s.kind,
        SubgraphKind::SelfEnergy | SubgraphKind::ScaleMinusOne
    )
}

/// No self-energy cluster (strict rule) appears, other than the structure itself.
pub fn is_renormalised(t: &LabelledTree, external: Option<i64>) -> bool {
    let ext = external.unwrap_or(UNBOUNDED_SCALE);
    classify_subgraphs(t, SelfEnergyRule::Strict, ext)
        .iter()
        .filter(|s| is_self_energy(s))
        .all(|s| t.entry.is_some() && s.upper == 0 && Some(s.lower) == t.entry)
}

/// Lines exiting a self-energy cluster under `rule`.
pub fn resonant_lines(t: &LabelledTree, rule: SelfEnergyRule, external: i64) -> Vec<bool> {
    let mut res = vec![false; t.len()];
    for s in classify_subgraphs(t, rule, external)
        .iter()
        .filter(|s| is_self_energy(s))
    {
        res[s.upper] = true;
    }
    res
}

/// `N_n` over the given lines: how many have scale `>= n`.
pub fn count_lines_on_scale(
    t: &LabelledTree,
    lines: impl Iterator<Item = usize>,
    n: i64,
    exclude: Option<&[bool]>,
) -> usize {
    lines
        .filter(|&v| t.scales[v] >= n && t.scales[v] != UNBOUNDED_SCALE)
        .filter(|&v| exclude.is_none_or(|r| !r[v]))
        .count()
}

/// Margin `4 K - N * 2^{m_n}` of the bound `N <= 2^{-(m_n - 2)} K`; negative means violated.
pub fn counting_slack(count: usize, mass: u64, m_n: usize) -> i128 {
    4 * mass as i128 - (count as i128) * (1i128 << m_n)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CountingReport {
    pub trees_checked: usize,
    pub renormalised_trees: usize,
    pub strict_clusters: usize,
    pub gapped_clusters: usize,
    pub violations: Vec<String>,
    /// Smallest slack per scale `n`.
    pub min_slack: Vec<i128>,
}

impl CountingReport {
    fn record(&mut self, n: usize, slack: i128, what: impl FnOnce() -> String) {
        if self.min_slack.len() <= n {
            self.min_slack.resize(n + 1, i128::MAX);
        }
        self.min_slack[n] = self.min_slack[n].min(slack);
        if slack < 0 {
            self.violations.push(what());
        }
    }
}

/// Exhaustive sweep of the line-counting bounds over all trees of order `1..=max_k`
/// with nonzero value.
pub fn counting_sweep(ctx: &TreeContext, ms: &[usize], max_k: usize) -> Result<CountingReport> {
    let mut rep = CountingReport::default();
    let depth = ms.len().min(ctx.family.depth());
    for k in 1..=max_k {
        enumerate_trees(ctx, k, None, TreeSet::Plain, &mut |t, _| {
            rep.trees_checked += 1;
            let all: Vec<usize> = t.internal_lines().collect();
            let mass = t.mode_mass();
            let strict = classify_subgraphs(t, SelfEnergyRule::Strict, UNBOUNDED_SCALE);
            let gapped = classify_subgraphs(t, SelfEnergyRule::Gapped, UNBOUNDED_SCALE);
            let resonant = resonant_lines(t, SelfEnergyRule::Gapped, UNBOUNDED_SCALE);
            let strict_se: Vec<&Subgraph> = strict.iter().filter(|s| is_self_energy(s)).collect();
            if strict_se.is_empty() {
                rep.renormalised_trees += 1;
                for n in 0..depth {
                    let c = count_lines_on_scale(t, all.iter().copied(), n as i64, None);
                    rep.record(n, counting_slack(c, mass, ms[n]), || {
                        format!("tree bound n={n}: {}", t.dump())
                    });
                }
            }
            for n in 0..depth {
                let c = count_lines_on_scale(t, all.iter().copied(), n as i64, Some(&resonant));
                rep.record(n, counting_slack(c, mass, ms[n]), || {
                    format!("non-resonant tree bound n={n}: {}", t.dump())
                });
            }
            for s in strict_se
                .iter()
                .filter(|s| s.kind == SubgraphKind::SelfEnergy)
            {
                // renormalised: no other strict self-energy cluster strictly inside
                let inner = strict_se.iter().any(|o| {
                    (o.upper, o.lower) != (s.upper, s.lower)
                        && (o.upper == s.upper || t.is_descendant(o.upper, s.upper))
                        && !(o.upper == s.lower || t.is_descendant(o.upper, s.lower))
                        && !t.is_descendant(s.lower, o.lower)
                        && s.lower != o.lower
                });
                if inner {
                    continue;
                }
                rep.strict_clusters += 1;
                let lines: Vec<usize> = t
                    .between(s.upper, s.lower)
                    .filter(|&u| u != s.upper)
                    .collect();
                let kmass: u64 = t
                    .between(s.upper, s.lower)
                    .map(|u| t.modes[u].norm1())
                    .sum();
                for p in 0..=(s.scale as usize).min(depth - 1) {
                    let c = count_lines_on_scale(t, lines.iter().copied(), p as i64, None);
                    rep.record(p, counting_slack(c, kmass, ms[p]), || {
                        format!(
                            "cluster bound p={p} ({},{}): {}",
                            s.upper,
                            s.lower,
                            t.dump()
                        )
                    });
                }
            }
            for s in gapped.iter().filter(|s| s.kind == SubgraphKind::SelfEnergy) {
                rep.gapped_clusters += 1;
                let lines: Vec<usize> = t
                    .between(s.upper, s.lower)
                    .filter(|&u| u != s.upper)
                    .collect();
                let kmass: u64 = t
                    .between(s.upper, s.lower)
                    .map(|u| t.modes[u].norm1())
                    .sum();
                for p in 0..=(s.scale as usize).min(depth - 1) {
                    let c =
                        count_lines_on_scale(t, lines.iter().copied(), p as i64, Some(&resonant));
                    rep.record(p, counting_slack(c, kmass, ms[p]), || {
                        format!(
                            "non-resonant cluster bound p={p} ({},{}): {}",
                            s.upper,
                            s.lower,
                            t.dump()
                        )
                    });
                }
            }
        })?;
    }
    Ok(rep)
}

/// Sweep of the cluster bounds over standalone self-energy structures of order
/// `2..=max_k`, entered by every lattice momentum in `entering` whose divisor is
/// not on scale 0.
pub fn structure_counting_sweep(
    ctx: &TreeContext,
    omega: &FrequencyVector,
    ms: &[usize],
    max_k: usize,
    entering: &[Mode],
) -> Result<CountingReport> {
    let mut rep = CountingReport::default();
    let depth = ms.len().min(ctx.family.depth());
    let mut externals = vec![];
    for mu in entering {
        let x = omega.divisor(mu)?;
        let top = ctx.family.top_scale(x)? as i64;
        if top >= 1 {
            externals.push((x, top));
        }
    }
    let mut err = None;
    for k in 2..=max_k {
        enumerate_skeletons(ctx, k, true, None, &mut |sk| {
            if err.is_some() {
                return;
            }
            let kmass = sk.mode_mass();
            for &(x, ext) in &externals {
                let labels = match ctx.scale_assignments(sk, x) {
                    Ok(l) => l,
                    Err(e) => {
                        err = Some(e);
                        return;
                    }
                };
                for (lab, _) in labels {
                    let mut t = sk.clone();
                    t.scales = lab;
                    rep.trees_checked += 1;
                    let lines: Vec<usize> = t.internal_lines().collect();
                    let n = lines.iter().map(|&v| t.scales[v]).max().unwrap_or(-1);
                    if n < ext && is_renormalised(&t, Some(ext)) {
                        rep.strict_clusters += 1;
                        for p in 0..=(n.max(0) as usize).min(depth - 1) {
                            let c = count_lines_on_scale(&t, lines.iter().copied(), p as i64, None);
                            rep.record(p, counting_slack(c, kmass, ms[p]), || {
                                format!("cluster bound p={p} x={x}: {}", t.dump())
                            });
                        }
                    }
                    if n + 2 <= ext {
                        rep.gapped_clusters += 1;
                        let mut resonant = resonant_lines(&t, SelfEnergyRule::Gapped, ext);
                        resonant[0] = false;
                        for p in 0..=(n.max(0) as usize).min(depth - 1) {
                            let c = count_lines_on_scale(
                                &t,
                                lines.iter().copied(),
                                p as i64,
                                Some(&resonant),
                            );
                            rep.record(p, counting_slack(c, kmass, ms[p]), || {
                                format!("non-resonant cluster bound p={p} x={x}: {}", t.dump())
                            });
                        }
                    }
                }
            }
        })?;
    }
    err.map_or(Ok(rep), Err)
}

/// Sum of `c * e^{i j beta}` style complex weights, used when accumulating values.
pub fn accumulate(acc: &mut TrigPolynomial, value: &TrigPolynomial, weight: f64) {
    acc.add_scaled(value, Complex64::new(weight, 0.0));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frequency::{scale_sequence, BryunoTable};
    use crate::scales::Cutoff;
    use crate::series::SeriesTable;

    fn catalan(n: usize) -> usize {
        let mut c = 1usize;
        for i in 0..n {
            c = c * 2 * (2 * i + 1) / (i + 2);
        }
        c
    }

    #[test]
    fn shape_counts_are_catalan() {
        for n in 1..=8 {
            assert_eq!(planar_shapes(n).len(), catalan(n - 1), "n = {n}");
        }
    }

    fn setup(variant: Cutoff) -> (FrequencyVector, CutoffFamily, Vec<usize>) {
        let w = FrequencyVector::golden(128).unwrap();
        let t = BryunoTable::compute(&w, 12, 14).unwrap();
        let s = scale_sequence(&t);
        let f = CutoffFamily::new(variant, &t, &s).unwrap();
        (w, f, s.ms)
    }

    #[test]
    fn small_enumerations() {
        let spec = ForcingSpec::bundled("cos_a1_cos_b").unwrap();
        let (w, fam, _) = setup(Cutoff::Sharp);
        let ctx = TreeContext::new(&spec, &w, &fam, 6).unwrap();
        let mut n = 0;
        enumerate_trees(
            &ctx,
            1,
            Some(Mode::new(&[1, 0])),
            TreeSet::Plain,
            &mut |_, _| n += 1,
        )
        .unwrap();
        assert_eq!(n, 1);
        let mut trees = vec![];
        enumerate_trees(
            &ctx,
            2,
            Some(Mode::new(&[2, 0])),
            TreeSet::Plain,
            &mut |t, _| trees.push(t.clone()),
        )
        .unwrap();
        assert_eq!(trees.len(), 1);
        assert_eq!(trees[0].modes, vec![Mode::new(&[1, 0]), Mode::new(&[1, 0])]);
        let mut zero = 0;
        enumerate_trees(&ctx, 2, Some(Mode::zero(2)), TreeSet::Plain, &mut |_, _| {
            zero += 1
        })
        .unwrap();
        assert_eq!(zero, 2);
        assert!(matches!(
            enumerate_trees(&ctx, 7, None, TreeSet::Plain, &mut |_, _| {}),
            Err(Error::OrderCapExceeded { .. })
        ));
    }

    #[test]
    fn values_match_hand_results() {
        let spec = ForcingSpec::bundled("cos_a1_cos_b").unwrap();
        let (w, fam, _) = setup(Cutoff::Sharp);
        let ctx = TreeContext::new(&spec, &w, &fam, 6).unwrap();
        let b1 = sum_trees(&ctx, 1, &Mode::new(&[1, 0]), TreeSet::Plain).unwrap();
        assert!(b1.max_deviation(&TrigPolynomial::sin(1).scale_real(-0.5)) < 1e-15);
        let g1 = sum_trees(&ctx, 2, &Mode::zero(2), TreeSet::Plain).unwrap();
        assert!(g1.max_deviation(&TrigPolynomial::sin(2).scale_real(0.25)) < 1e-15);
        let b2 = sum_trees(&ctx, 2, &Mode::new(&[2, 0]), TreeSet::Plain).unwrap();
        // (-cos/2)(-sin/2) / 1 / 4
        assert!(b2.max_deviation(&TrigPolynomial::sin(2).scale_real(1.0 / 32.0)) < 1e-15);
        assert!(sum_trees(&ctx, 1, &Mode::new(&[3, 0]), TreeSet::Plain)
            .unwrap()
            .is_zero());
    }

    #[test]
    fn smooth_labels_sum_like_sharp() {
        let spec = ForcingSpec::bundled("pendulum_like").unwrap();
        let (w, sharp, _) = setup(Cutoff::Sharp);
        let smooth = sharp.with_variant(Cutoff::Smooth);
        let series = SeriesTable::extend_series(&spec, &w, 3).unwrap();
        let ctx = TreeContext::new(&spec, &w, &smooth, 6).unwrap();
        for nu in Mode::ball(2, 3) {
            let mut acc = TrigPolynomial::zero();
            let mut labels_ok = true;
            enumerate_trees(&ctx, 3, Some(nu), TreeSet::Plain, &mut |t, _| {
                acc += &ctx.tree_value(t, 0.0).unwrap();
                labels_ok &= t.internal_lines().all(|v| t.scales[v] >= 0);
            })
            .unwrap();
            assert!(labels_ok);
            let want = series.b(3, &nu);
            assert!(
                acc.max_deviation(&want) <= 1e-12 * (1.0 + want.max_abs_coeff()),
                "nu = {nu}"
            );
        }
    }

    #[test]
    fn conservation_and_node_sum() {
        let spec = ForcingSpec::bundled("pendulum_like").unwrap();
        let (w, fam, _) = setup(Cutoff::Sharp);
        let ctx = TreeContext::new(&spec, &w, &fam, 6).unwrap();
        for k in 1..=4 {
            enumerate_trees(&ctx, k, None, TreeSet::Plain, &mut |t, _| {
                assert_eq!(t.recompute_momenta(), t.momentum);
                assert_eq!((0..t.len()).map(|v| t.s(v)).sum::<usize>(), k - 1);
                for v in 1..t.len() {
                    assert!(!t.momentum[v].is_zero());
                }
                assert_eq!(t.scales[0] == -1, t.momentum[0].is_zero());
            })
            .unwrap();
        }
    }

    #[test]
    fn dump_format() {
        let spec = ForcingSpec::bundled("cos_a1_cos_b").unwrap();
        let (w, fam, _) = setup(Cutoff::Sharp);
        let ctx = TreeContext::new(&spec, &w, &fam, 6).unwrap();
        let mut dumps = vec![];
        enumerate_trees(
            &ctx,
            2,
            Some(Mode::new(&[2, 0])),
            TreeSet::Plain,
            &mut |t, _| dumps.push(t.dump()),
        )
        .unwrap();
        assert_eq!(dumps, vec!["(1,0)@0[(1,0)@0]".to_string()]);
    }

    #[test]
    fn structures_and_scale_minus_one() {
        let spec = ForcingSpec::bundled("pendulum_like").unwrap();
        let (w, fam, _) = setup(Cutoff::Sharp);
        let ctx = TreeContext::new(&spec, &w, &fam, 6).unwrap();
        let mut found = vec![];
        enumerate_skeletons(&ctx, 1, true, None, &mut |t| found.push(t.clone())).unwrap();
        assert_eq!(found.len(), 1);
        let subs = classify_subgraphs(&found[0], SelfEnergyRule::Strict, UNBOUNDED_SCALE);
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].kind, SubgraphKind::ScaleMinusOne);
    }

    #[test]
    fn counting_on_single_line() {
        // order-1 tree with |nu| = 1 and line on scale 0
        assert!(counting_slack(1, 1, 0) >= 0);
        assert_eq!(counting_slack(1, 1, 0), 3);
        assert!(counting_slack(3, 1, 2) < 0);
    }
}
