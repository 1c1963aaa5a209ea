//! Exact marginal planting.
//!
//! A plan refines the dataset into strata one attribute at a time. Each step
//! picks a universe (strata matching a pattern over attributes already
//! planted) and splits it by one or two marginal tables, each keyed by other
//! planted attributes. With two tables the split for each value is a
//! transportation problem, solved as a max-flow; the final value of the
//! domain takes whatever remains. Strata that already hold a value for the
//! step's attribute are left as they are, so later steps can fill gaps.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Indigenous,
    Test,
    Sex,
    Care,
    Icu,
    Intubation,
    Vital,
    State,
}

pub const ATTRIBUTE_COUNT: usize = 8;

const TRI: &[&str] = &["Yes", "No", "Unspecified"];
const TEST: &[&str] = &["Positive", "Negative", "Pending"];
const SEX: &[&str] = &["Female", "Male", "Unspecified"];
const CARE: &[&str] = &["Ambulatory", "Hospitalized", "Unspecified"];
const ICU: &[&str] = &["InIcu", "NotInIcu", "NotApplicable", "Unspecified"];
const INTUBATION: &[&str] = &["Intubated", "NotIntubated", "NotApplicable", "Unspecified"];
const VITAL: &[&str] = &["Deceased", "NotRecordedDeceased"];

impl Attribute {
    pub const ALL: [Attribute; ATTRIBUTE_COUNT] = [
        Attribute::Indigenous,
        Attribute::Test,
        Attribute::Sex,
        Attribute::Care,
        Attribute::Icu,
        Attribute::Intubation,
        Attribute::Vital,
        Attribute::State,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn domain_size(self) -> usize {
        match self {
            Attribute::State => 32,
            other => other.labels().len(),
        }
    }

    fn labels(self) -> &'static [&'static str] {
        match self {
            Attribute::Indigenous => TRI,
            Attribute::Test => TEST,
            Attribute::Sex => SEX,
            Attribute::Care => CARE,
            Attribute::Icu => ICU,
            Attribute::Intubation => INTUBATION,
            Attribute::Vital => VITAL,
            Attribute::State => &[],
        }
    }

    /// Value index for a label. States are written as their code, `"1"`..`"32"`.
    pub fn value(self, label: &str) -> Option<u8> {
        match self {
            Attribute::State => label.parse::<u8>().ok().filter(|c| (1..=32).contains(c)).map(|c| c - 1),
            _ => self.labels().iter().position(|l| *l == label).map(|i| i as u8),
        }
    }

    pub fn label(self, value: u8) -> String {
        match self {
            Attribute::State => (value + 1).to_string(),
            _ => self.labels()[usize::from(value)].to_string(),
        }
    }
}

/// Counts for one group of a marginal table, by value of the step's attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalGroup {
    /// Values of the table's `by` attributes, in order.
    #[serde(default)]
    pub key: Vec<String>,
    pub counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalTable {
    #[serde(default)]
    pub by: Vec<Attribute>,
    pub groups: Vec<MarginalGroup>,
    /// Receives each group's unlisted remainder, and all of any unlisted group.
    /// Without it, every non-empty group must be listed and sum exactly.
    #[serde(default)]
    pub rest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanStep {
    pub attribute: Attribute,
    #[serde(default)]
    pub universe: BTreeMap<Attribute, String>,
    /// Value given to strata outside the universe that have none yet.
    /// Without it they stay unplanted and are drawn per row.
    #[serde(default)]
    pub otherwise: Option<String>,
    pub tables: Vec<MarginalTable>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalPlan {
    pub steps: Vec<PlanStep>,
}

/// A block of identical rows; `None` marks an attribute left to chance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stratum {
    pub values: [Option<u8>; ATTRIBUTE_COUNT],
    pub count: u64,
}

impl Stratum {
    pub fn get(&self, attribute: Attribute) -> Option<u8> {
        self.values[attribute.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("inconsistent spec: step {step} ({attribute:?}): {message}")]
pub struct InconsistentSpec {
    pub step: usize,
    pub attribute: Attribute,
    pub message: String,
}

struct StepContext<'a> {
    step: usize,
    spec: &'a PlanStep,
}

impl StepContext<'_> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T, InconsistentSpec> {
        Err(InconsistentSpec {
            step: self.step,
            attribute: self.spec.attribute,
            message: message.into(),
        })
    }

    fn value(&self, attribute: Attribute, label: &str) -> Result<u8, InconsistentSpec> {
        match attribute.value(label) {
            Some(v) => Ok(v),
            None => self.fail(format!("{label:?} is not a value of {attribute:?}")),
        }
    }
}

/// Splits `rows` into strata realizing every table of the plan exactly.
pub fn solve(plan: &MarginalPlan, rows: u64) -> Result<Vec<Stratum>, InconsistentSpec> {
    let mut strata = vec![Stratum {
        values: [None; ATTRIBUTE_COUNT],
        count: rows,
    }];
    for (i, spec) in plan.steps.iter().enumerate() {
        strata = apply_step(&StepContext { step: i, spec }, strata)?;
    }
    Ok(strata)
}

/// Per-group targets of one table over the universe.
struct Targets {
    /// Group id of each universe stratum.
    group_of: Vec<usize>,
    /// targets[group][value]
    targets: Vec<Vec<u64>>,
}

fn table_targets(
    ctx: &StepContext<'_>,
    table: &MarginalTable,
    universe: &[Stratum],
) -> Result<Targets, InconsistentSpec> {
    let attr = ctx.spec.attribute;
    let domain = attr.domain_size();
    if table.by.contains(&attr) {
        return ctx.fail("a table cannot group by the attribute being planted");
    }
    let mut ids: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
    let mut group_of = Vec::with_capacity(universe.len());
    let mut sizes = Vec::new();
    for s in universe {
        let mut key = Vec::with_capacity(table.by.len());
        for a in &table.by {
            match s.get(*a) {
                Some(v) => key.push(v),
                None => return ctx.fail(format!("{a:?} is not planted for every row of the universe")),
            }
        }
        let next = ids.len();
        let id = *ids.entry(key).or_insert(next);
        if id == sizes.len() {
            sizes.push(0u64);
        }
        sizes[id] += s.count;
        group_of.push(id);
    }

    let rest = table.rest.as_deref().map(|r| ctx.value(attr, r)).transpose()?;
    let mut targets = vec![vec![0u64; domain]; sizes.len()];
    let mut listed = vec![false; sizes.len()];
    for g in &table.groups {
        if g.key.len() != table.by.len() {
            return ctx.fail(format!("group key {:?} does not match by {:?}", g.key, table.by));
        }
        let key = table
            .by
            .iter()
            .zip(&g.key)
            .map(|(a, label)| ctx.value(*a, label))
            .collect::<Result<Vec<_>, _>>()?;
        let sum: u64 = g.counts.values().sum();
        let Some(&id) = ids.get(&key) else {
            if sum > 0 {
                return ctx.fail(format!("group {:?} asks for {sum} rows but the universe has none", g.key));
            }
            continue;
        };
        if std::mem::replace(&mut listed[id], true) {
            return ctx.fail(format!("group {:?} listed twice", g.key));
        }
        for (label, n) in &g.counts {
            targets[id][usize::from(ctx.value(attr, label)?)] += n;
        }
    }
    for id in 0..sizes.len() {
        let sum: u64 = targets[id].iter().sum();
        match rest {
            _ if sum > sizes[id] => {
                return ctx.fail(format!("a group asks for {sum} rows but holds {}", sizes[id]));
            }
            Some(r) => targets[id][usize::from(r)] += sizes[id] - sum,
            None if sum != sizes[id] => {
                return ctx.fail(format!("a group asks for {sum} rows but holds {}", sizes[id]));
            }
            None => {}
        }
    }
    Ok(Targets { group_of, targets })
}

fn apply_step(ctx: &StepContext<'_>, strata: Vec<Stratum>) -> Result<Vec<Stratum>, InconsistentSpec> {
    let spec = ctx.spec;
    let attr = spec.attribute;
    if spec.tables.is_empty() || spec.tables.len() > 2 {
        return ctx.fail("a step needs one or two tables");
    }
    let pattern = spec
        .universe
        .iter()
        .map(|(a, label)| Ok((*a, ctx.value(*a, label)?)))
        .collect::<Result<Vec<_>, _>>()?;
    let otherwise = spec.otherwise.as_deref().map(|l| ctx.value(attr, l)).transpose()?;

    // strata that already carry a value for the attribute pass through untouched
    let (inside, outside): (Vec<Stratum>, Vec<Stratum>) = strata.into_iter().partition(|s| {
        s.get(attr).is_none() && pattern.iter().all(|(a, v)| s.get(*a) == Some(*v))
    });

    let tables = spec
        .tables
        .iter()
        .map(|t| table_targets(ctx, t, &inside))
        .collect::<Result<Vec<_>, _>>()?;

    let domain = attr.domain_size();
    let mut remaining: Vec<u64> = inside.iter().map(|s| s.count).collect();
    let mut alloc = vec![vec![0u64; domain]; inside.len()];
    match tables.as_slice() {
        [t] => {
            for v in 0..domain {
                let mut want: Vec<u64> = t.targets.iter().map(|g| g[v]).collect();
                for (s, g) in t.group_of.iter().enumerate() {
                    let take = remaining[s].min(want[*g]);
                    remaining[s] -= take;
                    want[*g] -= take;
                    alloc[s][v] += take;
                }
                debug_assert!(want.iter().all(|w| *w == 0));
            }
        }
        [a, b] => {
            for v in 0..domain {
                let need_a: u64 = a.targets.iter().map(|g| g[v]).sum();
                let need_b: u64 = b.targets.iter().map(|g| g[v]).sum();
                if need_a != need_b {
                    return ctx.fail(format!(
                        "tables disagree on the total for {}: {need_a} vs {need_b}",
                        attr.label(v as u8)
                    ));
                }
                let na = a.targets.len();
                let nb = b.targets.len();
                let source = 0;
                let sink = 1 + na + nb;
                let mut net = FlowNetwork::new(sink + 1);
                for (g, t) in a.targets.iter().enumerate() {
                    net.add(source, 1 + g, t[v]);
                }
                for (g, t) in b.targets.iter().enumerate() {
                    net.add(1 + na + g, sink, t[v]);
                }
                for (s, &left) in remaining.iter().enumerate().take(inside.len()) {
                    net.add(1 + a.group_of[s], 1 + na + b.group_of[s], left);
                }
                let flow = net.max_flow(source, sink);
                if flow != need_a {
                    return ctx.fail(format!(
                        "the two tables cannot both hold for {}: at most {flow} of {need_a} rows fit",
                        attr.label(v as u8)
                    ));
                }
                for s in 0..inside.len() {
                    let (from, to) = (1 + a.group_of[s], 1 + na + b.group_of[s]);
                    let take = remaining[s].min(net.flow_on(from, to));
                    net.consume(from, to, take);
                    remaining[s] -= take;
                    alloc[s][v] += take;
                }
            }
        }
        _ => unreachable!(),
    }
    if remaining.iter().any(|r| *r != 0) {
        return ctx.fail("the tables leave rows without a value");
    }

    let mut out = Vec::with_capacity(outside.len() + inside.len() * 2);
    for mut s in outside {
        if s.get(attr).is_none() {
            s.values[attr.index()] = otherwise;
        }
        out.push(s);
    }
    for (s, counts) in inside.iter().zip(alloc) {
        for (v, n) in counts.into_iter().enumerate() {
            if n > 0 {
                let mut split = s.clone();
                split.values[attr.index()] = Some(v as u8);
                split.count = n;
                out.push(split);
            }
        }
    }
    Ok(out)
}

/// Dense Edmonds–Karp; the graphs here have a few dozen nodes.
struct FlowNetwork {
    n: usize,
    cap: Vec<u64>,
    flow: Vec<i128>,
}

impl FlowNetwork {
    fn new(n: usize) -> Self {
        FlowNetwork {
            n,
            cap: vec![0; n * n],
            flow: vec![0; n * n],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: u64) {
        self.cap[from * self.n + to] += cap;
    }

    fn residual(&self, from: usize, to: usize) -> i128 {
        i128::from(self.cap[from * self.n + to]) - self.flow[from * self.n + to]
    }

    fn max_flow(&mut self, source: usize, sink: usize) -> u64 {
        let n = self.n;
        let mut total = 0i128;
        loop {
            let mut parent = vec![usize::MAX; n];
            parent[source] = source;
            let mut queue = VecDeque::from([source]);
            while let Some(u) = queue.pop_front() {
                for (v, p) in parent.iter_mut().enumerate() {
                    if *p == usize::MAX && self.residual(u, v) > 0 {
                        *p = u;
                        queue.push_back(v);
                    }
                }
            }
            if parent[sink] == usize::MAX {
                return total as u64;
            }
            let mut push = i128::MAX;
            let mut v = sink;
            while v != source {
                push = push.min(self.residual(parent[v], v));
                v = parent[v];
            }
            let mut v = sink;
            while v != source {
                let u = parent[v];
                self.flow[u * n + v] += push;
                self.flow[v * n + u] -= push;
                v = u;
            }
            total += push;
        }
    }

    /// Net flow still unassigned on a forward edge.
    fn flow_on(&self, from: usize, to: usize) -> u64 {
        self.flow[from * self.n + to].max(0) as u64
    }

    fn consume(&mut self, from: usize, to: usize, amount: u64) {
        self.flow[from * self.n + to] -= i128::from(amount);
    }
}
