//! Test oracles shared by the integration tests and the acceptance runner.
//! Nothing here calls into the classifier; the oracles work from the raw
//! rule lists only.
#![allow(dead_code)]

use std::collections::HashMap;

use gtf_core::analysis::{AltClass, RuleClassification};
use gtf_core::grammar::{AltId, NtId, Symbol};
use gtf_core::{Grammar, RuleLabel};
use rand::Rng;

pub const ORACLE_CAP: u32 = 10;

pub const NATURAL_JOIN: &str =
    "natural_join_type: NATURAL_SYM opt_inner JOIN_SYM ;\nopt_inner: | INNER_SYM ;\n";
pub const NATURAL_JOIN_TOKENS: &str = "NATURAL_SYM\tNATURAL\nJOIN_SYM\tJOIN\nINNER_SYM\tINNER\n";

pub const PRIORITIZATION: &str = "
table_reference: table_factor | joined_table ;
table_factor: table_name | table_function ;
joined_table:
  table_reference inner_join_type table_reference
| table_reference outer_join_type table_reference
;
table_name: IDENT ;
table_function: JSON_TABLE '(' STRING ')' ;
inner_join_type: INNER JOIN ;
outer_join_type: LEFT OUTER JOIN ;
";
pub const PRIORITIZATION_TOKENS: &str =
    "IDENT\tt0\nJSON_TABLE\tJSON_TABLE\nSTRING\t'x'\nINNER\tINNER\nJOIN\tJOIN\nLEFT\tLEFT\nOUTER\tOUTER\n";

/// Random yacc text with 1..=12 nonterminals of 1..=4 alternatives each.
/// The first alternative of the start rule is a lone terminal so the
/// grammar always loads; everything else is unconstrained, including
/// cycles, self references and empty bodies.
pub fn random_grammar_text<R: Rng + ?Sized>(rng: &mut R) -> String {
    let n = rng.gen_range(1..=12usize);
    let terminals = ["'a'", "'b'", "'c'"];
    let mut text = String::new();
    for i in 0..n {
        let alts = rng.gen_range(1..=4);
        let mut bodies = Vec::new();
        for a in 0..alts {
            if i == 0 && a == 0 {
                bodies.push("'s'".to_string());
                continue;
            }
            let len = rng.gen_range(0..=4);
            let body: Vec<String> = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.4) {
                        terminals[rng.gen_range(0..terminals.len())].to_string()
                    } else if i + 1 < n && rng.gen_bool(0.7) {
                        // forward references build long acyclic chains
                        format!("n{}", rng.gen_range(i + 1..n))
                    } else {
                        format!("n{}", rng.gen_range(0..n))
                    }
                })
                .collect();
            bodies.push(match (body.is_empty(), rng.gen_bool(0.5)) {
                (true, true) => "%empty".to_string(),
                (true, false) => String::new(),
                (false, _) => body.join(" "),
            });
        }
        text += &format!("n{i}: {} ;\n", bodies.join(" | "));
    }
    text
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleDepth {
    Finite(u32),
    /// Some expansion needs more than the cap.
    Exceeded,
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub depth: Vec<Vec<OracleDepth>>,
    pub recursive: Vec<Vec<bool>>,
}

fn children(grammar: &Grammar, nt: NtId, alt: usize) -> Vec<NtId> {
    grammar.rule(nt).alternatives[alt]
        .symbols
        .iter()
        .filter_map(|s| match s {
            Symbol::NonTerminal(c) => Some(*c),
            _ => None,
        })
        .collect()
}

fn usable(grammar: &Grammar, nt: NtId) -> Vec<usize> {
    let rule = grammar.rule(nt);
    (0..rule.alternatives.len())
        .filter(|&i| !rule.alternatives[i].excluded)
        .collect()
}

/// Worst-case expansion depth of `nt` within `budget` levels, by trying
/// every alternative at every level. Memoised on (nonterminal, budget).
fn worst_nt(
    g: &Grammar,
    nt: NtId,
    budget: u32,
    memo: &mut HashMap<(NtId, u32), Option<u32>>,
) -> Option<u32> {
    if let Some(&r) = memo.get(&(nt, budget)) {
        return r;
    }
    let alts = usable(g, nt);
    let mut worst = if alts.is_empty() { None } else { Some(0) };
    for a in alts {
        match (worst, worst_alt(g, nt, a, budget, memo)) {
            (Some(w), Some(d)) => worst = Some(w.max(d)),
            _ => {
                worst = None;
                break;
            }
        }
    }
    memo.insert((nt, budget), worst);
    worst
}

fn worst_alt(
    g: &Grammar,
    nt: NtId,
    alt: usize,
    budget: u32,
    memo: &mut HashMap<(NtId, u32), Option<u32>>,
) -> Option<u32> {
    if budget == 0 {
        return None;
    }
    let mut deepest = 0;
    for c in children(g, nt, alt) {
        deepest = deepest.max(worst_nt(g, c, budget - 1, memo)?);
    }
    Some(1 + deepest)
}

fn reaches(g: &Grammar, from: NtId, to: NtId) -> bool {
    let mut seen = vec![false; g.nonterminal_count()];
    let mut stack = vec![from];
    while let Some(cur) = stack.pop() {
        if cur == to {
            return true;
        }
        if std::mem::replace(&mut seen[cur.index()], true) {
            continue;
        }
        for a in usable(g, cur) {
            stack.extend(children(g, cur, a));
        }
    }
    false
}

pub fn brute_force(g: &Grammar, cap: u32) -> OracleResult {
    let mut memo = HashMap::new();
    let mut depth = Vec::new();
    let mut recursive = Vec::new();
    for nt in g.nonterminals() {
        let n_alts = g.rule(nt).alternatives.len();
        depth.push(
            (0..n_alts)
                .map(|a| match worst_alt(g, nt, a, cap, &mut memo) {
                    Some(d) => OracleDepth::Finite(d),
                    None => OracleDepth::Exceeded,
                })
                .collect(),
        );
        recursive.push(
            (0..n_alts)
                .map(|a| children(g, nt, a).into_iter().any(|c| reaches(g, c, nt)))
                .collect(),
        );
    }
    OracleResult { depth, recursive }
}

pub fn expected_label(depth: OracleDepth, recursive: bool) -> RuleLabel {
    match depth {
        _ if recursive => RuleLabel::Complex,
        OracleDepth::Exceeded => RuleLabel::Complex,
        OracleDepth::Finite(d) if d <= 2 => RuleLabel::Simple,
        OracleDepth::Finite(_) => RuleLabel::Normal,
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct OracleTally {
    pub alternatives: usize,
    /// Finite depths above the cap, which the oracle reports as exceeded.
    pub beyond_cap: usize,
}

/// Compare a classification against the oracle. Manual labels are not
/// expected here.
pub fn check_against_oracle(
    g: &Grammar,
    c: &RuleClassification,
    tally: &mut OracleTally,
) -> Result<(), String> {
    use gtf_core::GDepth;
    let oracle = brute_force(g, ORACLE_CAP);
    for nt in g.nonterminals() {
        for (i, (&od, &orec)) in oracle.depth[nt.index()]
            .iter()
            .zip(&oracle.recursive[nt.index()])
            .enumerate()
        {
            tally.alternatives += 1;
            let AltClass {
                label,
                gdepth,
                recursive,
            } = c.get(AltId { nt, index: i });
            let name = format!("{}[{i}]", g.name(nt));
            if recursive != orec {
                return Err(format!("{name}: recursive {recursive}, oracle {orec}"));
            }
            match (od, gdepth) {
                (OracleDepth::Finite(d), GDepth::Finite(e)) if d == e => {
                    if label != expected_label(od, orec) {
                        return Err(format!(
                            "{name}: label {label}, oracle {}",
                            expected_label(od, orec)
                        ));
                    }
                }
                (OracleDepth::Exceeded, GDepth::Infinite) => {
                    if label != RuleLabel::Complex {
                        return Err(format!("{name}: infinite depth labelled {label}"));
                    }
                }
                (OracleDepth::Exceeded, GDepth::Finite(e)) if e > ORACLE_CAP => {
                    tally.beyond_cap += 1;
                    let want = if orec {
                        RuleLabel::Complex
                    } else {
                        RuleLabel::Normal
                    };
                    if label != want {
                        return Err(format!("{name}: depth {e} labelled {label}"));
                    }
                }
                _ => return Err(format!("{name}: gdepth {gdepth}, oracle {od:?}")),
            }
        }
    }
    Ok(())
}

/// A default-configured worker over the embedded toy target.
pub fn toy_worker<'g>(
    grammar: &'g Grammar,
    classes: &RuleClassification,
    seed: u64,
    no_coverage: bool,
) -> gtf_core::campaign::Worker<'g> {
    use gtf_core::campaign::{CampaignConfig, SequencePolicy, Worker, WorkerSetup};
    use gtf_core::coverage::toy::ToyTarget;
    let config = CampaignConfig::default();
    Worker::new(WorkerSetup {
        index: 0,
        generator: gtf_core::Generator::new(grammar, classes),
        policy: config.policy(),
        sequence_policy: SequencePolicy::resolve(grammar, &config.sequence, &config.statements)
            .unwrap(),
        mutation_prob: config.mutation_prob,
        no_coverage,
        queue_cap: config.queue_cap,
        target: Box::new(ToyTarget::new(config.map_size)),
        seed,
        campaign_seed: seed,
        grammar_hash: String::new(),
        poc_dir: None,
        started: std::time::Instant::now(),
    })
}
