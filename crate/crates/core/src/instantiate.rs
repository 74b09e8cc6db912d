//! Validity-oriented instantiation: fill placeholder slots with identifiers
//! that refer to objects created earlier in the same statement sequence,
//! and with constants from small pools.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::generator::{Template, TemplatePart};
use crate::grammar::{Grammar, PlaceholderCategory};

/// Objects created by NewTable/NewColumn/NewIndex slots so far in the
/// current sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SchemaRegistry {
    tables: Vec<(String, Vec<String>)>,
    indexes: Vec<String>,
    next_table: u64,
    next_column: u64,
    next_index: u64,
    next_ident: u64,
}

/// An empty registry with all name counters at zero.
pub fn reset_registry() -> SchemaRegistry {
    SchemaRegistry::default()
}

impl SchemaRegistry {
    pub fn tables(&self) -> impl Iterator<Item = &str> {
        self.tables.iter().map(|(t, _)| t.as_str())
    }

    pub fn columns_of(&self, table: &str) -> Option<&[String]> {
        self.tables
            .iter()
            .find(|(t, _)| t == table)
            .map(|(_, c)| c.as_slice())
    }

    pub fn indexes(&self) -> &[String] {
        &self.indexes
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty() && self.indexes.is_empty()
    }

    fn mint_table(&mut self) -> String {
        let name = format!("t{}", self.next_table);
        self.next_table += 1;
        name
    }

    fn mint_column(&mut self) -> String {
        let name = format!("c{}", self.next_column);
        self.next_column += 1;
        name
    }

    fn mint_index(&mut self) -> String {
        let name = format!("i{}", self.next_index);
        self.next_index += 1;
        name
    }

    fn mint_ident(&mut self) -> String {
        let name = format!("a{}", self.next_ident);
        self.next_ident += 1;
        name
    }
}

/// Constant distributions. The defaults include the 32-bit boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPools {
    pub ints: Vec<i64>,
    /// Inclusive range for the "small random" integer choice.
    pub small_int: (i64, i64),
    /// Decimals are drawn as `n / 100` with `n` in this inclusive range.
    pub float_hundredths: (i64, i64),
    pub string_max_len: usize,
    pub string_alphabet: Vec<char>,
}

impl Default for ConstantPools {
    fn default() -> Self {
        ConstantPools {
            ints: vec![-1, 0, 1, i32::MAX as i64, i32::MIN as i64],
            small_int: (-100, 100),
            float_hundredths: (-10_000, 10_000),
            string_max_len: 5,
            string_alphabet: "abcxyz0'".chars().collect(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Instantiator {
    pub pools: ConstantPools,
}

impl Instantiator {
    pub fn new(pools: ConstantPools) -> Self {
        Instantiator { pools }
    }

    /// Produce the concrete statement for `template`, updating `registry`.
    /// Deterministic given the seed and the registry state.
    pub fn instantiate(
        &self,
        template: &Template,
        grammar: &Grammar,
        registry: &mut SchemaRegistry,
        rng_seed: u64,
    ) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        // Most recent table slot of this statement, as an index into the
        // registry; `None` when absent or when it was an unregistered name.
        let mut current_table: Option<usize> = None;
        let mut words: Vec<String> = Vec::with_capacity(template.parts.len());
        for part in &template.parts {
            let word = match *part {
                TemplatePart::Token(t) => grammar.token(t).surface.clone(),
                TemplatePart::Slot(p) => {
                    let category = grammar.placeholder(p).category;
                    self.fill(category, registry, &mut current_table, &mut rng)
                }
            };
            words.push(word);
        }
        words.join(" ")
    }

    fn fill(
        &self,
        category: PlaceholderCategory,
        reg: &mut SchemaRegistry,
        current_table: &mut Option<usize>,
        rng: &mut ChaCha8Rng,
    ) -> String {
        use PlaceholderCategory::*;
        match category {
            NewTable => {
                let name = reg.mint_table();
                reg.tables.push((name.clone(), Vec::new()));
                *current_table = Some(reg.tables.len() - 1);
                name
            }
            ExistingTable => {
                if reg.tables.is_empty() {
                    *current_table = None;
                    reg.mint_table()
                } else {
                    let i = rng.gen_range(0..reg.tables.len());
                    *current_table = Some(i);
                    reg.tables[i].0.clone()
                }
            }
            NewColumn => {
                let name = reg.mint_column();
                if let Some(i) = *current_table {
                    reg.tables[i].1.push(name.clone());
                }
                name
            }
            ExistingColumn => {
                let scoped = current_table
                    .map(|i| reg.tables[i].1.as_slice())
                    .filter(|c| !c.is_empty());
                match scoped {
                    Some(cols) => cols.choose(rng).cloned().unwrap_or_default(),
                    None => {
                        let all: Vec<&String> =
                            reg.tables.iter().flat_map(|(_, c)| c.iter()).collect();
                        match all.choose(rng) {
                            Some(c) => (*c).clone(),
                            None => reg.mint_column(),
                        }
                    }
                }
            }
            NewIndex => {
                let name = reg.mint_index();
                reg.indexes.push(name.clone());
                name
            }
            ExistingIndex => match reg.indexes.choose(rng) {
                Some(i) => i.clone(),
                None => reg.mint_index(),
            },
            Identifier => reg.mint_ident(),
            IntConst => {
                let pick = rng.gen_range(0..=self.pools.ints.len());
                let value = match self.pools.ints.get(pick) {
                    Some(v) => *v,
                    None => rng.gen_range(self.pools.small_int.0..=self.pools.small_int.1),
                };
                value.to_string()
            }
            FloatConst => {
                let n =
                    rng.gen_range(self.pools.float_hundredths.0..=self.pools.float_hundredths.1);
                let sign = if n < 0 { "-" } else { "" };
                format!("{sign}{}.{:02}", n.abs() / 100, n.abs() % 100)
            }
            StringConst => {
                let len = rng.gen_range(0..=self.pools.string_max_len);
                let mut s = String::from("'");
                for _ in 0..len {
                    let c = *self.pools.string_alphabet.choose(rng).unwrap_or(&'a');
                    if c == '\'' {
                        s.push('\'');
                    }
                    s.push(c);
                }
                s.push('\'');
                s
            }
        }
    }
}
