//! In-memory database and statement interpreter for the toy target.
//!
//! Every interesting branch calls [`Probe::hit`] with an id from the
//! tables below; ids are hashed into the shared coverage map.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use super::sql::*;
use crate::coverage::CoverageMap;

pub const MAX_ROWS: usize = 200;
pub const MAX_JOIN_ROWS: usize = 10_000;

// probe id bases
pub const P_STMT: u32 = 0; // + kind * 3 + outcome
pub const P_ERR: u32 = 24; // + Sem as u32
pub const P_CREATE: u32 = 64;
pub const P_INSERT: u32 = 100;
pub const P_INDEX: u32 = 130;
pub const P_SELECT: u32 = 160;
pub const P_DELETE: u32 = 210;
pub const P_DROP: u32 = 220;
pub const P_EXPR: u32 = 256; // + op * 5 + value kind

pub const BUG_MIXED_INLINE_INDEX: u32 = 1000;
pub const BUG_RIGHT_JOIN_COLLATE_NULL: u32 = 1001;
pub const BUG_DELETE_EXPR_UNIQUE: u32 = 1002;

pub const KIND_CREATE_TABLE: u32 = 0;
pub const KIND_CREATE_INDEX: u32 = 1;
pub const KIND_INSERT: u32 = 2;
pub const KIND_SELECT: u32 = 3;
pub const KIND_DELETE: u32 = 4;
pub const KIND_DROP_TABLE: u32 = 5;
pub const KIND_DROP_INDEX: u32 = 6;
pub const KIND_UNPARSED: u32 = 7;

pub struct Probe<'m> {
    map: &'m mut CoverageMap,
}

impl<'m> Probe<'m> {
    pub fn new(map: &'m mut CoverageMap) -> Self {
        Probe { map }
    }

    pub fn hit(&mut self, id: u32) {
        let slot = probe_slot(id, self.map.len());
        self.map.hit(slot);
    }

    fn hit_n(&mut self, id: u32, n: usize) {
        let slot = probe_slot(id, self.map.len());
        for _ in 0..n.min(255) {
            self.map.hit(slot);
        }
    }
}

/// Map slot for a probe id.
pub fn probe_slot(id: u32, map_size: usize) -> usize {
    let h = (id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    (h >> 32) as usize & (map_size - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sem {
    NoSuchTable,
    TableExists,
    NoSuchColumn,
    AmbiguousColumn,
    DuplicateColumn,
    NoSuchIndex,
    IndexExists,
    ArityMismatch,
    NotNullViolation,
    UniqueViolation,
    CheckViolation,
    TableFull,
    ResultTooLarge,
    WrongArgCount,
    IntegerOverflow,
    StarWithoutFrom,
    MultiplePrimaryKeys,
    NoColumns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    Semantic(Sem),
    Crash(u32),
    Assert(u32),
}

impl From<Sem> for Fault {
    fn from(s: Sem) -> Self {
        Fault::Semantic(s)
    }
}

type R<T> = Result<T, Fault>;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl Value {
    fn kind(&self) -> u32 {
        match self {
            Value::Null => 0,
            Value::Int(_) => 1,
            Value::Float(_) => 2,
            Value::Text(_) => 3,
            Value::Bool(_) => 4,
        }
    }

    fn truth(&self) -> Option<bool> {
        match self {
            Value::Null => None,
            Value::Int(i) => Some(*i != 0),
            Value::Float(f) => Some(*f != 0.0),
            Value::Bool(b) => Some(*b),
            Value::Text(s) => Some(s.trim().parse::<f64>().is_ok_and(|f| f != 0.0)),
        }
    }

    fn numeric(&self) -> Option<Num> {
        match self {
            Value::Null => None,
            Value::Int(i) => Some(Num::I(*i)),
            Value::Bool(b) => Some(Num::I(*b as i64)),
            Value::Float(f) => Some(Num::F(*f)),
            Value::Text(s) => {
                let s = s.trim();
                Some(match s.parse::<i64>() {
                    Ok(i) => Num::I(i),
                    Err(_) => Num::F(s.parse::<f64>().unwrap_or(0.0)),
                })
            }
        }
    }

    fn display(&self) -> String {
        match self {
            Value::Null => String::new(),
            Value::Int(i) => i.to_string(),
            Value::Float(f) => f.to_string(),
            Value::Text(s) => s.clone(),
            Value::Bool(b) => (*b as i64).to_string(),
        }
    }

    fn key(&self) -> Key {
        match self {
            Value::Null => Key::Null,
            Value::Int(i) => Key::Int(*i),
            Value::Bool(b) => Key::Int(*b as i64),
            Value::Float(f) => {
                let f = if *f == 0.0 { 0.0 } else { *f };
                Key::Float(f.to_bits())
            }
            Value::Text(s) => Key::Text(s.clone()),
        }
    }
}

impl From<&Literal> for Value {
    fn from(l: &Literal) -> Self {
        match l {
            Literal::Null => Value::Null,
            Literal::Int(i) => Value::Int(*i),
            Literal::Float(f) => Value::Float(*f),
            Literal::Text(s) => Value::Text(s.clone()),
            Literal::Bool(b) => Value::Bool(*b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Key {
    Null,
    Int(i64),
    Float(u64),
    Text(String),
}

#[derive(Clone, Copy)]
enum Num {
    I(i64),
    F(f64),
}

impl Num {
    fn f(self) -> f64 {
        match self {
            Num::I(i) => i as f64,
            Num::F(f) => f,
        }
    }
}

fn compare(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Null, _) | (_, Value::Null) => None,
        (Value::Text(x), Value::Text(y)) => Some(x.cmp(y)),
        (Value::Text(_), _) => Some(Ordering::Greater),
        (_, Value::Text(_)) => Some(Ordering::Less),
        _ => match (a.numeric()?, b.numeric()?) {
            (Num::I(x), Num::I(y)) => Some(x.cmp(&y)),
            (x, y) => x.f().partial_cmp(&y.f()),
        },
    }
}

/// Total order used by ORDER BY: NULL first, then by [`compare`].
fn sort_cmp(a: &Value, b: &Value) -> Ordering {
    match (a, b) {
        (Value::Null, Value::Null) => Ordering::Equal,
        (Value::Null, _) => Ordering::Less,
        (_, Value::Null) => Ordering::Greater,
        _ => compare(a, b).unwrap_or(Ordering::Equal),
    }
}

#[derive(Debug, Clone)]
struct Column {
    name: String,
    ty: DataType,
    not_null: bool,
    default: Value,
}

#[derive(Debug, Clone)]
struct Table {
    name: String,
    columns: Vec<Column>,
    rows: Vec<Vec<Value>>,
    checks: Vec<Expr>,
    /// Column sets that must be unique (primary key and UNIQUE).
    uniques: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
struct Index {
    name: String,
    table: String,
    unique: bool,
    parts: Vec<KeyPart>,
}

impl Index {
    fn has_expr_part(&self) -> bool {
        self.parts.iter().any(|p| matches!(p, KeyPart::Expr(..)))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Database {
    tables: Vec<Table>,
    indexes: Vec<Index>,
}

#[derive(Debug, Clone)]
struct ColName {
    quals: Vec<String>,
    name: String,
}

struct Relation {
    cols: Vec<ColName>,
    rows: Vec<Vec<Value>>,
}

struct Scope<'a> {
    cols: &'a [ColName],
    row: &'a [Value],
}

const EMPTY_SCOPE: Scope<'static> = Scope {
    cols: &[],
    row: &[],
};

/// Clause an expression is evaluated in; expression probes are keyed by it.
#[derive(Clone, Copy, Default, PartialEq, Eq)]
enum Clause {
    #[default]
    Plain,
    Filter,
    JoinOn,
    RightJoinOn,
}

#[derive(Clone, Copy, Default)]
struct Ctx {
    clause: Clause,
}

const FILTER: Ctx = Ctx {
    clause: Clause::Filter,
};

fn resolve(cols: &[ColName], table: Option<&str>, name: &str) -> R<usize> {
    let mut found = None;
    for (i, c) in cols.iter().enumerate() {
        if c.name == name && table.is_none_or(|t| c.quals.iter().any(|q| q == t)) {
            if found.is_some() {
                return Err(Sem::AmbiguousColumn.into());
            }
            found = Some(i);
        }
    }
    found.ok_or(Fault::Semantic(Sem::NoSuchColumn))
}

fn table_cols(t: &Table) -> Vec<ColName> {
    t.columns
        .iter()
        .map(|c| ColName {
            quals: vec![t.name.clone()],
            name: c.name.clone(),
        })
        .collect()
}

/// Check that every column reference in `e` resolves against `cols`.
fn check_refs(e: &Expr, cols: &[ColName]) -> R<()> {
    let err = std::cell::Cell::new(None);
    e.any(&|x| match x {
        Expr::Column { table, name } => match resolve(cols, table.as_deref(), name) {
            Ok(_) => false,
            Err(f) => {
                err.set(Some(f));
                true
            }
        },
        _ => false,
    });
    err.get().map_or(Ok(()), Err)
}

fn contains_func(e: &Expr) -> bool {
    e.any(&|x| matches!(x, Expr::Func(..)))
}

const OP_COLUMN: u32 = 0;
const OP_LIT: u32 = 1;
const OP_CMP: u32 = 2; // 6
const OP_ARITH: u32 = 8; // 5
const OP_AND: u32 = 13;
const OP_OR: u32 = 14;
const OP_NOT: u32 = 15;
const OP_IS_NULL: u32 = 16; // 2
const OP_BETWEEN: u32 = 18; // 2
const OP_IN: u32 = 20; // 2
const OP_CASE: u32 = 22; // 2
const OP_FUNC: u32 = 24; // 5
const OP_COLLATE: u32 = 29; // 3
const EXPR_PROBES: u32 = 32 * 5;

fn eval(p: &mut Probe, e: &Expr, s: &Scope, ctx: Ctx) -> R<Value> {
    let (op, v) = eval_inner(p, e, s, ctx)?;
    p.hit(P_EXPR + ctx.clause as u32 * EXPR_PROBES + op * 5 + v.kind());
    Ok(v)
}

fn and3(a: Option<bool>, b: Option<bool>) -> Value {
    match (a, b) {
        (Some(false), _) | (_, Some(false)) => Value::Bool(false),
        (Some(true), Some(true)) => Value::Bool(true),
        _ => Value::Null,
    }
}

fn or3(a: Option<bool>, b: Option<bool>) -> Value {
    match (a, b) {
        (Some(true), _) | (_, Some(true)) => Value::Bool(true),
        (Some(false), Some(false)) => Value::Bool(false),
        _ => Value::Null,
    }
}

fn bool_or_null(b: Option<bool>) -> Value {
    b.map_or(Value::Null, Value::Bool)
}

fn arith(op: ArithOp, a: &Value, b: &Value) -> Value {
    let (Some(x), Some(y)) = (a.numeric(), b.numeric()) else {
        return Value::Null;
    };
    match (x, y) {
        (Num::I(x), Num::I(y)) => {
            let r = match op {
                ArithOp::Add => x.checked_add(y),
                ArithOp::Sub => x.checked_sub(y),
                ArithOp::Mul => x.checked_mul(y),
                ArithOp::Div if y == 0 => return Value::Null,
                ArithOp::Div => x.checked_div(y),
                ArithOp::Rem if y == 0 => return Value::Null,
                ArithOp::Rem => x.checked_rem(y),
            };
            match r {
                Some(v) => Value::Int(v),
                None => Value::Float(match op {
                    ArithOp::Add => x as f64 + y as f64,
                    ArithOp::Sub => x as f64 - y as f64,
                    ArithOp::Mul => x as f64 * y as f64,
                    _ => x as f64 / y as f64,
                }),
            }
        }
        (x, y) => {
            let (x, y) = (x.f(), y.f());
            match op {
                ArithOp::Add => Value::Float(x + y),
                ArithOp::Sub => Value::Float(x - y),
                ArithOp::Mul => Value::Float(x * y),
                ArithOp::Div if y == 0.0 => Value::Null,
                ArithOp::Div => Value::Float(x / y),
                ArithOp::Rem if (y as i64) == 0 => Value::Null,
                ArithOp::Rem => Value::Int((x as i64).wrapping_rem(y as i64)),
            }
        }
    }
}

fn eval_inner(p: &mut Probe, e: &Expr, s: &Scope, ctx: Ctx) -> R<(u32, Value)> {
    Ok(match e {
        Expr::Column { table, name } => {
            if table.is_some() {
                p.hit(P_SELECT + 26);
            }
            let i = resolve(s.cols, table.as_deref(), name)?;
            (OP_COLUMN, s.row[i].clone())
        }
        Expr::Lit(l) => (OP_LIT, Value::from(l)),
        Expr::Cmp(op, a, b) => {
            let a = eval(p, a, s, ctx)?;
            let b = eval(p, b, s, ctx)?;
            let ord = compare(&a, &b);
            let r = ord.map(|o| match op {
                CmpOp::Eq => o == Ordering::Equal,
                CmpOp::Ne => o != Ordering::Equal,
                CmpOp::Lt => o == Ordering::Less,
                CmpOp::Gt => o == Ordering::Greater,
                CmpOp::Le => o != Ordering::Greater,
                CmpOp::Ge => o != Ordering::Less,
            });
            (OP_CMP + *op as u32, bool_or_null(r))
        }
        Expr::Arith(op, a, b) => {
            let a = eval(p, a, s, ctx)?;
            let b = eval(p, b, s, ctx)?;
            (OP_ARITH + *op as u32, arith(*op, &a, &b))
        }
        Expr::And(a, b) => {
            let a = eval(p, a, s, ctx)?.truth();
            let b = eval(p, b, s, ctx)?.truth();
            (OP_AND, and3(a, b))
        }
        Expr::Or(a, b) => {
            let a = eval(p, a, s, ctx)?.truth();
            let b = eval(p, b, s, ctx)?.truth();
            (OP_OR, or3(a, b))
        }
        Expr::Not(a) => {
            let a = eval(p, a, s, ctx)?.truth();
            (OP_NOT, bool_or_null(a.map(|b| !b)))
        }
        Expr::IsNull { expr, negated } => {
            let v = eval(p, expr, s, ctx)?;
            let is_null = v == Value::Null;
            (
                OP_IS_NULL + *negated as u32,
                Value::Bool(is_null != *negated),
            )
        }
        Expr::Between {
            expr,
            lo,
            hi,
            negated,
        } => {
            let v = eval(p, expr, s, ctx)?;
            let lo = eval(p, lo, s, ctx)?;
            let hi = eval(p, hi, s, ctx)?;
            let ge = compare(&v, &lo).map(|o| o != Ordering::Less);
            let le = compare(&v, &hi).map(|o| o != Ordering::Greater);
            let r = and3(ge, le).truth().map(|b| b != *negated);
            (OP_BETWEEN + *negated as u32, bool_or_null(r))
        }
        Expr::In {
            expr,
            list,
            negated,
        } => {
            let v = eval(p, expr, s, ctx)?;
            let mut saw_null = v == Value::Null;
            let mut found = false;
            for item in list {
                let x = eval(p, item, s, ctx)?;
                match compare(&v, &x) {
                    Some(Ordering::Equal) => found = true,
                    None => saw_null = true,
                    _ => {}
                }
            }
            let r = if found {
                Some(true)
            } else if saw_null {
                None
            } else {
                Some(false)
            };
            (
                OP_IN + *negated as u32,
                bool_or_null(r.map(|b| b != *negated)),
            )
        }
        Expr::Case {
            when,
            then,
            otherwise,
        } => {
            let c = eval(p, when, s, ctx)?.truth() == Some(true);
            let v = if c {
                eval(p, then, s, ctx)?
            } else if let Some(o) = otherwise {
                eval(p, o, s, ctx)?
            } else {
                Value::Null
            };
            (OP_CASE + otherwise.is_some() as u32, v)
        }
        Expr::Func(f, args) => {
            let mut vals = Vec::with_capacity(args.len());
            for a in args {
                vals.push(eval(p, a, s, ctx)?);
            }
            let arity_ok = match f {
                Func::Abs | Func::Length | Func::Upper => vals.len() == 1,
                Func::Coalesce => vals.len() >= 2,
                Func::Nullif => vals.len() == 2,
            };
            if !arity_ok {
                return Err(Sem::WrongArgCount.into());
            }
            let v = match f {
                Func::Abs => match vals[0].numeric() {
                    None => Value::Null,
                    Some(Num::I(i)) => Value::Int(
                        i.checked_abs()
                            .ok_or(Fault::Semantic(Sem::IntegerOverflow))?,
                    ),
                    Some(Num::F(x)) => Value::Float(x.abs()),
                },
                Func::Length => match &vals[0] {
                    Value::Null => Value::Null,
                    v => Value::Int(v.display().chars().count() as i64),
                },
                Func::Upper => match &vals[0] {
                    Value::Null => Value::Null,
                    v => Value::Text(v.display().to_uppercase()),
                },
                Func::Coalesce => vals
                    .into_iter()
                    .find(|v| *v != Value::Null)
                    .unwrap_or(Value::Null),
                Func::Nullif => {
                    if compare(&vals[0], &vals[1]) == Some(Ordering::Equal) {
                        Value::Null
                    } else {
                        vals[0].clone()
                    }
                }
            };
            (OP_FUNC + *f as u32, v)
        }
        Expr::Collate(inner, c) => {
            let v = eval(p, inner, s, ctx)?;
            if v == Value::Null
                && ctx.clause == Clause::RightJoinOn
                && matches!(**inner, Expr::Column { .. })
            {
                return Err(Fault::Crash(BUG_RIGHT_JOIN_COLLATE_NULL));
            }
            let v = match (v, c) {
                (Value::Text(t), Collation::Nocase) => Value::Text(t.to_lowercase()),
                (Value::Text(t), Collation::Rtrim) => Value::Text(t.trim_end().to_string()),
                (v, _) => v,
            };
            (OP_COLLATE + *c as u32, v)
        }
    })
}

fn stmt_kind(stmt: &Stmt) -> u32 {
    match stmt {
        Stmt::CreateTable { .. } => KIND_CREATE_TABLE,
        Stmt::CreateIndex { .. } => KIND_CREATE_INDEX,
        Stmt::Insert { .. } => KIND_INSERT,
        Stmt::Select(_) => KIND_SELECT,
        Stmt::Delete { .. } => KIND_DELETE,
        Stmt::DropTable { .. } => KIND_DROP_TABLE,
        Stmt::DropIndex { .. } => KIND_DROP_INDEX,
    }
}

impl Database {
    pub fn new() -> Self {
        Database::default()
    }

    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    pub fn row_count(&self, table: &str) -> Option<usize> {
        self.table(table).ok().map(|t| t.rows.len())
    }

    fn table(&self, name: &str) -> R<&Table> {
        self.tables
            .iter()
            .find(|t| t.name == name)
            .ok_or(Fault::Semantic(Sem::NoSuchTable))
    }

    fn table_pos(&self, name: &str) -> R<usize> {
        self.tables
            .iter()
            .position(|t| t.name == name)
            .ok_or(Fault::Semantic(Sem::NoSuchTable))
    }

    /// Run one parsed statement. A failing statement leaves the database
    /// unchanged.
    pub fn execute(&mut self, stmt: &Stmt, p: &mut Probe) -> R<()> {
        let kind = stmt_kind(stmt);
        let r = match stmt {
            Stmt::CreateTable {
                if_not_exists,
                name,
                elems,
            } => self.create_table(p, *if_not_exists, name, elems),
            Stmt::CreateIndex {
                unique,
                name,
                table,
                parts,
            } => self.create_index(p, *unique, name, table, parts),
            Stmt::Insert {
                table,
                columns,
                rows,
            } => self.insert(p, table, columns.as_deref(), rows),
            Stmt::Select(sel) => self.select(p, sel).map(|_| ()),
            Stmt::Delete { table, filter } => self.delete(p, table, filter.as_ref()),
            Stmt::DropTable { if_exists, name } => self.drop_table(p, *if_exists, name),
            Stmt::DropIndex { name } => {
                let i = self
                    .indexes
                    .iter()
                    .position(|x| &x.name == name)
                    .ok_or(Fault::Semantic(Sem::NoSuchIndex))?;
                self.indexes.remove(i);
                p.hit(P_DROP + 2);
                Ok(())
            }
        };
        match &r {
            Ok(()) => p.hit(P_STMT + kind * 3),
            Err(Fault::Semantic(s)) => {
                p.hit(P_STMT + kind * 3 + 1);
                p.hit(P_ERR + *s as u32);
            }
            Err(_) => {}
        }
        r
    }

    fn create_table(
        &mut self,
        p: &mut Probe,
        if_not_exists: bool,
        name: &str,
        elems: &[TableElem],
    ) -> R<()> {
        if self.table(name).is_ok() {
            if if_not_exists {
                p.hit(P_CREATE + 19);
                return Ok(());
            }
            return Err(Sem::TableExists.into());
        }
        let mut t = Table {
            name: name.to_string(),
            columns: Vec::new(),
            rows: Vec::new(),
            checks: Vec::new(),
            uniques: Vec::new(),
        };
        // Redeclaring the same key is accepted; a second, different key is not.
        let mut primary: Option<Vec<usize>> = None;
        let mut declare_primary = |mut cols: Vec<usize>| -> R<()> {
            cols.sort_unstable();
            cols.dedup();
            match &primary {
                Some(k) if *k != cols => Err(Sem::MultiplePrimaryKeys.into()),
                _ => {
                    primary = Some(cols);
                    Ok(())
                }
            }
        };
        for e in elems {
            p.hit(P_CREATE + 24);
            if let TableElem::Column(c) = e {
                if t.columns.iter().any(|x| x.name == c.name) {
                    return Err(Sem::DuplicateColumn.into());
                }
                p.hit(P_CREATE + c.ty as u32);
                p.hit(P_CREATE + 23);
                let mut col = Column {
                    name: c.name.clone(),
                    ty: c.ty,
                    not_null: false,
                    default: Value::Null,
                };
                let idx = t.columns.len();
                for a in &c.attrs {
                    match a {
                        ColumnAttr::NotNull => {
                            p.hit(P_CREATE + 4);
                            col.not_null = true;
                        }
                        ColumnAttr::PrimaryKey => {
                            p.hit(P_CREATE + 5);
                            declare_primary(vec![idx])?;
                            col.not_null = true;
                            t.uniques.push(vec![idx]);
                        }
                        ColumnAttr::Unique => {
                            p.hit(P_CREATE + 6);
                            t.uniques.push(vec![idx]);
                        }
                        ColumnAttr::Default(l) => {
                            p.hit(P_CREATE + 7);
                            col.default = Value::from(l);
                        }
                        ColumnAttr::Check(x) => {
                            p.hit(P_CREATE + 8);
                            t.checks.push(x.clone());
                        }
                    }
                }
                t.columns.push(col);
            }
        }
        if t.columns.is_empty() {
            return Err(Sem::NoColumns.into());
        }
        let cols = table_cols(&t);
        for x in &t.checks {
            check_refs(x, &cols)?;
        }
        let col_idx = |n: &String| {
            t.columns
                .iter()
                .position(|c| &c.name == n)
                .ok_or(Fault::Semantic(Sem::NoSuchColumn))
        };
        let mut uniques = Vec::new();
        let mut checks = Vec::new();
        let mut inline = Vec::new();
        for e in elems {
            match e {
                TableElem::Column(_) => {}
                TableElem::PrimaryKey(names) => {
                    p.hit(P_CREATE + 9);
                    let key = names.iter().map(col_idx).collect::<R<Vec<_>>>()?;
                    declare_primary(key.clone())?;
                    uniques.push(key);
                }
                TableElem::Unique(names) => {
                    p.hit(P_CREATE + 10);
                    uniques.push(names.iter().map(col_idx).collect::<R<Vec<_>>>()?);
                }
                TableElem::Check(x) => {
                    p.hit(P_CREATE + 12);
                    check_refs(x, &cols)?;
                    checks.push(x.clone());
                }
                TableElem::Index { name, parts } => {
                    p.hit(P_CREATE + 11);
                    if self
                        .indexes
                        .iter()
                        .chain(inline.iter())
                        .any(|i: &Index| &i.name == name)
                    {
                        return Err(Sem::IndexExists.into());
                    }
                    Self::check_parts(p, parts, &cols, P_CREATE + 13)?;
                    inline.push(Index {
                        name: name.clone(),
                        table: t.name.clone(),
                        unique: false,
                        parts: parts.clone(),
                    });
                }
            }
        }
        for idx in &inline {
            let plain = idx.parts.iter().any(|k| matches!(k, KeyPart::Column(..)));
            let func = idx
                .parts
                .iter()
                .any(|k| matches!(k, KeyPart::Expr(e, _) if contains_func(e)));
            let desc = idx.parts.iter().any(|k| k.order() == Order::Desc);
            if plain && idx.has_expr_part() {
                p.hit(P_CREATE + 20);
                if func {
                    p.hit(P_CREATE + 21);
                    if desc {
                        return Err(Fault::Crash(BUG_MIXED_INLINE_INDEX));
                    }
                }
            }
            if desc {
                p.hit(P_CREATE + 22);
            }
        }
        t.uniques.extend(uniques);
        t.checks.extend(checks);
        self.tables.push(t);
        self.indexes.extend(inline);
        Ok(())
    }

    fn check_parts(p: &mut Probe, parts: &[KeyPart], cols: &[ColName], base: u32) -> R<()> {
        for k in parts {
            let kind = match k {
                KeyPart::Column(c, _) => {
                    resolve(cols, None, c)?;
                    0
                }
                KeyPart::Expr(e, _) => {
                    check_refs(e, cols)?;
                    1
                }
            };
            p.hit(base + kind * 3 + k.order() as u32);
        }
        Ok(())
    }

    fn index_key(p: &mut Probe, idx: &Index, cols: &[ColName], row: &[Value]) -> R<Vec<Key>> {
        let scope = Scope { cols, row };
        idx.parts
            .iter()
            .map(|k| match k {
                KeyPart::Column(c, _) => Ok(row[resolve(cols, None, c)?].key()),
                KeyPart::Expr(e, _) => Ok(eval(p, e, &scope, Ctx::default())?.key()),
            })
            .collect()
    }

    fn create_index(
        &mut self,
        p: &mut Probe,
        unique: bool,
        name: &str,
        table: &str,
        parts: &[KeyPart],
    ) -> R<()> {
        if self.indexes.iter().any(|i| i.name == name) {
            return Err(Sem::IndexExists.into());
        }
        let t = self.table(table)?;
        let cols = table_cols(t);
        Self::check_parts(p, parts, &cols, P_INDEX + 1)?;
        let idx = Index {
            name: name.to_string(),
            table: table.to_string(),
            unique,
            parts: parts.to_vec(),
        };
        let mut seen = BTreeSet::new();
        for row in &t.rows {
            p.hit(P_INDEX + 7);
            let key = Self::index_key(p, &idx, &cols, row)?;
            if unique && !key.contains(&Key::Null) && !seen.insert(key) {
                return Err(Sem::UniqueViolation.into());
            }
        }
        if unique {
            p.hit(P_INDEX);
            if idx.has_expr_part() && !t.rows.is_empty() {
                p.hit(P_INDEX + 8);
            }
        }
        if parts
            .iter()
            .any(|k| matches!(k, KeyPart::Expr(e, _) if contains_func(e)))
        {
            p.hit(P_INDEX + 9);
        }
        self.indexes.push(idx);
        Ok(())
    }

    fn insert(
        &mut self,
        p: &mut Probe,
        table: &str,
        columns: Option<&[String]>,
        rows: &[Vec<Expr>],
    ) -> R<()> {
        let ti = self.table_pos(table)?;
        let t = &self.tables[ti];
        let targets: Vec<usize> = match columns {
            None => (0..t.columns.len()).collect(),
            Some(names) => {
                p.hit(P_INSERT);
                let mut v = Vec::new();
                for n in names {
                    let i = t
                        .columns
                        .iter()
                        .position(|c| &c.name == n)
                        .ok_or(Fault::Semantic(Sem::NoSuchColumn))?;
                    if v.contains(&i) {
                        return Err(Sem::DuplicateColumn.into());
                    }
                    v.push(i);
                }
                v
            }
        };
        let cols = table_cols(t);
        let unique_idx: Vec<&Index> = self
            .indexes
            .iter()
            .filter(|i| i.unique && i.table == table)
            .collect();
        let mut new_rows: Vec<Vec<Value>> = Vec::new();
        for exprs in rows {
            // Short rows take the defaults of the trailing target columns.
            if exprs.len() > targets.len() {
                return Err(Sem::ArityMismatch.into());
            }
            let mut row: Vec<Value> = t.columns.iter().map(|c| c.default.clone()).collect();
            if targets.len() < t.columns.len() {
                p.hit(P_INSERT + 22);
            }
            if exprs.len() < targets.len() {
                p.hit(P_INSERT + 23);
            }
            for (e, &ci) in exprs.iter().zip(&targets) {
                row[ci] = eval(p, e, &EMPTY_SCOPE, Ctx::default())?;
            }
            for (c, v) in t.columns.iter().zip(&row) {
                p.hit(P_INSERT + 2 + c.ty as u32 * 5 + v.kind());
                if c.not_null && *v == Value::Null {
                    return Err(Sem::NotNullViolation.into());
                }
            }
            let scope = Scope {
                cols: &cols,
                row: &row,
            };
            for chk in &t.checks {
                if eval(p, chk, &scope, Ctx::default())?.truth() == Some(false) {
                    return Err(Sem::CheckViolation.into());
                }
            }
            for set in &t.uniques {
                if set.iter().any(|&i| row[i] == Value::Null) {
                    continue;
                }
                let key: Vec<Key> = set.iter().map(|&i| row[i].key()).collect();
                if t.rows
                    .iter()
                    .chain(&new_rows)
                    .any(|r| set.iter().map(|&i| r[i].key()).eq(key.iter().cloned()))
                {
                    return Err(Sem::UniqueViolation.into());
                }
            }
            for idx in &unique_idx {
                let key = Self::index_key(p, idx, &cols, &row)?;
                if key.contains(&Key::Null) {
                    continue;
                }
                for r in t.rows.iter().chain(&new_rows) {
                    if Self::index_key(p, idx, &cols, r)? == key {
                        return Err(Sem::UniqueViolation.into());
                    }
                }
            }
            new_rows.push(row);
            p.hit(P_INSERT + 1);
        }
        if t.rows.len() + new_rows.len() > MAX_ROWS {
            return Err(Sem::TableFull.into());
        }
        let t = &mut self.tables[ti];
        t.rows.extend(new_rows);
        p.hit_n(P_INSERT + 24, t.rows.len());
        Ok(())
    }

    fn delete(&mut self, p: &mut Probe, table: &str, filter: Option<&Expr>) -> R<()> {
        let ti = self.table_pos(table)?;
        let t = &self.tables[ti];
        let cols = table_cols(t);
        if let Some(f) = filter {
            check_refs(f, &cols)?;
        }
        p.hit_n(P_DELETE + 6, t.rows.len());
        let mut keep = Vec::with_capacity(t.rows.len());
        match filter {
            None => {
                p.hit(P_DELETE + 1);
                keep.resize(t.rows.len(), false);
            }
            Some(f) => {
                p.hit(P_DELETE);
                for row in &t.rows {
                    let scope = Scope { cols: &cols, row };
                    keep.push(eval(p, f, &scope, FILTER)?.truth() != Some(true));
                }
            }
        }
        let deleted = keep.iter().filter(|k| !**k).count();
        p.hit_n(P_DELETE + 2, deleted);
        let partial = deleted > 0 && deleted < keep.len();
        if partial {
            p.hit(P_DELETE + 3);
        }
        let idx: Vec<&Index> = self.indexes.iter().filter(|i| i.table == table).collect();
        if deleted > 0 && !idx.is_empty() {
            p.hit(P_DELETE + 4);
            if idx.iter().any(|i| i.unique && i.has_expr_part()) {
                p.hit(P_DELETE + 5);
                if keep.len() >= 2 {
                    return Err(Fault::Assert(BUG_DELETE_EXPR_UNIQUE));
                }
            }
        }
        let t = &mut self.tables[ti];
        let mut k = keep.iter();
        t.rows.retain(|_| *k.next().unwrap());
        Ok(())
    }

    fn drop_table(&mut self, p: &mut Probe, if_exists: bool, name: &str) -> R<()> {
        match self.table_pos(name) {
            Ok(i) => {
                self.tables.remove(i);
                self.indexes.retain(|x| x.table != name);
                p.hit(P_DROP);
                Ok(())
            }
            Err(_) if if_exists => {
                p.hit(P_DROP + 1);
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    fn relation_of(&self, p: &mut Probe, r: &TableRef) -> R<Relation> {
        match r {
            TableRef::Table { name, alias } => {
                let t = self.table(name)?;
                let mut cols = table_cols(t);
                if let Some(a) = alias {
                    p.hit(P_SELECT + 13);
                    for c in &mut cols {
                        c.quals.push(a.clone());
                    }
                }
                p.hit_n(P_SELECT + 20, t.rows.len());
                Ok(Relation {
                    cols,
                    rows: t.rows.clone(),
                })
            }
            TableRef::Derived { select, alias } => {
                p.hit(P_SELECT + 12);
                let mut rel = self.select(p, select)?;
                for c in &mut rel.cols {
                    c.quals = vec![alias.clone()];
                }
                Ok(rel)
            }
            TableRef::Join {
                left,
                kind,
                outer,
                right,
                on,
            } => {
                p.hit(P_SELECT + 14 + *kind as u32);
                if *outer {
                    p.hit(P_SELECT + 19);
                }
                let l = self.relation_of(p, left)?;
                let r = self.relation_of(p, right)?;
                if l.rows.len().saturating_mul(r.rows.len()) > MAX_JOIN_ROWS {
                    return Err(Sem::ResultTooLarge.into());
                }
                let mut cols = l.cols.clone();
                cols.extend(r.cols.iter().cloned());
                if let Some(cond) = on {
                    check_refs(cond, &cols)?;
                    if *kind == JoinKind::Right {
                        // Outer-join simplification: probe whether the
                        // condition rejects an all-NULL row.
                        p.hit(P_SELECT + 26);
                        let nulls = vec![Value::Null; cols.len()];
                        let scope = Scope {
                            cols: &cols,
                            row: &nulls,
                        };
                        match eval(
                            p,
                            cond,
                            &scope,
                            Ctx {
                                clause: Clause::RightJoinOn,
                            },
                        ) {
                            Ok(v) => p.hit(P_SELECT + 27 + (v.truth() == Some(true)) as u32),
                            Err(Fault::Semantic(_)) => p.hit(P_SELECT + 29),
                            Err(f) => return Err(f),
                        }
                    }
                }
                let natural: Vec<(usize, usize)> = if *kind == JoinKind::Natural {
                    l.cols
                        .iter()
                        .enumerate()
                        .filter_map(|(i, c)| {
                            r.cols.iter().position(|d| d.name == c.name).map(|j| (i, j))
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                let ctx = Ctx {
                    clause: if *kind == JoinKind::Right {
                        Clause::RightJoinOn
                    } else {
                        Clause::JoinOn
                    },
                };
                let mut matched = vec![vec![false; r.rows.len()]; l.rows.len()];
                for (i, lr) in l.rows.iter().enumerate() {
                    for (j, rr) in r.rows.iter().enumerate() {
                        let ok = match (kind, on) {
                            (JoinKind::Cross, _) => true,
                            (JoinKind::Natural, _) => natural
                                .iter()
                                .all(|&(a, b)| compare(&lr[a], &rr[b]) == Some(Ordering::Equal)),
                            (_, Some(cond)) => {
                                let mut row = lr.clone();
                                row.extend(rr.iter().cloned());
                                if ctx.clause == Clause::RightJoinOn {
                                    p.hit(P_SELECT + 25);
                                }
                                let scope = Scope {
                                    cols: &cols,
                                    row: &row,
                                };
                                eval(p, cond, &scope, ctx)?.truth() == Some(true)
                            }
                            (_, None) => true,
                        };
                        matched[i][j] = ok;
                    }
                }
                let mut rows = Vec::new();
                let lnull = vec![Value::Null; l.cols.len()];
                let rnull = vec![Value::Null; r.cols.len()];
                match kind {
                    JoinKind::Right => {
                        for (j, rr) in r.rows.iter().enumerate() {
                            let mut any = false;
                            for (i, lr) in l.rows.iter().enumerate() {
                                if matched[i][j] {
                                    any = true;
                                    rows.push([lr.as_slice(), rr.as_slice()].concat());
                                }
                            }
                            if !any {
                                p.hit(P_SELECT + 24);
                                rows.push([lnull.as_slice(), rr.as_slice()].concat());
                            }
                        }
                    }
                    _ => {
                        for (i, lr) in l.rows.iter().enumerate() {
                            let mut any = false;
                            for (j, rr) in r.rows.iter().enumerate() {
                                if matched[i][j] {
                                    any = true;
                                    rows.push([lr.as_slice(), rr.as_slice()].concat());
                                }
                            }
                            if !any && *kind == JoinKind::Left {
                                p.hit(P_SELECT + 23);
                                rows.push([lr.as_slice(), rnull.as_slice()].concat());
                            }
                        }
                    }
                }
                Ok(Relation { cols, rows })
            }
        }
    }

    fn select(&self, p: &mut Probe, sel: &Select) -> R<Relation> {
        if sel.distinct {
            p.hit(P_SELECT);
        }
        let src = match &sel.from {
            Some(f) => self.relation_of(p, f)?,
            None => {
                p.hit(P_SELECT + 2);
                if sel.items == SelectItems::Star {
                    return Err(Sem::StarWithoutFrom.into());
                }
                Relation {
                    cols: Vec::new(),
                    rows: vec![Vec::new()],
                }
            }
        };
        let cols = &src.cols;
        if let SelectItems::List(items) = &sel.items {
            for (e, _) in items {
                check_refs(e, cols)?;
            }
        }
        for e in sel
            .filter
            .iter()
            .chain(&sel.group_by)
            .chain(&sel.having)
            .chain(sel.order_by.iter().map(|(e, _)| e))
        {
            check_refs(e, cols)?;
        }
        let mut rows: Vec<&Vec<Value>> = Vec::new();
        match &sel.filter {
            Some(f) => {
                p.hit(P_SELECT + 3);
                for row in &src.rows {
                    if eval(p, f, &Scope { cols, row }, FILTER)?.truth() == Some(true) {
                        rows.push(row);
                    }
                }
            }
            None => rows.extend(src.rows.iter()),
        }
        if !sel.group_by.is_empty() {
            p.hit(P_SELECT + 4);
            let mut seen = BTreeSet::new();
            let mut reps = Vec::new();
            for row in rows {
                let mut key = Vec::new();
                for g in &sel.group_by {
                    key.push(eval(p, g, &Scope { cols, row }, Ctx::default())?.key());
                }
                if seen.insert(key) {
                    p.hit(P_SELECT + 22);
                    reps.push(row);
                }
            }
            rows = reps;
            if let Some(h) = &sel.having {
                p.hit(P_SELECT + 5);
                let mut kept = Vec::new();
                for row in rows {
                    if eval(p, h, &Scope { cols, row }, FILTER)?.truth() == Some(true) {
                        kept.push(row);
                    }
                }
                rows = kept;
            }
        }
        if !sel.order_by.is_empty() {
            let mut keyed = Vec::with_capacity(rows.len());
            for row in rows {
                let mut k = Vec::new();
                for (e, o) in &sel.order_by {
                    p.hit(P_SELECT + 6 + *o as u32);
                    k.push(eval(p, e, &Scope { cols, row }, Ctx::default())?);
                }
                keyed.push((k, row));
            }
            keyed.sort_by(|a, b| {
                for (i, (_, o)) in sel.order_by.iter().enumerate() {
                    let c = sort_cmp(&a.0[i], &b.0[i]);
                    let c = if *o == Order::Desc { c.reverse() } else { c };
                    if c != Ordering::Equal {
                        return c;
                    }
                }
                Ordering::Equal
            });
            rows = keyed.into_iter().map(|(_, r)| r).collect();
        }
        let (out_cols, mut out_rows) = match &sel.items {
            SelectItems::Star => {
                p.hit(P_SELECT + 1);
                (cols.clone(), rows.into_iter().cloned().collect::<Vec<_>>())
            }
            SelectItems::List(items) => {
                let out_cols = items
                    .iter()
                    .enumerate()
                    .map(|(i, (e, alias))| {
                        let name = match (alias, e) {
                            (Some(a), _) => a.clone(),
                            (None, Expr::Column { name, .. }) => name.clone(),
                            _ => format!("col{i}"),
                        };
                        ColName {
                            quals: Vec::new(),
                            name,
                        }
                    })
                    .collect();
                if items.iter().any(|(_, a)| a.is_some()) {
                    p.hit(P_SELECT + 11);
                }
                let mut out = Vec::with_capacity(rows.len());
                for row in rows {
                    let mut o = Vec::with_capacity(items.len());
                    for (e, _) in items {
                        o.push(eval(p, e, &Scope { cols, row }, Ctx::default())?);
                    }
                    out.push(o);
                }
                (out_cols, out)
            }
        };
        if sel.distinct {
            let mut seen = BTreeSet::new();
            let before = out_rows.len();
            out_rows.retain(|r| seen.insert(r.iter().map(Value::key).collect::<Vec<_>>()));
            if out_rows.len() < before {
                p.hit(P_SELECT + 27);
            }
        }
        if let Some(n) = sel.limit {
            p.hit(P_SELECT + 9);
            if n < 0 {
                p.hit(P_SELECT + 10);
            } else {
                out_rows.truncate(n as usize);
            }
        }
        p.hit_n(P_SELECT + 21, out_rows.len());
        Ok(Relation {
            cols: out_cols,
            rows: out_rows,
        })
    }
}
