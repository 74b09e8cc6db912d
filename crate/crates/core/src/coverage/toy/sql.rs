//! Lexer, syntax tree and recursive-descent parser for the toy dialect.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Kw(&'static str),
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Punct(&'static str),
}

const KEYWORDS: &[&str] = &[
    "ABS", "AND", "AS", "ASC", "BETWEEN", "BINARY", "BOOL", "BY", "CASE", "CHECK", "COALESCE",
    "COLLATE", "CREATE", "CROSS", "DEFAULT", "DELETE", "DESC", "DISTINCT", "DROP", "ELSE", "END",
    "EXISTS", "FALSE", "FLOAT", "FROM", "GROUP", "HAVING", "IF", "IN", "INDEX", "INNER", "INSERT",
    "INT", "INTO", "IS", "JOIN", "KEY", "LEFT", "LENGTH", "LIMIT", "NATURAL", "NOCASE", "NOT",
    "NULL", "NULLIF", "ON", "OR", "ORDER", "OUTER", "PRIMARY", "RIGHT", "RTRIM", "SELECT", "TABLE",
    "TEXT", "THEN", "TRUE", "UNIQUE", "UPPER", "VALUES", "WHEN", "WHERE",
];

const PUNCT: &[&str] = &[
    "<=", ">=", "<>", "(", ")", ",", ".", "*", "=", "<", ">", "+", "-", "/", "%",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError(pub String);

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error: {}", self.0)
    }
}

pub fn lex(src: &str) -> Result<Vec<Tok>, SyntaxError> {
    let b = src.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let s = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            let word = &src[s..i];
            let upper = word.to_ascii_uppercase();
            match KEYWORDS.iter().find(|k| **k == upper) {
                Some(k) => out.push(Tok::Kw(k)),
                None => out.push(Tok::Ident(word.to_string())),
            }
        } else if c.is_ascii_digit()
            || (c == b'-'
                && b.get(i + 1).is_some_and(|d| d.is_ascii_digit())
                && !matches!(
                    out.last(),
                    Some(
                        Tok::Int(_) | Tok::Float(_) | Tok::Str(_) | Tok::Ident(_) | Tok::Punct(")")
                    )
                ))
        {
            let s = i;
            i += 1;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            let mut float = false;
            if i + 1 < b.len() && b[i] == b'.' && b[i + 1].is_ascii_digit() {
                float = true;
                i += 1;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text = &src[s..i];
            if float {
                out.push(Tok::Float(
                    text.parse()
                        .map_err(|_| SyntaxError(format!("bad number {text}")))?,
                ));
            } else {
                match text.parse::<i64>() {
                    Ok(v) => out.push(Tok::Int(v)),
                    Err(_) => return Err(SyntaxError(format!("integer out of range: {text}"))),
                }
            }
        } else if c == b'\'' {
            i += 1;
            let mut s = String::new();
            loop {
                match b.get(i) {
                    None => return Err(SyntaxError("unterminated string".into())),
                    Some(b'\'') if b.get(i + 1) == Some(&b'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some(b'\'') => {
                        i += 1;
                        break;
                    }
                    Some(_) => {
                        let ch = src[i..].chars().next().unwrap();
                        s.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            out.push(Tok::Str(s));
        } else {
            match PUNCT.iter().find(|p| src[i..].starts_with(**p)) {
                Some(p) => {
                    out.push(Tok::Punct(p));
                    i += p.len();
                }
                None => {
                    return Err(SyntaxError(format!(
                        "unexpected character {:?}",
                        src[i..].chars().next().unwrap()
                    )))
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    Int,
    Float,
    Text,
    Bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Default,
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Null,
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
    Ne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Length,
    Upper,
    Coalesce,
    Nullif,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Collation {
    Binary,
    Nocase,
    Rtrim,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column {
        table: Option<String>,
        name: String,
    },
    Lit(Literal),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    IsNull {
        expr: Box<Expr>,
        negated: bool,
    },
    Between {
        expr: Box<Expr>,
        lo: Box<Expr>,
        hi: Box<Expr>,
        negated: bool,
    },
    In {
        expr: Box<Expr>,
        list: Vec<Expr>,
        negated: bool,
    },
    Case {
        when: Box<Expr>,
        then: Box<Expr>,
        otherwise: Option<Box<Expr>>,
    },
    Func(Func, Vec<Expr>),
    Collate(Box<Expr>, Collation),
}

impl Expr {
    pub fn any(&self, f: &dyn Fn(&Expr) -> bool) -> bool {
        if f(self) {
            return true;
        }
        match self {
            Expr::Column { .. } | Expr::Lit(_) => false,
            Expr::Cmp(_, a, b) | Expr::Arith(_, a, b) | Expr::And(a, b) | Expr::Or(a, b) => {
                a.any(f) || b.any(f)
            }
            Expr::Not(e) | Expr::IsNull { expr: e, .. } | Expr::Collate(e, _) => e.any(f),
            Expr::Between { expr, lo, hi, .. } => expr.any(f) || lo.any(f) || hi.any(f),
            Expr::In { expr, list, .. } => expr.any(f) || list.iter().any(|e| e.any(f)),
            Expr::Case {
                when,
                then,
                otherwise,
            } => when.any(f) || then.any(f) || otherwise.as_ref().is_some_and(|e| e.any(f)),
            Expr::Func(_, args) => args.iter().any(|e| e.any(f)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnAttr {
    NotNull,
    PrimaryKey,
    Unique,
    Default(Literal),
    Check(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDef {
    pub name: String,
    pub ty: DataType,
    pub attrs: Vec<ColumnAttr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KeyPart {
    Column(String, Order),
    Expr(Expr, Order),
}

impl KeyPart {
    pub fn order(&self) -> Order {
        match self {
            KeyPart::Column(_, o) | KeyPart::Expr(_, o) => *o,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableElem {
    Column(ColumnDef),
    PrimaryKey(Vec<String>),
    Unique(Vec<String>),
    Index { name: String, parts: Vec<KeyPart> },
    Check(Expr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKind {
    Inner,
    Left,
    Right,
    Cross,
    Natural,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableRef {
    Table {
        name: String,
        alias: Option<String>,
    },
    Derived {
        select: Box<Select>,
        alias: String,
    },
    Join {
        left: Box<TableRef>,
        kind: JoinKind,
        outer: bool,
        right: Box<TableRef>,
        on: Option<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItems {
    Star,
    List(Vec<(Expr, Option<String>)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Select {
    pub distinct: bool,
    pub items: SelectItems,
    pub from: Option<TableRef>,
    pub filter: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
    pub order_by: Vec<(Expr, Order)>,
    pub limit: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    CreateTable {
        if_not_exists: bool,
        name: String,
        elems: Vec<TableElem>,
    },
    CreateIndex {
        unique: bool,
        name: String,
        table: String,
        parts: Vec<KeyPart>,
    },
    Insert {
        table: String,
        columns: Option<Vec<String>>,
        rows: Vec<Vec<Expr>>,
    },
    Select(Select),
    Delete {
        table: String,
        filter: Option<Expr>,
    },
    DropTable {
        if_exists: bool,
        name: String,
    },
    DropIndex {
        name: String,
    },
}

pub fn parse(src: &str) -> Result<Stmt, SyntaxError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let stmt = p.statement()?;
    if p.pos != p.toks.len() {
        return Err(p.unexpected());
    }
    Ok(stmt)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

type PResult<T> = Result<T, SyntaxError>;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k)
    }

    fn unexpected(&self) -> SyntaxError {
        match self.peek() {
            Some(t) => SyntaxError(format!("unexpected {t:?} at token {}", self.pos)),
            None => SyntaxError("unexpected end of input".into()),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Kw(k)) if *k == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Punct(q)) if *q == p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected()),
        }
    }

    fn statement(&mut self) -> PResult<Stmt> {
        match self.peek() {
            Some(Tok::Kw("CREATE")) => {
                self.pos += 1;
                if self.eat_kw("TABLE") {
                    self.create_table()
                } else {
                    let unique = self.eat_kw("UNIQUE");
                    self.kw("INDEX")?;
                    let name = self.ident()?;
                    self.kw("ON")?;
                    let table = self.ident()?;
                    self.punct("(")?;
                    let parts = self.key_parts()?;
                    self.punct(")")?;
                    Ok(Stmt::CreateIndex {
                        unique,
                        name,
                        table,
                        parts,
                    })
                }
            }
            Some(Tok::Kw("INSERT")) => {
                self.pos += 1;
                self.kw("INTO")?;
                let table = self.ident()?;
                let columns = if self.eat_punct("(") {
                    let c = self.name_list()?;
                    self.punct(")")?;
                    Some(c)
                } else {
                    None
                };
                self.kw("VALUES")?;
                let mut rows = Vec::new();
                loop {
                    self.punct("(")?;
                    rows.push(self.expr_list()?);
                    self.punct(")")?;
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                Ok(Stmt::Insert {
                    table,
                    columns,
                    rows,
                })
            }
            Some(Tok::Kw("SELECT")) => Ok(Stmt::Select(self.select()?)),
            Some(Tok::Kw("DELETE")) => {
                self.pos += 1;
                self.kw("FROM")?;
                let table = self.ident()?;
                let filter = if self.eat_kw("WHERE") {
                    Some(self.a_expr()?)
                } else {
                    None
                };
                Ok(Stmt::Delete { table, filter })
            }
            Some(Tok::Kw("DROP")) => {
                self.pos += 1;
                if self.eat_kw("INDEX") {
                    Ok(Stmt::DropIndex {
                        name: self.ident()?,
                    })
                } else {
                    self.kw("TABLE")?;
                    let if_exists = if self.eat_kw("IF") {
                        self.kw("EXISTS")?;
                        true
                    } else {
                        false
                    };
                    Ok(Stmt::DropTable {
                        if_exists,
                        name: self.ident()?,
                    })
                }
            }
            _ => Err(self.unexpected()),
        }
    }

    fn create_table(&mut self) -> PResult<Stmt> {
        let if_not_exists = if self.eat_kw("IF") {
            self.kw("NOT")?;
            self.kw("EXISTS")?;
            true
        } else {
            false
        };
        let name = self.ident()?;
        self.punct("(")?;
        let mut elems = Vec::new();
        loop {
            elems.push(self.table_elem()?);
            if !self.eat_punct(",") {
                break;
            }
        }
        self.punct(")")?;
        Ok(Stmt::CreateTable {
            if_not_exists,
            name,
            elems,
        })
    }

    fn table_elem(&mut self) -> PResult<TableElem> {
        match self.peek() {
            Some(Tok::Kw("PRIMARY")) => {
                self.pos += 1;
                self.kw("KEY")?;
                self.punct("(")?;
                let cols = self.name_list()?;
                self.punct(")")?;
                Ok(TableElem::PrimaryKey(cols))
            }
            Some(Tok::Kw("UNIQUE")) => {
                self.pos += 1;
                self.punct("(")?;
                let cols = self.name_list()?;
                self.punct(")")?;
                Ok(TableElem::Unique(cols))
            }
            Some(Tok::Kw("INDEX")) => {
                self.pos += 1;
                let name = self.ident()?;
                self.punct("(")?;
                let parts = self.key_parts()?;
                self.punct(")")?;
                Ok(TableElem::Index { name, parts })
            }
            Some(Tok::Kw("CHECK")) => {
                self.pos += 1;
                self.punct("(")?;
                let e = self.a_expr()?;
                self.punct(")")?;
                Ok(TableElem::Check(e))
            }
            Some(Tok::Ident(_)) => {
                let name = self.ident()?;
                let ty = match self.peek() {
                    Some(Tok::Kw("INT")) => DataType::Int,
                    Some(Tok::Kw("FLOAT")) => DataType::Float,
                    Some(Tok::Kw("TEXT")) => DataType::Text,
                    Some(Tok::Kw("BOOL")) => DataType::Bool,
                    _ => return Err(self.unexpected()),
                };
                self.pos += 1;
                let mut attrs = Vec::new();
                loop {
                    match self.peek() {
                        Some(Tok::Kw("NOT")) => {
                            self.pos += 1;
                            self.kw("NULL")?;
                            attrs.push(ColumnAttr::NotNull);
                        }
                        Some(Tok::Kw("PRIMARY")) => {
                            self.pos += 1;
                            self.kw("KEY")?;
                            attrs.push(ColumnAttr::PrimaryKey);
                        }
                        Some(Tok::Kw("UNIQUE")) => {
                            self.pos += 1;
                            attrs.push(ColumnAttr::Unique);
                        }
                        Some(Tok::Kw("DEFAULT")) => {
                            self.pos += 1;
                            attrs.push(ColumnAttr::Default(self.literal()?));
                        }
                        Some(Tok::Kw("CHECK")) => {
                            self.pos += 1;
                            self.punct("(")?;
                            attrs.push(ColumnAttr::Check(self.a_expr()?));
                            self.punct(")")?;
                        }
                        _ => break,
                    }
                }
                Ok(TableElem::Column(ColumnDef { name, ty, attrs }))
            }
            _ => Err(self.unexpected()),
        }
    }

    fn name_list(&mut self) -> PResult<Vec<String>> {
        let mut v = vec![self.ident()?];
        while self.eat_punct(",") {
            v.push(self.ident()?);
        }
        Ok(v)
    }

    fn order(&mut self) -> Order {
        if self.eat_kw("ASC") {
            Order::Asc
        } else if self.eat_kw("DESC") {
            Order::Desc
        } else {
            Order::Default
        }
    }

    fn key_parts(&mut self) -> PResult<Vec<KeyPart>> {
        let mut v = Vec::new();
        loop {
            if self.eat_punct("(") {
                let e = self.a_expr()?;
                self.punct(")")?;
                let o = self.order();
                v.push(KeyPart::Expr(e, o));
            } else {
                let c = self.ident()?;
                let o = self.order();
                v.push(KeyPart::Column(c, o));
            }
            if !self.eat_punct(",") {
                break;
            }
        }
        Ok(v)
    }

    fn expr_list(&mut self) -> PResult<Vec<Expr>> {
        let mut v = vec![self.a_expr()?];
        while self.eat_punct(",") {
            v.push(self.a_expr()?);
        }
        Ok(v)
    }

    fn select(&mut self) -> PResult<Select> {
        self.kw("SELECT")?;
        let distinct = self.eat_kw("DISTINCT");
        let items = if self.eat_punct("*") {
            SelectItems::Star
        } else {
            let mut v = Vec::new();
            loop {
                let e = self.a_expr()?;
                let alias = if self.eat_kw("AS") {
                    Some(self.ident()?)
                } else {
                    None
                };
                v.push((e, alias));
                if !self.eat_punct(",") {
                    break;
                }
            }
            SelectItems::List(v)
        };
        let mut sel = Select {
            distinct,
            items,
            from: None,
            filter: None,
            group_by: Vec::new(),
            having: None,
            order_by: Vec::new(),
            limit: None,
        };
        if !self.eat_kw("FROM") {
            return Ok(sel);
        }
        sel.from = Some(self.table_reference()?);
        if self.eat_kw("WHERE") {
            sel.filter = Some(self.a_expr()?);
        }
        if self.eat_kw("GROUP") {
            self.kw("BY")?;
            sel.group_by = self.expr_list()?;
            if self.eat_kw("HAVING") {
                sel.having = Some(self.a_expr()?);
            }
        }
        if self.eat_kw("ORDER") {
            self.kw("BY")?;
            loop {
                let e = self.a_expr()?;
                let o = self.order();
                sel.order_by.push((e, o));
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        if self.eat_kw("LIMIT") {
            match self.peek() {
                Some(Tok::Int(n)) => {
                    sel.limit = Some(*n);
                    self.pos += 1;
                }
                _ => return Err(self.unexpected()),
            }
        }
        Ok(sel)
    }

    fn table_factor(&mut self) -> PResult<TableRef> {
        let name = self.ident()?;
        let alias = if self.eat_kw("AS") {
            Some(self.ident()?)
        } else {
            None
        };
        Ok(TableRef::Table { name, alias })
    }

    fn table_reference(&mut self) -> PResult<TableRef> {
        let mut left = if self.eat_punct("(") {
            let select = self.select()?;
            self.punct(")")?;
            self.kw("AS")?;
            TableRef::Derived {
                select: Box::new(select),
                alias: self.ident()?,
            }
        } else {
            self.table_factor()?
        };
        loop {
            let (kind, outer) = match self.peek() {
                Some(Tok::Kw("JOIN")) => {
                    self.pos += 1;
                    (JoinKind::Inner, false)
                }
                Some(Tok::Kw("INNER")) => {
                    self.pos += 1;
                    self.kw("JOIN")?;
                    (JoinKind::Inner, false)
                }
                Some(Tok::Kw(k @ ("LEFT" | "RIGHT"))) => {
                    let kind = if *k == "LEFT" {
                        JoinKind::Left
                    } else {
                        JoinKind::Right
                    };
                    self.pos += 1;
                    let outer = self.eat_kw("OUTER");
                    self.kw("JOIN")?;
                    (kind, outer)
                }
                Some(Tok::Kw("CROSS")) => {
                    self.pos += 1;
                    self.kw("JOIN")?;
                    (JoinKind::Cross, false)
                }
                Some(Tok::Kw("NATURAL")) => {
                    self.pos += 1;
                    self.eat_kw("INNER");
                    self.kw("JOIN")?;
                    (JoinKind::Natural, false)
                }
                _ => break,
            };
            let right = self.table_factor()?;
            let on = match kind {
                JoinKind::Inner | JoinKind::Left | JoinKind::Right => {
                    self.kw("ON")?;
                    Some(self.a_expr()?)
                }
                _ => None,
            };
            left = TableRef::Join {
                left: Box::new(left),
                kind,
                outer,
                right: Box::new(right),
                on,
            };
        }
        Ok(left)
    }

    fn a_expr(&mut self) -> PResult<Expr> {
        let mut e = self.bool_term()?;
        while self.eat_kw("OR") {
            e = Expr::Or(Box::new(e), Box::new(self.bool_term()?));
        }
        Ok(e)
    }

    fn bool_term(&mut self) -> PResult<Expr> {
        let mut e = self.bool_factor()?;
        while self.eat_kw("AND") {
            e = Expr::And(Box::new(e), Box::new(self.bool_factor()?));
        }
        Ok(e)
    }

    fn bool_factor(&mut self) -> PResult<Expr> {
        if self.eat_kw("NOT") {
            Ok(Expr::Not(Box::new(self.bool_factor()?)))
        } else {
            self.predicate()
        }
    }

    fn predicate(&mut self) -> PResult<Expr> {
        let e = self.bit_expr()?;
        let cmp = match self.peek() {
            Some(Tok::Punct("=")) => Some(CmpOp::Eq),
            Some(Tok::Punct("<")) => Some(CmpOp::Lt),
            Some(Tok::Punct(">")) => Some(CmpOp::Gt),
            Some(Tok::Punct("<=")) => Some(CmpOp::Le),
            Some(Tok::Punct(">=")) => Some(CmpOp::Ge),
            Some(Tok::Punct("<>")) => Some(CmpOp::Ne),
            _ => None,
        };
        if let Some(op) = cmp {
            self.pos += 1;
            return Ok(Expr::Cmp(op, Box::new(e), Box::new(self.bit_expr()?)));
        }
        if self.eat_kw("IS") {
            let negated = self.eat_kw("NOT");
            self.kw("NULL")?;
            return Ok(Expr::IsNull {
                expr: Box::new(e),
                negated,
            });
        }
        let negated = matches!(self.peek(), Some(Tok::Kw("NOT")))
            && matches!(self.peek_at(1), Some(Tok::Kw("BETWEEN" | "IN")));
        if negated {
            self.pos += 1;
        }
        if self.eat_kw("BETWEEN") {
            let lo = self.bit_expr()?;
            self.kw("AND")?;
            let hi = self.bit_expr()?;
            return Ok(Expr::Between {
                expr: Box::new(e),
                lo: Box::new(lo),
                hi: Box::new(hi),
                negated,
            });
        }
        if self.eat_kw("IN") {
            self.punct("(")?;
            let list = self.expr_list()?;
            self.punct(")")?;
            return Ok(Expr::In {
                expr: Box::new(e),
                list,
                negated,
            });
        }
        Ok(e)
    }

    fn bit_expr(&mut self) -> PResult<Expr> {
        let mut e = self.simple_expr()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Punct("+")) => ArithOp::Add,
                Some(Tok::Punct("-")) => ArithOp::Sub,
                Some(Tok::Punct("*")) => ArithOp::Mul,
                Some(Tok::Punct("/")) => ArithOp::Div,
                Some(Tok::Punct("%")) => ArithOp::Rem,
                _ => break,
            };
            self.pos += 1;
            e = Expr::Arith(op, Box::new(e), Box::new(self.simple_expr()?));
        }
        Ok(e)
    }

    fn simple_expr(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.eat_kw("COLLATE") {
            let c = match self.peek() {
                Some(Tok::Kw("BINARY")) => Collation::Binary,
                Some(Tok::Kw("NOCASE")) => Collation::Nocase,
                Some(Tok::Kw("RTRIM")) => Collation::Rtrim,
                _ => return Err(self.unexpected()),
            };
            self.pos += 1;
            e = Expr::Collate(Box::new(e), c);
        }
        Ok(e)
    }

    fn literal(&mut self) -> PResult<Literal> {
        let lit = match self.peek() {
            Some(Tok::Int(v)) => Literal::Int(*v),
            Some(Tok::Float(v)) => Literal::Float(*v),
            Some(Tok::Str(s)) => Literal::Text(s.clone()),
            Some(Tok::Kw("NULL")) => Literal::Null,
            Some(Tok::Kw("TRUE")) => Literal::Bool(true),
            Some(Tok::Kw("FALSE")) => Literal::Bool(false),
            _ => return Err(self.unexpected()),
        };
        self.pos += 1;
        Ok(lit)
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek() {
            Some(Tok::Punct("(")) => {
                self.pos += 1;
                let e = self.a_expr()?;
                self.punct(")")?;
                Ok(e)
            }
            Some(Tok::Ident(_)) => {
                let first = self.ident()?;
                if self.eat_punct(".") {
                    let name = self.ident()?;
                    Ok(Expr::Column {
                        table: Some(first),
                        name,
                    })
                } else {
                    Ok(Expr::Column {
                        table: None,
                        name: first,
                    })
                }
            }
            Some(Tok::Kw(k @ ("ABS" | "LENGTH" | "UPPER" | "COALESCE" | "NULLIF"))) => {
                let f = match *k {
                    "ABS" => Func::Abs,
                    "LENGTH" => Func::Length,
                    "UPPER" => Func::Upper,
                    "COALESCE" => Func::Coalesce,
                    _ => Func::Nullif,
                };
                self.pos += 1;
                self.punct("(")?;
                let args = self.expr_list()?;
                self.punct(")")?;
                Ok(Expr::Func(f, args))
            }
            Some(Tok::Kw("CASE")) => {
                self.pos += 1;
                self.kw("WHEN")?;
                let when = self.a_expr()?;
                self.kw("THEN")?;
                let then = self.a_expr()?;
                let otherwise = if self.eat_kw("ELSE") {
                    Some(Box::new(self.a_expr()?))
                } else {
                    None
                };
                self.kw("END")?;
                Ok(Expr::Case {
                    when: Box::new(when),
                    then: Box::new(then),
                    otherwise,
                })
            }
            _ => Ok(Expr::Lit(self.literal()?)),
        }
    }
}
