//! Recursive-descent parser for the canonical TVL grammar:
//!
//! ```text
//! tvl    := VISUALIZE vis [AREA "name"] [TIME "ts" TO "ts"] SQL select
//! select := SELECT item {, item} FROM table {JOIN table ON col = col}
//!           [WHERE pred {AND pred}] [GROUP BY col {, col}]
//!           [BIN col BY unit] [ORDER BY col [ASC|DESC] {, ...}]
//! item   := agg ( * | col ) [AS name] | col [AS name]
//! pred   := col op literal | col IN ( literal {, literal} )
//! ```
//!
//! AREA and TIME may appear in either order, each at most once.

use super::ast::*;
use super::error::ParseError;
use super::lexer::{position_of, tokenize, Spanned, Tok};
use super::validate::validate;

const RESERVED: &[&str] = &[
    "VISUALIZE", "AREA", "TIME", "TO", "SQL", "SELECT", "FROM", "JOIN", "ON", "WHERE", "AND", "GROUP", "BY",
    "BIN", "ORDER", "ASC", "DESC", "AS", "IN",
];

pub(crate) fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|r| r.eq_ignore_ascii_case(word))
}

/// Parses TVL source into a validated [`TvlQuery`].
pub fn parse_tvl(src: &str) -> Result<TvlQuery, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { src, tokens, pos: 0 };
    let q = p.tvl()?;
    let violations = validate(&q);
    if violations.is_empty() {
        Ok(q)
    } else {
        Err(ParseError::Semantic(violations))
    }
}

/// Parses just the SQL skeleton (the text after the `SQL` keyword).
pub fn parse_sql_skeleton(src: &str) -> Result<SqlSkeleton, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { src, tokens, pos: 0 };
    let s = p.select()?;
    p.expect_eof()?;
    Ok(s)
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Spanned>,
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let idx = (self.pos + ahead).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn bump(&mut self) -> Tok {
        let tok = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let here = &self.tokens[self.pos];
        ParseError::Syntax {
            position: position_of(self.src, here.offset),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: here.tok.to_string(),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(&[kw]))
        }
    }

    fn expect(&mut self, tok: Tok, label: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[label]))
        }
    }

    fn expect_eof(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            Err(self.error(&["end of input"]))
        }
    }

    fn tvl(&mut self) -> Result<TvlQuery, ParseError> {
        self.expect_keyword("VISUALIZE")?;
        let vis = match self.peek() {
            Tok::Word(w) => match w.parse::<VisType>() {
                Ok(v) => {
                    self.bump();
                    v
                }
                Err(_) => return Err(self.error(&["map", "bar", "line", "pie"])),
            },
            _ => return Err(self.error(&["map", "bar", "line", "pie"])),
        };

        let mut area = None;
        let mut time = None;
        loop {
            if area.is_none() && self.at_keyword("AREA") {
                self.bump();
                area = Some(self.area()?);
            } else if time.is_none() && self.at_keyword("TIME") {
                self.bump();
                time = Some(self.time_window()?);
            } else {
                break;
            }
        }

        if !self.eat_keyword("SQL") {
            let mut expected = Vec::new();
            if area.is_none() {
                expected.push("AREA");
            }
            if time.is_none() {
                expected.push("TIME");
            }
            expected.push("SQL");
            return Err(self.error(&expected));
        }
        let sql = self.select()?;
        self.expect_eof()?;
        Ok(TvlQuery { vis, area, time, sql })
    }

    fn area(&mut self) -> Result<AreaRef, ParseError> {
        match self.peek().clone() {
            Tok::DoubleQuoted(name) => match AreaRef::new(&name) {
                Some(a) => {
                    self.bump();
                    Ok(a)
                }
                None => Err(self.error(&["non-empty area name"])),
            },
            _ => Err(self.error(&["quoted area name"])),
        }
    }

    fn timestamp(&mut self) -> Result<Timestamp, ParseError> {
        match self.peek().clone() {
            Tok::DoubleQuoted(text) => match Timestamp::parse(&text) {
                Some(t) if text.trim() == t.to_string() => {
                    self.bump();
                    Ok(t)
                }
                _ => Err(self.error(&["timestamp \"YYYY-MM-DD HH:MM:SS\""])),
            },
            _ => Err(self.error(&["timestamp \"YYYY-MM-DD HH:MM:SS\""])),
        }
    }

    fn time_window(&mut self) -> Result<TimeWindow, ParseError> {
        let start = self.timestamp()?;
        self.expect_keyword("TO")?;
        let end = self.timestamp()?;
        Ok(TimeWindow { start, end })
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Tok::Word(w) if !is_reserved(w) => {
                let w = w.clone();
                self.bump();
                Ok(w)
            }
            _ => Err(self.error(&[what])),
        }
    }

    fn column(&mut self) -> Result<ColumnRef, ParseError> {
        let first = self.ident("column name")?;
        if *self.peek() == Tok::Dot {
            self.bump();
            let name = self.ident("column name")?;
            Ok(ColumnRef { table: Some(first), name })
        } else {
            Ok(ColumnRef { table: None, name: first })
        }
    }

    fn alias(&mut self) -> Result<Option<String>, ParseError> {
        if self.eat_keyword("AS") {
            Ok(Some(self.ident("alias")?))
        } else {
            Ok(None)
        }
    }

    fn select_item(&mut self) -> Result<SelectItem, ParseError> {
        if let (Tok::Word(w), Tok::LParen) = (self.peek(), self.peek_at(1)) {
            let Some(func) = AggFunc::from_keyword(w) else {
                return Err(self.error(&["AVG", "COUNT", "SUM", "MAX", "MIN", "column name"]));
            };
            self.bump();
            self.bump();
            let arg = if *self.peek() == Tok::Star {
                if func != AggFunc::Count {
                    return Err(self.error(&["column name"]));
                }
                self.bump();
                AggArg::Star
            } else {
                AggArg::Column(self.column()?)
            };
            self.expect(Tok::RParen, "`)`")?;
            let alias = self.alias()?;
            return Ok(SelectItem::Aggregate { func, arg, alias });
        }
        let column = self.column()?;
        let alias = self.alias()?;
        Ok(SelectItem::Column { column, alias })
    }

    fn scalar(&mut self) -> Result<Scalar, ParseError> {
        let s = match self.peek() {
            Tok::Int(v) => Scalar::Int(*v),
            Tok::Float(v) => Scalar::Float(*v),
            Tok::SingleQuoted(s) => Scalar::Text(s.clone()),
            _ => return Err(self.error(&["number", "'string'"])),
        };
        self.bump();
        Ok(s)
    }

    fn predicate(&mut self) -> Result<Predicate, ParseError> {
        let column = self.column()?;
        if self.eat_keyword("IN") {
            self.expect(Tok::LParen, "`(`")?;
            let mut values = vec![self.scalar()?];
            while *self.peek() == Tok::Comma {
                self.bump();
                values.push(self.scalar()?);
            }
            self.expect(Tok::RParen, "`)`")?;
            return Ok(Predicate { column, cmp: Comparison::In(values) });
        }
        let Tok::Op(op) = *self.peek() else {
            return Err(self.error(&["comparison operator", "IN"]));
        };
        self.bump();
        let value = self.scalar()?;
        Ok(Predicate { column, cmp: Comparison::Binary(op, value) })
    }

    fn select(&mut self) -> Result<SqlSkeleton, ParseError> {
        self.expect_keyword("SELECT")?;
        let mut select = vec![self.select_item()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            select.push(self.select_item()?);
        }
        self.expect_keyword("FROM")?;
        let from = self.ident("table name")?;

        let mut joins = Vec::new();
        while self.eat_keyword("JOIN") {
            let table = self.ident("table name")?;
            self.expect_keyword("ON")?;
            let left = self.column()?;
            self.expect(Tok::Op(CmpOp::Eq), "`=`")?;
            let right = self.column()?;
            joins.push(Join { table, left, right });
        }

        let mut predicates = Vec::new();
        if self.eat_keyword("WHERE") {
            predicates.push(self.predicate()?);
            while self.eat_keyword("AND") {
                predicates.push(self.predicate()?);
            }
        }

        let mut transform = TransformSpec::default();
        if self.eat_keyword("GROUP") {
            self.expect_keyword("BY")?;
            transform.group_keys.push(self.column()?);
            while *self.peek() == Tok::Comma {
                self.bump();
                transform.group_keys.push(self.column()?);
            }
        }
        if self.eat_keyword("BIN") {
            let column = self.column()?;
            self.expect_keyword("BY")?;
            let unit = match self.peek() {
                Tok::Word(w) => BinUnit::from_keyword(w),
                _ => None,
            };
            let Some(unit) = unit else {
                return Err(self.error(&["HOUR", "DAY", "MONTH", "YEAR"]));
            };
            self.bump();
            transform.bin = Some(TemporalBin { column, unit });
        }

        let mut order_by = Vec::new();
        if self.eat_keyword("ORDER") {
            self.expect_keyword("BY")?;
            loop {
                let key = self.column()?;
                let direction = if self.eat_keyword("DESC") {
                    Direction::Desc
                } else {
                    self.eat_keyword("ASC");
                    Direction::Asc
                };
                order_by.push(OrderKey { key, direction });
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }

        if !matches!(self.peek(), Tok::Eof) {
            let mut expected = vec!["end of input"];
            if order_by.is_empty() {
                expected.push("ORDER BY");
                if transform.bin.is_none() {
                    expected.push("BIN");
                    if transform.group_keys.is_empty() {
                        expected.push("GROUP BY");
                        if predicates.is_empty() {
                            expected.push("WHERE");
                        }
                    }
                }
            }
            return Err(self.error(&expected));
        }

        Ok(SqlSkeleton {
            select,
            from,
            joins,
            filter: Conjunction::new(predicates),
            transform: (!transform.is_empty()).then_some(transform),
            order_by,
        })
    }
}
