//! The Trajectory Visualization Language: AST, parser, canonical printer
//! and structural validation.
//!
//! A statement names a chart type, an optional area, an optional closed time
//! window and a restricted SQL skeleton:
//!
//! ```text
//! VISUALIZE map AREA "Miyun District, Beijing"
//!   TIME "2010-03-22 09:00:00" TO "2012-05-04 21:01:00"
//!   SQL SELECT user_id, traj_id, latitude, longitude, datetime FROM traj_data
//!   ORDER BY user_id, traj_id, datetime
//! ```
//!
//! The canonical rendering is a single line; `parse_tvl(render_tvl(q)) == q`
//! for every valid query.

mod ast;
mod error;
mod lexer;
mod parser;
mod render;
mod validate;

pub use ast::*;
pub use error::{ParseError, Position};
pub use parser::{parse_sql_skeleton, parse_tvl};
pub use render::{render_join, render_order_key, render_select_item, render_sql, render_tvl};
pub use validate::{is_identifier, validate, Violation};
