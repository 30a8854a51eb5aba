//! Format identifiers and their categories.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("unknown format id {0:?}")]
    Unknown(String),
    #[error("{0} is not a renderable serialization")]
    NotRenderable(FormatId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FormatId {
    Pipe,
    Token,
    Space,
    Csv,
    Tsv,
    Html,
    Markdown,
    Latex,
    Dict,
    Json,
    Xml,
    ShuffledRows,
    ShuffledCols,
    Transpose,
    MSchema,
    MacSchema,
    Ddl,
    CentroidPopular,
    CentroidData,
    CentroidStructural,
    CentroidSchema,
    CentroidAll,
    /// Per-row mixed rendering.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Popular,
    Data,
    Structural,
    Schema,
}

/// The 17 renderable formats in canonical order.
pub const RENDERABLE: [FormatId; 17] = [
    FormatId::Pipe,
    FormatId::Token,
    FormatId::Space,
    FormatId::Csv,
    FormatId::Tsv,
    FormatId::Html,
    FormatId::Markdown,
    FormatId::Latex,
    FormatId::Dict,
    FormatId::Json,
    FormatId::Xml,
    FormatId::ShuffledRows,
    FormatId::ShuffledCols,
    FormatId::Transpose,
    FormatId::MSchema,
    FormatId::MacSchema,
    FormatId::Ddl,
];

pub const CENTROID_VARIANTS: [FormatId; 5] = [
    FormatId::CentroidPopular,
    FormatId::CentroidData,
    FormatId::CentroidStructural,
    FormatId::CentroidSchema,
    FormatId::CentroidAll,
];

/// Formats a row may be drawn from in mixed rendering.
pub const PERTURB_FORMATS: [FormatId; 9] = [
    FormatId::Csv,
    FormatId::Tsv,
    FormatId::Html,
    FormatId::Markdown,
    FormatId::Latex,
    FormatId::Json,
    FormatId::Pipe,
    FormatId::Token,
    FormatId::Space,
];

impl FormatId {
    pub const fn as_str(self) -> &'static str {
        match self {
            FormatId::Pipe => "pipe",
            FormatId::Token => "token",
            FormatId::Space => "space",
            FormatId::Csv => "csv",
            FormatId::Tsv => "tsv",
            FormatId::Html => "html",
            FormatId::Markdown => "markdown",
            FormatId::Latex => "latex",
            FormatId::Dict => "dict",
            FormatId::Json => "json",
            FormatId::Xml => "xml",
            FormatId::ShuffledRows => "shuffled_rows",
            FormatId::ShuffledCols => "shuffled_cols",
            FormatId::Transpose => "transpose",
            FormatId::MSchema => "mschema",
            FormatId::MacSchema => "macschema",
            FormatId::Ddl => "ddl",
            FormatId::CentroidPopular => "centroid_popular",
            FormatId::CentroidData => "centroid_data",
            FormatId::CentroidStructural => "centroid_structural",
            FormatId::CentroidSchema => "centroid_schema",
            FormatId::CentroidAll => "centroid_all",
            FormatId::Mixed => "mixed",
        }
    }

    pub fn is_renderable(self) -> bool {
        RENDERABLE.contains(&self)
    }

    pub fn is_centroid(self) -> bool {
        CENTROID_VARIANTS.contains(&self)
    }

    /// Renderable members averaged by a centroid variant.
    pub fn centroid_members(self) -> Option<Vec<FormatId>> {
        let cat = match self {
            FormatId::CentroidPopular => Category::Popular,
            FormatId::CentroidData => Category::Data,
            FormatId::CentroidStructural => Category::Structural,
            FormatId::CentroidSchema => Category::Schema,
            FormatId::CentroidAll => return Some(RENDERABLE.to_vec()),
            _ => return None,
        };
        Some(cat.members())
    }
}

impl Category {
    pub fn members(self) -> Vec<FormatId> {
        RENDERABLE
            .iter()
            .copied()
            .filter(|f| category_of(*f) == Ok(self))
            .collect()
    }

    pub fn centroid(self) -> FormatId {
        match self {
            Category::Popular => FormatId::CentroidPopular,
            Category::Data => FormatId::CentroidData,
            Category::Structural => FormatId::CentroidStructural,
            Category::Schema => FormatId::CentroidSchema,
        }
    }
}

pub fn category_of(f: FormatId) -> Result<Category, FormatError> {
    use FormatId::*;
    Ok(match f {
        Pipe | Token | Space => Category::Popular,
        Csv | Tsv | Html | Markdown | Latex | Dict | Json | Xml => Category::Data,
        ShuffledRows | ShuffledCols | Transpose => Category::Structural,
        MSchema | MacSchema | Ddl => Category::Schema,
        other => return Err(FormatError::NotRenderable(other)),
    })
}

impl fmt::Display for FormatId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormatId {
    type Err = FormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RENDERABLE
            .iter()
            .chain(CENTROID_VARIANTS.iter())
            .chain(std::iter::once(&FormatId::Mixed))
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| FormatError::Unknown(s.to_string()))
    }
}
