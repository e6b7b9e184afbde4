use std::fmt;

use serde::{Deserialize, Serialize};

use super::Name;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypedParam {
    /// Variable name without the leading `?`.
    pub var: Name,
    pub ty: Name,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateDecl {
    pub name: Name,
    pub params: Vec<TypedParam>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Var(Name),
    Object(Name),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Object(o) => write!(f, "{o}"),
        }
    }
}

/// A (possibly negated) lifted atom.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub predicate: Name,
    pub args: Vec<Term>,
    pub positive: bool,
}

impl Literal {
    pub fn same_atom(&self, other: &Literal) -> bool {
        self.predicate == other.predicate && self.args == other.args
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.positive {
            f.write_str("(not ")?;
        }
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        f.write_str(")")?;
        if !self.positive {
            f.write_str(")")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSchema {
    pub name: Name,
    pub params: Vec<TypedParam>,
    pub precondition: Vec<Literal>,
    pub effect: Vec<Literal>,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub name: Name,
    pub requirements: Vec<Name>,
    pub types: Vec<Name>,
    pub predicates: Vec<PredicateDecl>,
    pub actions: Vec<ActionSchema>,
}

impl Domain {
    pub fn predicate(&self, name: &Name) -> Option<&PredicateDecl> {
        self.predicates.iter().find(|p| &p.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionSchema> {
        self.actions.iter().find(|a| a.name.eq_str(name))
    }

    pub fn has_type(&self, ty: &Name) -> bool {
        self.types.iter().any(|t| t == ty)
    }

    /// A copy restricted to the named actions, renamed.
    pub fn restricted(&self, name: &str, skills: &[Name]) -> Domain {
        Domain {
            name: Name::from(name),
            requirements: self.requirements.clone(),
            types: self.types.clone(),
            predicates: self.predicates.clone(),
            actions: self
                .actions
                .iter()
                .filter(|a| skills.contains(&a.name))
                .cloned()
                .collect(),
        }
    }
}

/// A predicate applied to a tuple of objects.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroundAtom {
    pub predicate: Name,
    pub args: Vec<Name>,
}

impl GroundAtom {
    pub fn new(predicate: &str, args: &[&str]) -> Self {
        GroundAtom {
            predicate: Name::from(predicate),
            args: args.iter().map(|a| Name::from(*a)).collect(),
        }
    }
}

/// Renders in functional form, `at(Robot2, Location1)`.
impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroundLiteral {
    pub atom: GroundAtom,
    pub positive: bool,
}

impl fmt::Display for GroundLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.positive { "" } else { "(not " };
        let close = if self.positive { "" } else { ")" };
        write!(f, "{open}({}", self.atom.predicate)?;
        for a in &self.atom.args {
            write!(f, " {a}")?;
        }
        write!(f, "){close}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypedObject {
    pub name: Name,
    pub ty: Name,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub name: Name,
    pub domain_name: Name,
    pub objects: Vec<TypedObject>,
    /// Positive atoms only; everything else is false.
    pub init: Vec<GroundAtom>,
    pub goal: Vec<GroundLiteral>,
}

impl Problem {
    pub fn object_type(&self, name: &Name) -> Option<&Name> {
        self.objects.iter().find(|o| &o.name == name).map(|o| &o.ty)
    }
}
