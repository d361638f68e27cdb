//! Structural scanner shared by the SMILES and SMARTS parsers.
//!
//! Branches, ring closures, bond symbols and dot-disconnects are handled
//! here; what an atom or bond token means is delegated to an [`AtomSyntax`].

use std::collections::BTreeMap;

use crate::molgraph::ParseError;

pub(crate) trait AtomSyntax {
    type Atom;
    type Bond: Copy;

    /// Whether `.` (disconnected fragments) is accepted.
    const ALLOW_DOT: bool;

    /// Parses an atom written outside brackets starting at `pos`. Returns the
    /// atom and the number of bytes consumed, or `None` when the byte does
    /// not start an atom.
    fn bare_atom(&self, s: &[u8], pos: usize) -> Result<Option<(Self::Atom, usize)>, ParseError>;

    /// Parses the text between `[` and `]`; `offset` is the position of `[`.
    fn bracket_atom(&self, body: &[u8], offset: usize) -> Result<Self::Atom, ParseError>;

    /// Maps a bond symbol; `Ok(None)` means the byte is not a bond symbol.
    fn bond(&self, c: u8, offset: usize) -> Result<Option<Self::Bond>, ParseError>;
}

#[derive(Debug, Clone)]
pub(crate) struct RawBond<B> {
    pub a: usize,
    pub b: usize,
    /// `None` when the bond was left implicit.
    pub bond: Option<B>,
    pub offset: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Skeleton<A, B> {
    pub atoms: Vec<A>,
    pub bonds: Vec<RawBond<B>>,
}

struct RingOpen<B> {
    atom: usize,
    bond: Option<B>,
    offset: usize,
}

pub(crate) fn scan<S: AtomSyntax>(
    syntax: &S,
    text: &str,
) -> Result<Skeleton<S::Atom, S::Bond>, ParseError> {
    if text.is_empty() {
        return Err(ParseError::EmptyInput);
    }
    if let Some(offset) = text.bytes().position(|b| !b.is_ascii()) {
        return Err(ParseError::NonAscii { offset });
    }
    let s = text.as_bytes();
    let mut atoms = Vec::new();
    let mut bonds = Vec::new();
    let mut prev: Option<usize> = None;
    let mut pending: Option<(S::Bond, usize)> = None;
    let mut branches: Vec<(usize, usize)> = Vec::new();
    let mut rings: BTreeMap<u16, RingOpen<S::Bond>> = BTreeMap::new();
    let mut pos = 0;

    let unexpected = |pos: usize| ParseError::UnexpectedCharacter {
        ch: s[pos] as char,
        offset: pos,
    };

    while pos < s.len() {
        let c = s[pos];
        match c {
            b'(' => {
                let Some(p) = prev else {
                    return Err(unexpected(pos));
                };
                branches.push((p, pos));
                pos += 1;
            }
            b')' => {
                let Some((p, _)) = branches.pop() else {
                    return Err(ParseError::UnclosedBranch { offset: pos });
                };
                if let Some((_, offset)) = pending {
                    return Err(ParseError::DanglingBond { offset });
                }
                prev = Some(p);
                pos += 1;
            }
            b'.' => {
                if !S::ALLOW_DOT {
                    return Err(ParseError::UnsupportedFeature {
                        feature: "disconnected fragments ('.')".into(),
                        offset: pos,
                    });
                }
                if let Some((_, offset)) = pending {
                    return Err(ParseError::DanglingBond { offset });
                }
                if prev.is_none() {
                    return Err(unexpected(pos));
                }
                prev = None;
                pos += 1;
            }
            b'0'..=b'9' | b'%' => {
                let start = pos;
                let label = if c == b'%' {
                    let digits = s.get(pos + 1..pos + 3).filter(|d| d.iter().all(u8::is_ascii_digit));
                    let Some(d) = digits else {
                        return Err(unexpected(pos));
                    };
                    pos += 3;
                    u16::from(d[0] - b'0') * 10 + u16::from(d[1] - b'0')
                } else {
                    pos += 1;
                    u16::from(c - b'0')
                };
                let Some(here) = prev else {
                    return Err(unexpected(start));
                };
                let bond_here = pending.take().map(|(b, _)| b);
                match rings.remove(&label) {
                    Some(open) => {
                        if open.atom == here {
                            return Err(ParseError::InvalidBond { offset: start });
                        }
                        bonds.push(RawBond {
                            a: open.atom,
                            b: here,
                            bond: bond_here.or(open.bond),
                            offset: start,
                        });
                    }
                    None => {
                        rings.insert(
                            label,
                            RingOpen {
                                atom: here,
                                bond: bond_here,
                                offset: start,
                            },
                        );
                    }
                }
            }
            b'[' => {
                let Some(len) = s[pos + 1..].iter().position(|&b| b == b']') else {
                    return Err(ParseError::UnclosedBracket { offset: pos });
                };
                let atom = syntax.bracket_atom(&s[pos + 1..pos + 1 + len], pos)?;
                add_atom(atom, pos, &mut atoms, &mut bonds, &mut prev, &mut pending)?;
                pos += len + 2;
            }
            _ => {
                if let Some(b) = syntax.bond(c, pos)? {
                    if pending.is_some() {
                        return Err(unexpected(pos));
                    }
                    pending = Some((b, pos));
                    pos += 1;
                } else if let Some((atom, used)) = syntax.bare_atom(s, pos)? {
                    add_atom(atom, pos, &mut atoms, &mut bonds, &mut prev, &mut pending)?;
                    pos += used;
                } else {
                    return Err(unexpected(pos));
                }
            }
        }
    }

    if let Some(&(_, offset)) = branches.last() {
        return Err(ParseError::UnclosedBranch { offset });
    }
    if let Some((&label, open)) = rings.iter().next() {
        return Err(ParseError::UnbalancedRingClosure {
            label,
            offset: open.offset,
        });
    }
    if let Some((_, offset)) = pending {
        return Err(ParseError::DanglingBond { offset });
    }
    Ok(Skeleton { atoms, bonds })
}

fn add_atom<A, B>(
    atom: A,
    offset: usize,
    atoms: &mut Vec<A>,
    bonds: &mut Vec<RawBond<B>>,
    prev: &mut Option<usize>,
    pending: &mut Option<(B, usize)>,
) -> Result<(), ParseError> {
    let idx = atoms.len();
    atoms.push(atom);
    match *prev {
        Some(p) => bonds.push(RawBond {
            a: p,
            b: idx,
            bond: pending.take().map(|(b, _)| b),
            offset,
        }),
        None => {
            if let Some((_, offset)) = pending.take() {
                return Err(ParseError::DanglingBond { offset });
            }
        }
    }
    *prev = Some(idx);
    Ok(())
}
