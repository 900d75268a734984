//! WKT subset: POINT, LINESTRING, POLYGON and MULTIPOLYGON, 2D only.

use std::fmt::Write;

use super::{Coord, Geometry, LineString, Polygon};
use crate::error::{Error, Result};

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::WktSyntax { offset: self.pos, message: message.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, ch: u8) -> Result<()> {
        match self.peek() {
            Some(c) if c == ch => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => self.err(format!("expected '{}', found '{}'", ch as char, c as char)),
            None => self.err(format!("expected '{}', found end of input", ch as char)),
        }
    }

    fn keyword(&mut self) -> Result<(usize, String)> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected geometry keyword");
        }
        let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_ascii_uppercase();
        Ok((start, word))
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && matches!(self.src[self.pos], b'0'..=b'9' | b'+' | b'-' | b'.' | b'e' | b'E')
        {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => {
                self.pos = start;
                self.err(if text.is_empty() {
                    "expected number".to_string()
                } else {
                    format!("invalid number `{text}`")
                })
            }
        }
    }

    fn coord(&mut self) -> Result<Coord> {
        let x = self.number()?;
        let y = self.number()?;
        match self.peek() {
            Some(b',') | Some(b')') => Ok(Coord::new(x, y)),
            Some(_) => self.err("only 2D coordinates are supported"),
            None => self.err("expected ',' or ')', found end of input"),
        }
    }

    fn coord_list(&mut self) -> Result<Vec<Coord>> {
        self.expect(b'(')?;
        let mut out = vec![self.coord()?];
        loop {
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                    out.push(self.coord()?);
                }
                Some(b')') => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some(c) => return self.err(format!("expected ',' or ')', found '{}'", c as char)),
                None => return self.err("expected ',' or ')', found end of input"),
            }
        }
    }

    fn list<T>(&mut self, mut item: impl FnMut(&mut Self) -> Result<T>) -> Result<Vec<T>> {
        self.expect(b'(')?;
        let mut out = vec![item(self)?];
        loop {
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                    out.push(item(self)?);
                }
                Some(b')') => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some(c) => return self.err(format!("expected ',' or ')', found '{}'", c as char)),
                None => return self.err("expected ',' or ')', found end of input"),
            }
        }
    }

    fn ring(&mut self) -> Result<Vec<Coord>> {
        let at = self.pos;
        let ring = self.coord_list()?;
        if ring.len() < 4 || ring[0] != ring[ring.len() - 1] {
            self.pos = at;
            return self.err("polygon ring must be closed with at least 4 points");
        }
        Ok(ring)
    }

    fn polygon(&mut self) -> Result<Polygon> {
        let at = self.pos;
        let mut rings = self.list(Self::ring)?;
        let exterior = rings.remove(0);
        Polygon::new(exterior, rings).map_err(|e| Error::WktSyntax {
            offset: at,
            message: e.to_string(),
        })
    }
}

/// Parses WKT text. Ring orientation is normalized on the way in.
pub fn parse_wkt(text: &str) -> Result<Geometry> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let (kw_at, kw) = p.keyword()?;
    let geom = match kw.as_str() {
        "POINT" => {
            p.expect(b'(')?;
            let c = p.coord()?;
            p.expect(b')')?;
            Geometry::Point(c)
        }
        "LINESTRING" => {
            let at = p.pos;
            let coords = p.coord_list()?;
            Geometry::LineString(LineString::new(coords).map_err(|e| Error::WktSyntax {
                offset: at,
                message: e.to_string(),
            })?)
        }
        "POLYGON" => Geometry::Polygon(p.polygon()?),
        "MULTIPOLYGON" => Geometry::MultiPolygon(p.list(Parser::polygon)?),
        _ => {
            let _ = kw_at;
            return Err(Error::UnsupportedGeometry(kw));
        }
    };
    if p.peek().is_some() {
        return p.err("trailing characters after geometry");
    }
    Ok(geom)
}

fn write_coords(out: &mut String, coords: &[Coord]) {
    out.push('(');
    for (i, c) in coords.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{} {}", c.x, c.y).unwrap();
    }
    out.push(')');
}

fn write_polygon(out: &mut String, p: &Polygon) {
    out.push('(');
    for (i, r) in p.rings().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_coords(out, r);
    }
    out.push(')');
}

/// Shortest round-trip decimal formatting; `parse_wkt(to_wkt(g)) == g`.
pub fn to_wkt(geom: &Geometry) -> String {
    let mut out = String::new();
    match geom {
        Geometry::Point(c) => write!(out, "POINT({} {})", c.x, c.y).unwrap(),
        Geometry::LineString(l) => {
            out.push_str("LINESTRING");
            write_coords(&mut out, l.coords());
        }
        Geometry::Polygon(p) => {
            out.push_str("POLYGON");
            write_polygon(&mut out, p);
        }
        Geometry::MultiPolygon(ps) => {
            out.push_str("MULTIPOLYGON(");
            for (i, p) in ps.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_polygon(&mut out, p);
            }
            out.push(')');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::line_length_km;
    use proptest::prelude::*;

    #[test]
    fn parses_the_basic_kinds() {
        let l = parse_wkt("LINESTRING(0 0,3 4)").unwrap().into_line_string().unwrap();
        assert_eq!(l.coords().len(), 2);
        assert_eq!(l.length_m(), 5.0);
        assert_eq!(line_length_km(&l), 0.005);

        let sq = parse_wkt("POLYGON((0 0,1 0,1 1,0 1,0 0))").unwrap().into_areal().unwrap();
        assert_eq!(sq.area_m2(), 1.0);

        assert_eq!(parse_wkt(" point ( 1.5  -2e3 ) ").unwrap(), Geometry::Point(Coord::new(1.5, -2000.0)));
    }

    #[test]
    fn unclosed_paren_reports_offset() {
        match parse_wkt("LINESTRING(0 0") {
            Err(Error::WktSyntax { offset, message }) => {
                assert_eq!(offset, 14);
                assert!(message.contains("end of input"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors() {
        for bad in [
            "LINESTRING 0 0, 1 1",
            "LINESTRING(0 0,1)",
            "POLYGON((0 0,1 0,1 1,0 0)",
            "POLYGON((0 0,1 0,1 1,0 1))",
            "POINT(1 2 3)",
            "LINESTRING(0 0,1 1) junk",
            "",
        ] {
            assert!(matches!(parse_wkt(bad), Err(Error::WktSyntax { .. })), "{bad}");
        }
        assert!(matches!(
            parse_wkt("MULTILINESTRING((0 0,1 1))"),
            Err(Error::UnsupportedGeometry(k)) if k == "MULTILINESTRING"
        ));
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let g = parse_wkt("POLYGON((0 0,0 1,1 1,1 0,0 0))").unwrap();
        assert_eq!(to_wkt(&g), "POLYGON((0 0,1 0,1 1,0 1,0 0))");
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(
            pts in prop::collection::vec((-1e7f64..1e7, -1e7f64..1e7), 2..20),
            holes in 0usize..2,
        ) {
            let coords: Vec<Coord> = pts.iter().map(|&(x, y)| Coord::new(x, y)).collect();
            if let Ok(l) = LineString::new(coords.clone()) {
                let g = Geometry::LineString(l);
                prop_assert_eq!(parse_wkt(&to_wkt(&g)).unwrap(), g);
            }
            // a box with optional inner box
            let (x0, y0) = pts[0];
            let w = pts[1].0.abs() + 10.0;
            let outer = Polygon::rect(x0, y0, x0 + w, y0 + w).unwrap();
            let inner: Vec<Vec<Coord>> = (0..holes)
                .map(|_| Polygon::rect(x0 + 1.0, y0 + 1.0, x0 + 2.0, y0 + 2.0).unwrap().exterior().to_vec())
                .collect();
            let g = Geometry::MultiPolygon(vec![
                Polygon::new(outer.exterior().to_vec(), inner).unwrap(),
                outer.translate(3.0 * w, 0.0),
            ]);
            let back = parse_wkt(&to_wkt(&g)).unwrap();
            prop_assert_eq!(back, g);
        }
    }
}
