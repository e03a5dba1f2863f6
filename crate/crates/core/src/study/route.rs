use std::collections::HashSet;

use super::tolling::Direction;
use super::StudyError;

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: String,
    pub length_miles: f64,
}

/// Ordered chain of road segments making up one route in one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteSpec {
    route_id: String,
    direction: Direction,
    segments: Vec<Segment>,
}

impl RouteSpec {
    pub fn new(
        route_id: impl Into<String>,
        direction: Direction,
        segments: Vec<Segment>,
    ) -> Result<Self, StudyError> {
        let route_id = route_id.into();
        if segments.is_empty() {
            return Err(StudyError::Route(format!("route {route_id} has no segments")));
        }
        let mut seen = HashSet::new();
        for s in &segments {
            if !(s.length_miles.is_finite() && s.length_miles > 0.0) {
                return Err(StudyError::Route(format!(
                    "segment {} on {route_id} has non-positive length {}",
                    s.id, s.length_miles
                )));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(StudyError::Route(format!(
                    "segment {} appears twice on {route_id}",
                    s.id
                )));
            }
        }
        Ok(RouteSpec { route_id, direction, segments })
    }

    pub fn route_id(&self) -> &str {
        &self.route_id
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length_miles).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(id: &str, l: f64) -> Segment {
        Segment { id: id.into(), length_miles: l }
    }

    #[test]
    fn validates_segments() {
        let r = RouteSpec::new("I66", Direction::Eastbound, vec![seg("a", 2.0), seg("b", 3.0)]).unwrap();
        assert_eq!(r.total_length(), 5.0);
        assert!(RouteSpec::new("x", Direction::Eastbound, vec![]).is_err());
        assert!(RouteSpec::new("x", Direction::Eastbound, vec![seg("a", 0.0)]).is_err());
        assert!(RouteSpec::new("x", Direction::Eastbound, vec![seg("a", f64::NAN)]).is_err());
        assert!(RouteSpec::new("x", Direction::Eastbound, vec![seg("a", 1.0), seg("a", 1.0)]).is_err());
    }
}
